#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <vector>

namespace sekge {

// Thin wrapper over mt19937_64 whose derived draws do not depend on the
// standard library's distribution implementations, so streams are
// reproducible across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). n must be positive.
  std::size_t index(std::size_t n) {
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % bound;
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
  }

  /// Independent child stream; the parent advances by one draw.
  Rng split() {
    std::uint64_t s = next();
    // splitmix64 finalizer decorrelates adjacent child seeds
    s += 0x9e3779b97f4a7c15ULL;
    s = (s ^ (s >> 30)) * 0xbf58476d1ce4e5b9ULL;
    s = (s ^ (s >> 27)) * 0x94d049bb133111ebULL;
    return Rng(s ^ (s >> 31));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[index(i)]);
    }
  }

  /// k distinct items drawn uniformly without replacement (all of them if k >= size).
  template <typename T>
  std::vector<T> sample(const std::vector<T>& pool, std::size_t k) {
    if (k >= pool.size()) return pool;
    std::vector<std::size_t> idx(pool.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::vector<T> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = i + index(idx.size() - i);
      std::swap(idx[i], idx[j]);
      out.push_back(pool[idx[i]]);
    }
    return out;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sekge
