#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "sekge/error.hpp"
#include "sekge/rng.hpp"

namespace sekge {

using Vec = std::vector<double>;

/// Dense row-major matrix. Vectors are stored as rows x 1.
/// Embedding tables store one entity per row.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vec data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  std::size_t size() const { return data.size(); }
  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  static Tensor identity(std::size_t n) {
    Tensor t(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
    return t;
  }

  /// Zero-mean uniform init with scale 1/sqrt(fan).
  static Tensor uniform(std::size_t r, std::size_t c, std::size_t fan, Rng& rng) {
    Tensor t(r, c);
    const double a = 1.0 / std::sqrt(static_cast<double>(fan));
    for (auto& x : t.data) x = rng.uniform(-a, a);
    return t;
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

/// Cosine similarity; both vectors must be nonzero and equally sized.
inline double cosine(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size(), ErrorKind::DimensionMismatch, "cosine operands differ in length");
  const double na = norm2(a);
  const double nb = norm2(b);
  require(na > 0.0 && nb > 0.0, ErrorKind::ZeroVector, "cosine of a zero vector");
  return dot(a, b) / (na * nb);
}

inline Vec matvec(const Tensor& m, std::span<const double> x) {
  require(m.cols == x.size(), ErrorKind::DimensionMismatch, "matvec shape");
  Vec y(m.rows, 0.0);
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* row = m.data.data() + r * m.cols;
    double s = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) s += row[c] * x[c];
    y[r] = s;
  }
  return y;
}

inline Vec l2_normalized(std::span<const double> v) {
  const double n = norm2(v);
  require(n > 0.0, ErrorKind::ZeroVector, "normalizing a zero vector");
  Vec out(v.begin(), v.end());
  for (auto& x : out) x /= n;
  return out;
}

inline Vec concat(std::span<const double> a, std::span<const double> b) {
  Vec out(a.begin(), a.end());
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

}  // namespace sekge
