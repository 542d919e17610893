#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "sekge/error.hpp"
#include "sekge/tensor.hpp"

namespace sekge {

/// A trainable array with its gradient accumulator.
struct Param {
  Tensor value;
  Tensor grad;

  explicit Param(Tensor v = {}) : value(std::move(v)), grad(value.rows, value.cols) {}
};

/// Named parameter arrays. std::map keeps addresses stable and iteration
/// order deterministic, which the optimizer and checkpoints rely on.
class ParamStore {
 public:
  Param& add(const std::string& name, Tensor value) {
    auto [it, inserted] = params_.insert_or_assign(name, Param(std::move(value)));
    return it->second;
  }

  bool contains(const std::string& name) const { return params_.contains(name); }

  Param& at(const std::string& name) {
    auto it = params_.find(name);
    require(it != params_.end(), ErrorKind::BadArgument, "no parameter named " + name);
    return it->second;
  }
  const Param& at(const std::string& name) const {
    auto it = params_.find(name);
    require(it != params_.end(), ErrorKind::BadArgument, "no parameter named " + name);
    return it->second;
  }

  Param* find(const std::string& name) {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : &it->second;
  }
  const Param* find(const std::string& name) const {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : &it->second;
  }

  void zero_grad() {
    for (auto& [name, p] : params_) p.grad.fill(0.0);
  }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.value.size();
    return n;
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }
  std::size_t size() const { return params_.size(); }

 private:
  std::map<std::string, Param> params_;
};

struct AdamConfig {
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam over every parameter of a store. Moment buffers are keyed by name.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  void step(ParamStore& store) {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (auto& [name, p] : store) {
      auto& m = m_[name];
      auto& v = v_[name];
      if (m.size() != p.value.size()) {
        m.assign(p.value.size(), 0.0);
        v.assign(p.value.size(), 0.0);
      }
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        const double g = p.grad.data[i];
        m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
        v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
        p.value.data[i] -= cfg_.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + cfg_.epsilon);
      }
    }
  }

  std::size_t steps() const { return t_; }

 private:
  AdamConfig cfg_;
  std::size_t t_ = 0;
  std::map<std::string, Vec> m_;
  std::map<std::string, Vec> v_;
};

}  // namespace sekge
