#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string_view>
#include <vector>

#include "sekge/error.hpp"
#include "sekge/params.hpp"
#include "sekge/tensor.hpp"

// Minimal reverse-mode differentiation over vector-valued nodes. Every
// forward op records a closure that pushes its output gradient into its
// inputs and into any Param it reads. Nodes are appended in evaluation
// order, so reverse creation order is a valid backward schedule.
namespace sekge::ad {

struct Var {
  std::uint32_t id = std::numeric_limits<std::uint32_t>::max();
  bool valid() const { return id != std::numeric_limits<std::uint32_t>::max(); }
};

class Tape;
using BackwardFn = std::function<void(Tape&, const Vec& grad_out)>;

class Tape {
 public:
  Var constant(Vec value) { return push(std::move(value), nullptr); }

  Var node(Vec value, BackwardFn back) { return push(std::move(value), std::move(back)); }

  const Vec& value(Var v) const { return nodes_.at(v.id).value; }
  double scalar(Var v) const { return nodes_.at(v.id).value.at(0); }
  std::size_t size() const { return nodes_.size(); }

  /// Gradient buffer of `v`; valid during backward().
  Vec& grad(Var v) { return grads_.at(v.id); }

  /// Seeds d(root)/d(root) = 1 and propagates to every input and Param.
  void backward(Var root) {
    require(value(root).size() == 1, ErrorKind::DimensionMismatch, "backward root must be scalar");
    grads_.assign(nodes_.size(), Vec{});
    for (std::size_t i = 0; i < nodes_.size(); ++i) grads_[i].assign(nodes_[i].value.size(), 0.0);
    grads_[root.id][0] = 1.0;
    for (std::size_t i = root.id + 1; i-- > 0;) {
      if (!nodes_[i].back) continue;
      const Vec& g = grads_[i];
      bool any = false;
      for (double x : g) any = any || x != 0.0;
      if (any) nodes_[i].back(*this, g);
    }
  }

 private:
  struct Node {
    Vec value;
    BackwardFn back;
  };

  Var push(Vec value, BackwardFn back) {
    nodes_.push_back({std::move(value), std::move(back)});
    return Var{static_cast<std::uint32_t>(nodes_.size() - 1)};
  }

  std::vector<Node> nodes_;
  std::vector<Vec> grads_;
};

enum class Activation { Identity, Sigmoid, Relu, LeakyRelu };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::Identity: return "identity";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky-relu";
  }
  return "identity";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "identity") return Activation::Identity;
  if (s == "sigmoid") return Activation::Sigmoid;
  if (s == "relu") return Activation::Relu;
  if (s == "leaky-relu" || s == "leakyrelu") return Activation::LeakyRelu;
  fail(ErrorKind::ParseError, "unknown activation " + std::string(s));
}

constexpr double kLeakySlope = 0.01;

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-x));
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::LeakyRelu: return x > 0.0 ? x : kLeakySlope * x;
  }
  return x;
}

/// Derivative expressed through input x and output y.
inline double activate_grad(Activation a, double x, double y) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::Sigmoid: return y * (1.0 - y);
    case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::LeakyRelu: return x > 0.0 ? 1.0 : kLeakySlope;
  }
  return 1.0;
}

// ---- leaves ---------------------------------------------------------------

/// Row `r` of an embedding table.
inline Var param_row(Tape& tape, Param& p, std::size_t r) {
  require(r < p.value.rows, ErrorKind::DimensionMismatch, "embedding row out of range");
  auto row = p.value.row(r);
  return tape.node(Vec(row.begin(), row.end()), [&p, r](Tape&, const Vec& g) {
    auto gr = p.grad.row(r);
    for (std::size_t i = 0; i < g.size(); ++i) gr[i] += g[i];
  });
}

/// The whole parameter flattened into one vector.
inline Var param_vec(Tape& tape, Param& p) {
  return tape.node(p.value.data, [&p](Tape&, const Vec& g) {
    for (std::size_t i = 0; i < g.size(); ++i) p.grad.data[i] += g[i];
  });
}

// ---- linear algebra -------------------------------------------------------

inline Var matvec(Tape& tape, Param& w, Var x) {
  const Vec& xv = tape.value(x);
  require(w.value.cols == xv.size(), ErrorKind::DimensionMismatch, "matvec shape");
  return tape.node(sekge::matvec(w.value, xv), [&w, x](Tape& t, const Vec& g) {
    const Vec& xv = t.value(x);
    Vec& gx = t.grad(x);
    const std::size_t cols = w.value.cols;
    for (std::size_t r = 0; r < w.value.rows; ++r) {
      const double gr = g[r];
      if (gr == 0.0) continue;
      double* wg = w.grad.data.data() + r * cols;
      const double* wv = w.value.data.data() + r * cols;
      for (std::size_t c = 0; c < cols; ++c) {
        wg[c] += gr * xv[c];
        gx[c] += gr * wv[c];
      }
    }
  });
}

/// Elementwise product with a parameter vector (a diagonal matrix).
inline Var diag_mul(Tape& tape, Param& d, Var x) {
  const Vec& xv = tape.value(x);
  require(d.value.size() == xv.size(), ErrorKind::DimensionMismatch, "diagonal shape");
  Vec y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = d.value.data[i] * xv[i];
  return tape.node(std::move(y), [&d, x](Tape& t, const Vec& g) {
    const Vec& xv = t.value(x);
    Vec& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      d.grad.data[i] += g[i] * xv[i];
      gx[i] += g[i] * d.value.data[i];
    }
  });
}

inline Var add_bias(Tape& tape, Var x, Param& b) {
  Vec y = tape.value(x);
  require(b.value.size() == y.size(), ErrorKind::DimensionMismatch, "bias shape");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += b.value.data[i];
  return tape.node(std::move(y), [&b, x](Tape& t, const Vec& g) {
    Vec& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) {
      gx[i] += g[i];
      b.grad.data[i] += g[i];
    }
  });
}

inline Var add(Tape& tape, Var a, Var b) {
  Vec y = tape.value(a);
  const Vec& bv = tape.value(b);
  require(bv.size() == y.size(), ErrorKind::DimensionMismatch, "add shape");
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  return tape.node(std::move(y), [a, b](Tape& t, const Vec& g) {
    Vec& ga = t.grad(a);
    Vec& gb = t.grad(b);
    for (std::size_t i = 0; i < g.size(); ++i) {
      ga[i] += g[i];
      gb[i] += g[i];
    }
  });
}

inline Var activate(Tape& tape, Var x, Activation act) {
  if (act == Activation::Identity) return x;
  const Vec& xv = tape.value(x);
  Vec y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = activate(act, xv[i]);
  return tape.node(std::move(y), [x, act, out = tape.size()](Tape& t, const Vec& g) {
    const Vec& xv = t.value(x);
    const Vec& yv = t.value(Var{static_cast<std::uint32_t>(out)});
    Vec& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i] * activate_grad(act, xv[i], yv[i]);
  });
}

inline Var l2_normalize(Tape& tape, Var x) {
  const Vec& xv = tape.value(x);
  const double n = norm2(xv);
  require(n > 0.0, ErrorKind::ZeroVector, "normalizing a zero vector");
  Vec y(xv.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xv[i] / n;
  return tape.node(std::move(y), [x, n, out = tape.size()](Tape& t, const Vec& g) {
    const Vec& yv = t.value(Var{static_cast<std::uint32_t>(out)});
    Vec& gx = t.grad(x);
    const double yg = dot(yv, g);
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += (g[i] - yv[i] * yg) / n;
  });
}

inline Var concat(Tape& tape, Var a, Var b) {
  const std::size_t na = tape.value(a).size();
  return tape.node(sekge::concat(tape.value(a), tape.value(b)), [a, b, na](Tape& t, const Vec& g) {
    Vec& ga = t.grad(a);
    Vec& gb = t.grad(b);
    for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
    for (std::size_t i = na; i < g.size(); ++i) gb[i - na] += g[i];
  });
}

inline Var slice(Tape& tape, Var x, std::size_t offset, std::size_t len) {
  const Vec& xv = tape.value(x);
  require(offset + len <= xv.size(), ErrorKind::DimensionMismatch, "slice out of range");
  Vec y(xv.begin() + static_cast<std::ptrdiff_t>(offset), xv.begin() + static_cast<std::ptrdiff_t>(offset + len));
  return tape.node(std::move(y), [x, offset](Tape& t, const Vec& g) {
    Vec& gx = t.grad(x);
    for (std::size_t i = 0; i < g.size(); ++i) gx[offset + i] += g[i];
  });
}

// ---- set operators --------------------------------------------------------

inline void require_same_dims(const Tape& tape, std::span<const Var> xs) {
  require(!xs.empty(), ErrorKind::EmptyInput, "set operator needs at least one input");
  const std::size_t d = tape.value(xs[0]).size();
  for (Var x : xs) require(tape.value(x).size() == d, ErrorKind::DimensionMismatch, "set operator inputs differ in length");
}

/// Elementwise minimum; the gradient flows to the first minimizer.
inline Var elementwise_min(Tape& tape, std::span<const Var> xs) {
  require_same_dims(tape, xs);
  const std::size_t d = tape.value(xs[0]).size();
  Vec y = tape.value(xs[0]);
  std::vector<std::size_t> arg(d, 0);
  for (std::size_t j = 1; j < xs.size(); ++j) {
    const Vec& v = tape.value(xs[j]);
    for (std::size_t i = 0; i < d; ++i) {
      if (v[i] < y[i]) {
        y[i] = v[i];
        arg[i] = j;
      }
    }
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return tape.node(std::move(y), [inputs = std::move(inputs), arg = std::move(arg)](Tape& t, const Vec& g) {
    for (std::size_t i = 0; i < g.size(); ++i) t.grad(inputs[arg[i]])[i] += g[i];
  });
}

/// Softmax(<u, x_j>)-weighted sum of the inputs.
inline Var attention_pool(Tape& tape, std::span<const Var> xs, Param& u) {
  require_same_dims(tape, xs);
  const std::size_t d = tape.value(xs[0]).size();
  require(u.value.size() == d, ErrorKind::DimensionMismatch, "attention context shape");
  const std::size_t n = xs.size();
  Vec scores(n);
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < n; ++j) {
    scores[j] = dot(u.value.data, tape.value(xs[j]));
    mx = std::max(mx, scores[j]);
  }
  Vec alpha(n);
  double z = 0.0;
  for (std::size_t j = 0; j < n; ++j) z += alpha[j] = std::exp(scores[j] - mx);
  for (auto& a : alpha) a /= z;
  Vec y(d, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const Vec& v = tape.value(xs[j]);
    for (std::size_t i = 0; i < d; ++i) y[i] += alpha[j] * v[i];
  }
  std::vector<Var> inputs(xs.begin(), xs.end());
  return tape.node(std::move(y), [inputs = std::move(inputs), alpha = std::move(alpha), &u](Tape& t, const Vec& g) {
    const std::size_t n = inputs.size();
    Vec dalpha(n);
    double mean = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      dalpha[j] = dot(g, t.value(inputs[j]));
      mean += alpha[j] * dalpha[j];
    }
    for (std::size_t j = 0; j < n; ++j) {
      const double ds = alpha[j] * (dalpha[j] - mean);
      const Vec& v = t.value(inputs[j]);
      Vec& gv = t.grad(inputs[j]);
      for (std::size_t i = 0; i < g.size(); ++i) {
        gv[i] += alpha[j] * g[i] + ds * u.value.data[i];
        u.grad.data[i] += ds * v[i];
      }
    }
  });
}

// ---- scalar heads ---------------------------------------------------------

inline Var cosine(Tape& tape, Var a, Var b) {
  const Vec& av = tape.value(a);
  const Vec& bv = tape.value(b);
  const double c = sekge::cosine(av, bv);
  return tape.node(Vec{c}, [a, b, c](Tape& t, const Vec& g) {
    const Vec& av = t.value(a);
    const Vec& bv = t.value(b);
    const double na = norm2(av);
    const double nb = norm2(bv);
    Vec& ga = t.grad(a);
    Vec& gb = t.grad(b);
    for (std::size_t i = 0; i < av.size(); ++i) {
      ga[i] += g[0] * (bv[i] / (na * nb) - c * av[i] / (na * na));
      gb[i] += g[0] * (av[i] / (na * nb) - c * bv[i] / (nb * nb));
    }
  });
}

/// max(0, margin - pos + neg) over scalar nodes. At the kink the inactive
/// branch is taken.
inline Var hinge(Tape& tape, double margin, Var pos, Var neg) {
  const double z = margin - tape.scalar(pos) + tape.scalar(neg);
  const bool active = z > 0.0;
  return tape.node(Vec{active ? z : 0.0}, [pos, neg, active](Tape& t, const Vec& g) {
    if (!active) return;
    t.grad(pos)[0] -= g[0];
    t.grad(neg)[0] += g[0];
  });
}

inline Var sum(Tape& tape, std::span<const Var> xs) {
  double s = 0.0;
  for (Var x : xs) s += tape.scalar(x);
  std::vector<Var> inputs(xs.begin(), xs.end());
  return tape.node(Vec{s}, [inputs = std::move(inputs)](Tape& t, const Vec& g) {
    for (Var x : inputs) t.grad(x)[0] += g[0];
  });
}

}  // namespace sekge::ad
