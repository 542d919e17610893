#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sekge/autodiff.hpp"
#include "sekge/entity_encoder.hpp"
#include "sekge/error.hpp"
#include "sekge/geokg.hpp"
#include "sekge/kg_io.hpp"
#include "sekge/model.hpp"
#include "sekge/operators.hpp"
#include "sekge/params.hpp"
#include "sekge/query.hpp"
#include "sekge/query_engine.hpp"
#include "sekge/rng.hpp"
#include "sekge/sampler.hpp"

namespace sekge {

/// An entity with a sampled part of its neighborhood, treated as a query
/// whose answer is the entity itself.
struct KGExample {
  EntityIdx entity = 0;
  std::vector<Neighbor> neighbors;
  std::vector<EntityIdx> negatives;
};

/// A training triple with negatives for both prediction directions.
struct LPExample {
  Triple triple;
  std::vector<EntityIdx> tail_negatives;
  std::vector<EntityIdx> head_negatives;
};

namespace detail {

inline void hinge_terms(Graph& g, std::vector<ad::Var>& terms, ad::Var pred, EntityIdx pos,
                        const std::vector<EntityIdx>& negs, double margin) {
  require(!negs.empty(), ErrorKind::EmptyNegatives, "training example without negatives");
  ad::Var sp = ad::cosine(g.tape, pred, g.entity(pos));
  for (EntityIdx n : negs) terms.push_back(ad::hinge(g.tape, margin, sp, ad::cosine(g.tape, pred, g.entity(n))));
}

}  // namespace detail

/// H_KG(e): projections of the sampled neighbors, pooled when there are several.
inline ad::Var kg_prediction(Graph& g, const KGExample& x) {
  require(!x.neighbors.empty(), ErrorKind::EmptyInput, "entity with no sampled neighbors");
  std::vector<ad::Var> parts;
  for (const auto& nb : x.neighbors) parts.push_back(project_entity(g, g.entity(nb.entity), nb.rel, nb.dir));
  return parts.size() == 1 ? parts[0] : intersect(g, parts, g.model().type_of(x.entity));
}

inline ad::Var loss_kg(Graph& g, std::span<const KGExample> batch, double margin) {
  std::vector<ad::Var> terms;
  for (const auto& x : batch) detail::hinge_terms(g, terms, kg_prediction(g, x), x.entity, x.negatives, margin);
  return ad::sum(g.tape, terms);
}

inline ad::Var loss_qa(Graph& g, std::span<const QAExample> batch, double margin) {
  std::vector<ad::Var> terms;
  for (const auto& x : batch) {
    require(x.answer.has_value(), ErrorKind::BadArgument, "training query without answer");
    detail::hinge_terms(g, terms, embed_query(g, x.query), *x.answer, scoring_negatives(x), margin);
  }
  return ad::sum(g.tape, terms);
}

inline ad::Var loss_lp(Graph& g, std::span<const LPExample> batch, double margin) {
  std::vector<ad::Var> terms;
  for (const auto& x : batch) {
    const auto& t = x.triple;
    detail::hinge_terms(g, terms, project_entity(g, g.entity(t.head), t.rel, Direction::Forward), t.tail, x.tail_negatives, margin);
    detail::hinge_terms(g, terms, project_entity(g, g.entity(t.tail), t.rel, Direction::Inverse), t.head, x.head_negatives, margin);
  }
  return ad::sum(g.tape, terms);
}

inline ad::Var loss_ssl(Graph& g, std::span<const SSLExample> batch, double margin) {
  std::vector<ad::Var> terms;
  for (const auto& x : batch) {
    ad::Var pred = project_location(g, g.footprint_point(ssl_source(x)), x.triple.rel, x.dir);
    detail::hinge_terms(g, terms, pred, ssl_target(x), x.negatives, margin);
  }
  return ad::sum(g.tape, terms);
}

// ---- example sampling -------------------------------------------------------

inline std::vector<EntityIdx> typed_negatives(const GeoKG& kg, TypeIdx type, const std::vector<EntityIdx>& exclude,
                                              std::size_t size, Rng& rng) {
  auto pool = type_matched_pool(kg, type, exclude);
  require(!pool.empty(), ErrorKind::EmptyNegativePool, "no type-matched negatives");
  return rng.sample(pool, size);
}

/// Entities that can host an L_KG example (nonempty neighborhood, and at
/// least one other entity of their type).
inline std::vector<EntityIdx> kg_example_entities(const GeoKG& kg) {
  std::vector<EntityIdx> out;
  for (EntityIdx e = 0; e < kg.num_entities(); ++e) {
    if (!kg.neighborhood_ref(e).empty() && kg.entities_of_type(kg.type_of(e)).size() > 1) out.push_back(e);
  }
  return out;
}

inline KGExample sample_kg_example(const GeoKG& kg, const std::vector<EntityIdx>& pool, std::size_t max_neighbors,
                                   std::size_t negatives, Rng& rng) {
  require(!pool.empty(), ErrorKind::EmptyInput, "no entity can host a neighborhood query");
  KGExample x;
  x.entity = pool[rng.index(pool.size())];
  const std::size_t n = 1 + rng.index(max_neighbors);
  x.neighbors = sample_neighborhood(kg, x.entity, n, rng);
  x.negatives = typed_negatives(kg, kg.type_of(x.entity), {x.entity}, negatives, rng);
  return x;
}

inline std::optional<LPExample> sample_lp_example(const GeoKG& kg, std::size_t negatives, Rng& rng) {
  const auto& ts = kg.triples();
  require(!ts.empty(), ErrorKind::EmptyInput, "no training triples");
  const Triple& t = ts[rng.index(ts.size())];
  auto tails = type_matched_pool(kg, kg.type_of(t.tail), kg.step(t.head, t.rel, Direction::Forward));
  auto heads = type_matched_pool(kg, kg.type_of(t.head), kg.step(t.tail, t.rel, Direction::Inverse));
  if (tails.empty() || heads.empty()) return std::nullopt;
  return LPExample{t, rng.sample(tails, negatives), rng.sample(heads, negatives)};
}

// ---- training loops ---------------------------------------------------------

struct TrainConfig {
  double margin = 1.0;
  AdamConfig adam;
  std::size_t batch_size = 16;
  std::size_t steps = 2000;
  std::size_t negatives = 10;      // L_KG, L_LP and L_SSL negatives per example
  std::size_t max_neighbors = 3;   // n drawn uniformly from 1..max_neighbors
  bool use_kg_loss = true;         // L_KG batches alternate with L_QA batches
  std::size_t checkpoint_every = 0;
  std::uint64_t seed = 0;

  nlohmann::json to_json() const {
    return {{"margin", margin},       {"learning_rate", adam.learning_rate},
            {"beta1", adam.beta1},    {"beta2", adam.beta2},
            {"epsilon", adam.epsilon}, {"batch_size", batch_size},
            {"steps", steps},         {"negatives", negatives},
            {"max_neighbors", max_neighbors}, {"use_kg_loss", use_kg_loss},
            {"checkpoint_every", checkpoint_every}, {"seed", seed}};
  }

  /// Overrides any field present in `j`.
  void merge(const nlohmann::json& j) {
    auto get = [&](const char* k, auto& field) {
      if (auto it = j.find(k); it != j.end()) field = it->get<std::decay_t<decltype(field)>>();
    };
    get("margin", margin);
    get("learning_rate", adam.learning_rate);
    get("beta1", adam.beta1);
    get("beta2", adam.beta2);
    get("epsilon", adam.epsilon);
    get("batch_size", batch_size);
    get("steps", steps);
    get("negatives", negatives);
    get("max_neighbors", max_neighbors);
    get("use_kg_loss", use_kg_loss);
    get("checkpoint_every", checkpoint_every);
    get("seed", seed);
  }

  void validate() const {
    require(margin > 0.0, ErrorKind::BadArgument, "margin must be positive");
    require(batch_size > 0 && negatives > 0 && max_neighbors > 0, ErrorKind::BadArgument, "sizes must be positive");
    require(adam.learning_rate > 0.0, ErrorKind::BadArgument, "learning rate must be positive");
  }

  std::string hash() const { return hex64(fnv1a64(to_json().dump())); }
};

struct HistoryRow {
  std::size_t step = 0;
  double loss_total = 0.0;      // sum of the latest batch value of every objective term
  double loss_component = 0.0;  // this step's batch value
  std::string component;        // which term this step optimized
  double wall_ms = 0.0;
};

struct History {
  std::vector<HistoryRow> rows;

  void write_csv(const fs::path& path) const {
    auto out = open_out(path);
    out << "step,loss_total,loss_component,wall_ms\n";
    out.precision(10);
    for (const auto& r : rows) out << r.step << ',' << r.loss_total << ',' << r.loss_component << ',' << r.wall_ms << '\n';
  }

  /// Mean loss_total over rows [begin, begin + n).
  double window_mean(std::size_t begin, std::size_t n) const {
    double s = 0.0;
    std::size_t c = 0;
    for (std::size_t i = begin; i < rows.size() && c < n; ++i, ++c) s += rows[i].loss_total;
    return c ? s / static_cast<double>(c) : 0.0;
  }
};

using StepCallback = std::function<void(std::size_t step, const Model&)>;

namespace detail {

// One optimizer step on whatever loss `build` records.
template <class Build>
double optimize_step(Model& m, Adam& opt, Rng& rng, Build&& build) {
  m.params().zero_grad();
  Graph g(m, m.params(), FootprintSampling::Random, &rng);
  ad::Var loss = build(g);
  const double value = g.tape.scalar(loss);
  require(std::isfinite(value), ErrorKind::NonFiniteLoss, "loss became " + std::to_string(value));
  g.tape.backward(loss);
  opt.step(m.params());
  return value;
}

class Clock {
 public:
  double ms() const {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

}  // namespace detail

/// Minimizes L_KG + L_QA, alternating one batch of each.
inline History train_qa(Model& m, const GeoKG& train, const std::vector<QAExample>& qa, const TrainConfig& cfg,
                        const StepCallback& on_checkpoint = {}) {
  cfg.validate();
  require(!qa.empty(), ErrorKind::EmptyInput, "no training queries");
  Rng rng(cfg.seed);
  Adam opt(cfg.adam);
  History h;
  detail::Clock clock;
  const auto kg_pool = kg_example_entities(train);
  const bool with_kg = cfg.use_kg_loss && !kg_pool.empty();
  double last_kg = 0.0;
  double last_qa = 0.0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const bool kg_step = with_kg && step % 2 == 0;
    double value = 0.0;
    if (kg_step) {
      std::vector<KGExample> batch;
      for (std::size_t i = 0; i < cfg.batch_size; ++i) {
        batch.push_back(sample_kg_example(train, kg_pool, cfg.max_neighbors, cfg.negatives, rng));
      }
      value = detail::optimize_step(m, opt, rng, [&](Graph& g) { return loss_kg(g, batch, cfg.margin); });
      last_kg = value;
    } else {
      std::vector<QAExample> batch;
      for (std::size_t i = 0; i < cfg.batch_size; ++i) batch.push_back(qa[rng.index(qa.size())]);
      value = detail::optimize_step(m, opt, rng, [&](Graph& g) { return loss_qa(g, batch, cfg.margin); });
      last_qa = value;
    }
    h.rows.push_back({step, last_kg + last_qa, value, kg_step ? "kg" : "qa", clock.ms()});
    if (on_checkpoint && cfg.checkpoint_every && (step + 1) % cfg.checkpoint_every == 0) on_checkpoint(step + 1, m);
  }
  return h;
}

/// Minimizes L_LP + L_SSL, alternating one batch of each. Negatives of the
/// lifting examples are redrawn from the training graph every step.
inline History train_ssl(Model& m, const GeoKG& train, const std::vector<SSLExample>& ssl, const TrainConfig& cfg,
                         const StepCallback& on_checkpoint = {}) {
  cfg.validate();
  require(!ssl.empty(), ErrorKind::EmptyInput, "no lifting examples");
  Rng rng(cfg.seed);
  Adam opt(cfg.adam);
  History h;
  detail::Clock clock;
  double last_lp = 0.0;
  double last_ssl = 0.0;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    const bool lp_step = step % 2 == 0;
    double value = 0.0;
    if (lp_step) {
      std::vector<LPExample> batch;
      for (std::size_t tries = 0; batch.size() < cfg.batch_size && tries < 20 * cfg.batch_size; ++tries) {
        if (auto x = sample_lp_example(train, cfg.negatives, rng)) batch.push_back(std::move(*x));
      }
      value = detail::optimize_step(m, opt, rng, [&](Graph& g) { return loss_lp(g, batch, cfg.margin); });
      last_lp = value;
    } else {
      std::vector<SSLExample> batch;
      for (std::size_t tries = 0; batch.size() < cfg.batch_size && tries < 20 * cfg.batch_size; ++tries) {
        SSLExample x = ssl[rng.index(ssl.size())];
        try {
          x.negatives = ssl_negatives(train, x.triple, x.dir, cfg.negatives, rng);
        } catch (const Error& e) {
          if (e.kind() != ErrorKind::EmptyNegativePool) throw;
          if (x.negatives.empty()) continue;
        }
        batch.push_back(std::move(x));
      }
      value = detail::optimize_step(m, opt, rng, [&](Graph& g) { return loss_ssl(g, batch, cfg.margin); });
      last_ssl = value;
    }
    h.rows.push_back({step, last_lp + last_ssl, value, lp_step ? "lp" : "ssl", clock.ms()});
    if (on_checkpoint && cfg.checkpoint_every && (step + 1) % cfg.checkpoint_every == 0) on_checkpoint(step + 1, m);
  }
  return h;
}

// ---- gradient checking ------------------------------------------------------

/// ||a - n|| / (||a|| + ||n||), zero when both vanish.
inline double relative_error(const Vec& analytic, const Vec& numeric) {
  require(analytic.size() == numeric.size(), ErrorKind::DimensionMismatch, "gradient length mismatch");
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  const double denom = std::sqrt(na) + std::sqrt(nn);
  return denom == 0.0 ? 0.0 : std::sqrt(diff) / denom;
}

struct GradCheckResult {
  double max_error = 0.0;
  std::map<std::string, double> per_group;
  double loss = 0.0;
};

using LossBuilder = std::function<ad::Var(Graph&)>;

/// Central differences against the tape's gradients for every parameter
/// group. Each evaluation reseeds the footprint rng so box draws repeat.
/// `analytic_scale` exists to confirm the checker flags a wrong gradient.
inline GradCheckResult grad_check(Model& m, const LossBuilder& loss, double eps = 1e-5, std::uint64_t draw_seed = 7,
                                  double analytic_scale = 1.0) {
  auto eval = [&](bool grads) {
    Rng rng(draw_seed);
    Graph g(m, m.params(), FootprintSampling::Random, &rng);
    ad::Var l = loss(g);
    if (grads) {
      m.params().zero_grad();
      g.tape.backward(l);
    }
    return g.tape.scalar(l);
  };
  GradCheckResult res;
  res.loss = eval(true);
  std::map<std::string, Vec> analytic;
  for (auto& [name, p] : m.params()) {
    analytic[name] = p.grad.data;
    for (auto& x : analytic[name]) x *= analytic_scale;
  }
  for (auto& [name, p] : m.params()) {
    Vec numeric(p.value.size());
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value.data[i];
      p.value.data[i] = orig + eps;
      const double up = eval(false);
      p.value.data[i] = orig - eps;
      const double down = eval(false);
      p.value.data[i] = orig;
      numeric[i] = (up - down) / (2.0 * eps);
    }
    const double err = relative_error(analytic[name], numeric);
    res.per_group[name] = err;
    res.max_error = std::max(res.max_error, err);
  }
  m.params().zero_grad();
  return res;
}

}  // namespace sekge
