#pragma once

#include <algorithm>
#include <cstdio>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sekge/entity_encoder.hpp"
#include "sekge/error.hpp"
#include "sekge/model.hpp"
#include "sekge/operators.hpp"
#include "sekge/query.hpp"
#include "sekge/query_engine.hpp"
#include "sekge/sampler.hpp"

namespace sekge {

struct RankObservation {
  double positive = 0.0;
  std::vector<double> negatives;
};

/// 100 * (#neg below + 0.5 * #neg tied) / #neg.
inline double percentile_rank(const RankObservation& obs) {
  require(!obs.negatives.empty(), ErrorKind::EmptyNegatives, "percentile rank needs negatives");
  double below = 0.0;
  for (double n : obs.negatives) {
    if (n < obs.positive) below += 1.0;
    else if (n == obs.positive) below += 0.5;
  }
  return 100.0 * below / static_cast<double>(obs.negatives.size());
}

inline double apr(std::span<const RankObservation> obs) {
  require(!obs.empty(), ErrorKind::EmptyInput, "no observations");
  double s = 0.0;
  for (const auto& o : obs) s += percentile_rank(o);
  return s / static_cast<double>(obs.size());
}

struct ScorePair {
  double positive = 0.0;
  double negative = 0.0;
};

/// ROC AUC of positives against negatives: the Mann-Whitney statistic with
/// half credit for ties, computed from midranks.
inline double auc(std::span<const ScorePair> pairs) {
  require(!pairs.empty(), ErrorKind::EmptyInput, "no score pairs");
  struct Item {
    double score;
    bool pos;
  };
  std::vector<Item> items;
  for (const auto& p : pairs) {
    items.push_back({p.positive, true});
    items.push_back({p.negative, false});
  }
  std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) ++j;
    const double midrank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t k = i; k < j; ++k) {
      if (items[k].pos) pos_rank_sum += midrank;
    }
    i = j;
  }
  const double n = static_cast<double>(pairs.size());
  return (pos_rank_sum - n * (n + 1.0) / 2.0) / (n * n);
}

struct ReportRow {
  std::string group;
  std::size_t count = 0;
  double auc = 0.0;
  double apr = 0.0;
};

struct EvalReport {
  std::vector<ReportRow> rows;  // per group, in a fixed order
  ReportRow overall;
  std::string config_hash;
  std::uint64_t seed = 0;
  nlohmann::json settings = nlohmann::json::object();

  nlohmann::json to_json() const {
    auto row = [](const ReportRow& r) {
      return nlohmann::json{{"group", r.group}, {"count", r.count}, {"auc", r.auc}, {"apr", r.apr}};
    };
    nlohmann::json groups = nlohmann::json::array();
    for (const auto& r : rows) groups.push_back(row(r));
    return {{"groups", groups}, {"overall", row(overall)}, {"config_hash", config_hash}, {"seed", seed}, {"settings", settings}};
  }

  /// Aligned-column table: group, count, AUC (x100), APR.
  std::string to_text() const {
    std::size_t w = 7;
    for (const auto& r : rows) w = std::max(w, r.group.size());
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s %8s %8s %8s\n", static_cast<int>(w), "group", "count", "AUC", "APR");
    out += buf;
    auto line = [&](const ReportRow& r) {
      std::snprintf(buf, sizeof buf, "%-*s %8zu %8.2f %8.2f\n", static_cast<int>(w), r.group.c_str(), r.count, 100.0 * r.auc, r.apr);
      out += buf;
    };
    for (const auto& r : rows) line(r);
    line(overall);
    return out;
  }
};

/// Accumulates observations per group and pools them for the overall row.
class ReportBuilder {
 public:
  void add(const std::string& group, const RankObservation& obs, ScorePair pair) {
    if (!groups_.contains(group)) order_.push_back(group);
    auto& g = groups_[group];
    g.first.push_back(obs);
    g.second.push_back(pair);
  }

  EvalReport build() const {
    EvalReport rep;
    std::vector<RankObservation> all_obs;
    std::vector<ScorePair> all_pairs;
    for (const auto& name : order_) {
      const auto& [obs, pairs] = groups_.at(name);
      rep.rows.push_back({name, obs.size(), auc(pairs), apr(obs)});
      all_obs.insert(all_obs.end(), obs.begin(), obs.end());
      all_pairs.insert(all_pairs.end(), pairs.begin(), pairs.end());
    }
    require(!all_obs.empty(), ErrorKind::EmptyInput, "nothing to evaluate");
    rep.overall = {"overall", all_obs.size(), auc(all_pairs), apr(all_obs)};
    return rep;
  }

 private:
  std::vector<std::string> order_;
  std::map<std::string, std::pair<std::vector<RankObservation>, std::vector<ScorePair>>> groups_;
};

/// Per-DAG APR/AUC. Hard-* queries are scored against their hard negatives,
/// the rest against type-matched negatives; the AUC negative is the first one.
inline EvalReport eval_qa(const Model& m, const std::vector<QAExample>& examples) {
  const EntityTable table(m);
  std::map<DagType, std::vector<const QAExample*>> by_dag;
  for (const auto& x : examples) by_dag[x.query.dag].push_back(&x);
  ReportBuilder rb;
  for (DagType dag : kAllDagTypes) {
    auto it = by_dag.find(dag);
    if (it == by_dag.end()) continue;
    for (const QAExample* x : it->second) {
      require(x->answer.has_value(), ErrorKind::BadArgument, "evaluation query without answer");
      const auto& negs = scoring_negatives(*x);
      const Vec q = embed_query(m, x->query);
      RankObservation obs{cosine(q, table[*x->answer]), {}};
      for (EntityIdx n : negs) obs.negatives.push_back(cosine(q, table[n]));
      rb.add(std::string(to_string(dag)), obs, {obs.positive, obs.negatives.at(0)});
    }
  }
  EvalReport rep = rb.build();
  rep.config_hash = m.config().hash();
  rep.seed = m.seed();
  rep.settings = {{"mode", to_string(m.config().mode)}, {"footprints", "centroid"}, {"candidates", "stored negatives"}};
  return rep;
}

/// Relation signature used to group lifting results.
inline std::string ssl_signature(const Vocabulary& v, RelationIdx r, Direction dir) {
  const auto& name = v.relation_names.at(r);
  return dir == Direction::Forward ? name + "(x, ?e)" : name + "(?e, x)";
}

/// Lifting evaluation: the source entity's footprint point is projected and
/// the true endpoint is ranked against the stored negatives.
inline EvalReport eval_ssl(const Model& m, const std::vector<SSLExample>& examples) {
  const EntityTable table(m);
  std::vector<const SSLExample*> sorted;
  for (const auto& x : examples) sorted.push_back(&x);
  std::stable_sort(sorted.begin(), sorted.end(), [](const SSLExample* a, const SSLExample* b) {
    return std::pair(a->triple.rel, a->dir) < std::pair(b->triple.rel, b->dir);
  });
  ReportBuilder rb;
  Graph g = Graph::inference(m);
  for (const SSLExample* x : sorted) {
    require(!x->negatives.empty(), ErrorKind::EmptyNegatives, "lifting example without negatives");
    const Vec s = project_location(m, g.footprint_point(ssl_source(*x)), x->triple.rel, x->dir);
    RankObservation obs{cosine(s, table[ssl_target(*x)]), {}};
    for (EntityIdx n : x->negatives) obs.negatives.push_back(cosine(s, table[n]));
    rb.add(ssl_signature(m.vocab(), x->triple.rel, x->dir), obs, {obs.positive, obs.negatives.at(0)});
  }
  EvalReport rep = rb.build();
  rep.config_hash = m.config().hash();
  rep.seed = m.seed();
  rep.settings = {{"mode", to_string(m.config().mode)}, {"footprints", "centroid"}, {"candidates", "stored negatives"}};
  return rep;
}

}  // namespace sekge
