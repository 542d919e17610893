#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "sekge/entity_encoder.hpp"
#include "sekge/error.hpp"
#include "sekge/model.hpp"
#include "sekge/operators.hpp"
#include "sekge/query.hpp"

namespace sekge {

/// Phi(q): anchors are encoded, every in-edge projects its source, and nodes
/// with two or more in-edges are pooled by the intersection operator.
inline ad::Var embed_query(Graph& g, const ConjunctiveQuery& q, bool reverse_ties = false) {
  validate_query(q, g.model().vocab());
  const auto incoming = in_edges(q);
  std::map<std::string, ad::Var> emb;
  for (const auto& node : topological_order(q, reverse_ties)) {
    if (!is_variable(node)) {
      emb[node] = g.entity(q.anchors.at(node));
      continue;
    }
    std::vector<ad::Var> parts;
    for (const QueryEdge* e : incoming.at(node)) parts.push_back(project_entity(g, emb.at(e->subject), e->rel, e->dir));
    emb[node] = parts.size() == 1 ? parts[0] : intersect(g, parts, q.type_of_variable(node));
  }
  return emb.at(kTarget);
}

inline Vec embed_query(const Model& m, const ConjunctiveQuery& q) {
  Graph g = Graph::inference(m);
  return g.value(embed_query(g, q));
}

struct ScoredEntity {
  EntityIdx entity = 0;
  double score = 0.0;
  friend bool operator==(const ScoredEntity&, const ScoredEntity&) = default;
};

using RankedAnswers = std::vector<ScoredEntity>;

enum class CandidateSet {
  All,         // every entity
  Geographic,  // entities with a footprint
  TargetType,  // entities of the query's target type
};

inline std::string_view to_string(CandidateSet c) {
  switch (c) {
    case CandidateSet::All: return "all";
    case CandidateSet::Geographic: return "geo";
    case CandidateSet::TargetType: return "type";
  }
  return "all";
}

inline CandidateSet parse_candidates(std::string_view s) {
  if (s == "all") return CandidateSet::All;
  if (s == "geo") return CandidateSet::Geographic;
  if (s == "type") return CandidateSet::TargetType;
  fail(ErrorKind::BadArgument, "candidate set must be all, geo or type");
}

/// Deterministic (centroid) embeddings of every entity, computed once.
class EntityTable {
 public:
  EntityTable() = default;
  explicit EntityTable(const Model& m) {
    Graph g = Graph::inference(m);
    rows_.reserve(m.num_entities());
    for (EntityIdx e = 0; e < m.num_entities(); ++e) rows_.push_back(g.value(g.entity(e)));
  }
  const Vec& operator[](EntityIdx e) const { return rows_.at(e); }
  std::size_t size() const { return rows_.size(); }

 private:
  std::vector<Vec> rows_;
};

/// Scores candidates by cosine against `query`; top-k, descending, ties by index.
inline RankedAnswers rank_candidates(const Vec& query, const EntityTable& table, const std::function<bool(EntityIdx)>& keep,
                                     std::size_t k) {
  require(k >= 1, ErrorKind::BadArgument, "k must be at least 1");
  RankedAnswers out;
  for (EntityIdx e = 0; e < table.size(); ++e) {
    if (keep && !keep(e)) continue;
    out.push_back({e, cosine(query, table[e])});
  }
  auto cmp = [](const ScoredEntity& a, const ScoredEntity& b) {
    return a.score != b.score ? a.score > b.score : a.entity < b.entity;
  };
  const std::size_t n = std::min(k, out.size());
  std::partial_sort(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(n), out.end(), cmp);
  out.resize(n);
  return out;
}

inline std::function<bool(EntityIdx)> candidate_filter(const Model& m, CandidateSet c, TypeIdx type = 0) {
  switch (c) {
    case CandidateSet::All: return {};
    case CandidateSet::Geographic: return [&m](EntityIdx e) { return m.is_geo(e); };
    case CandidateSet::TargetType: return [&m, type](EntityIdx e) { return m.type_of(e) == type; };
  }
  return {};
}

inline RankedAnswers answer_query(const Model& m, const EntityTable& table, const ConjunctiveQuery& q, std::size_t k,
                                  CandidateSet c = CandidateSet::All) {
  return rank_candidates(embed_query(m, q), table, candidate_filter(m, c, q.target_type), k);
}

inline RankedAnswers answer_query(const Model& m, const ConjunctiveQuery& q, std::size_t k, CandidateSet c = CandidateSet::All) {
  return answer_query(m, EntityTable(m), q, k, c);
}

/// Spatial semantic lifting: rank entities against the location projection of x.
inline RankedAnswers lift(const Model& m, const EntityTable& table, Point2 x, RelationIdx r, Direction dir, std::size_t k,
                          CandidateSet c = CandidateSet::All) {
  return rank_candidates(project_location(m, x, r, dir), table, candidate_filter(m, c), k);
}

inline RankedAnswers lift(const Model& m, Point2 x, RelationIdx r, Direction dir, std::size_t k,
                          CandidateSet c = CandidateSet::All) {
  return lift(m, EntityTable(m), x, r, dir, k, c);
}

}  // namespace sekge
