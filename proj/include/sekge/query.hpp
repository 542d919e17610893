#pragma once

#include <algorithm>
#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "sekge/error.hpp"
#include "sekge/geokg.hpp"

namespace sekge {

/// The ten query DAG structures. Hard-* variants share the shape of their
/// plain counterparts and are trained and scored against hard negatives.
enum class DagType {
  Chain2,
  Chain3,
  Inter2,
  Inter3,
  InterChain3,
  ChainInter3,
  HardInter2,
  HardInter3,
  HardInterChain3,
  HardChainInter3,
};

inline constexpr std::array<DagType, 10> kAllDagTypes = {
    DagType::Chain2,      DagType::Chain3,          DagType::Inter2,          DagType::Inter3,
    DagType::InterChain3, DagType::ChainInter3,     DagType::HardInter2,      DagType::HardInter3,
    DagType::HardInterChain3, DagType::HardChainInter3,
};

inline std::string_view to_string(DagType t) {
  switch (t) {
    case DagType::Chain2: return "2-chain";
    case DagType::Chain3: return "3-chain";
    case DagType::Inter2: return "2-inter";
    case DagType::Inter3: return "3-inter";
    case DagType::InterChain3: return "3-inter_chain";
    case DagType::ChainInter3: return "3-chain_inter";
    case DagType::HardInter2: return "Hard-2-inter";
    case DagType::HardInter3: return "Hard-3-inter";
    case DagType::HardInterChain3: return "Hard-3-inter_chain";
    case DagType::HardChainInter3: return "Hard-3-chain_inter";
  }
  return "2-chain";
}

inline DagType parse_dag(std::string_view s) {
  for (auto t : kAllDagTypes) {
    if (to_string(t) == s) return t;
  }
  fail(ErrorKind::MalformedQuery, "unknown DAG type " + std::string(s));
}

inline bool is_hard(DagType t) {
  return t == DagType::HardInter2 || t == DagType::HardInter3 || t == DagType::HardInterChain3 ||
         t == DagType::HardChainInter3;
}

inline const std::string kTarget = "?target";

/// (subject, object) node labels of a shape, listed so that every edge's
/// subject is bound before it is used.
inline std::vector<std::pair<std::string, std::string>> dag_shape(DagType t) {
  switch (t) {
    case DagType::Chain2: return {{"a1", "?v1"}, {"?v1", kTarget}};
    case DagType::Chain3: return {{"a1", "?v1"}, {"?v1", "?v2"}, {"?v2", kTarget}};
    case DagType::Inter2:
    case DagType::HardInter2: return {{"a1", kTarget}, {"a2", kTarget}};
    case DagType::Inter3:
    case DagType::HardInter3: return {{"a1", kTarget}, {"a2", kTarget}, {"a3", kTarget}};
    case DagType::InterChain3:
    case DagType::HardInterChain3: return {{"a1", "?v1"}, {"?v1", kTarget}, {"a2", kTarget}};
    case DagType::ChainInter3:
    case DagType::HardChainInter3: return {{"a1", "?v1"}, {"a2", "?v1"}, {"?v1", kTarget}};
  }
  return {};
}

inline bool is_variable(std::string_view node) { return !node.empty() && node.front() == '?'; }

/// One basic graph pattern: following (rel, dir) from subject reaches object.
/// dir = fwd means the triple (subject, rel, object); inv means (object, rel, subject).
struct QueryEdge {
  std::string subject;
  RelationIdx rel = 0;
  Direction dir = Direction::Forward;
  std::string object;
  friend bool operator==(const QueryEdge&, const QueryEdge&) = default;
};

struct ConjunctiveQuery {
  DagType dag = DagType::Chain2;
  TypeIdx target_type = 0;
  std::vector<QueryEdge> edges;
  std::map<std::string, EntityIdx> anchors;
  std::map<std::string, TypeIdx> var_types;  // bound variables; needed where they host an intersection

  TypeIdx type_of_variable(const std::string& node) const {
    if (node == kTarget) return target_type;
    auto it = var_types.find(node);
    require(it != var_types.end(), ErrorKind::MalformedQuery, "no type for variable " + node);
    return it->second;
  }

  friend bool operator==(const ConjunctiveQuery&, const ConjunctiveQuery&) = default;
};

struct QAExample {
  ConjunctiveQuery query;
  std::optional<EntityIdx> answer;
  std::vector<EntityIdx> negatives;
  std::vector<EntityIdx> hard_negatives;
  friend bool operator==(const QAExample&, const QAExample&) = default;
};

/// Hard-* examples are trained and scored against their hard negatives.
inline const std::vector<EntityIdx>& scoring_negatives(const QAExample& x) {
  return is_hard(x.query.dag) && !x.hard_negatives.empty() ? x.hard_negatives : x.negatives;
}

/// Every node label that appears in the query, sorted.
inline std::vector<std::string> query_nodes(const ConjunctiveQuery& q) {
  std::set<std::string> s;
  for (const auto& e : q.edges) {
    s.insert(e.subject);
    s.insert(e.object);
  }
  return {s.begin(), s.end()};
}

/// Kahn's algorithm. Ties are broken by label order, or reversed label order
/// when `reverse_ties` is set (used to check order independence).
inline std::vector<std::string> topological_order(const ConjunctiveQuery& q, bool reverse_ties = false) {
  const auto nodes = query_nodes(q);
  std::map<std::string, int> indeg;
  for (const auto& n : nodes) indeg[n] = 0;
  for (const auto& e : q.edges) ++indeg[e.object];
  std::set<std::string> ready;
  for (const auto& [n, d] : indeg) {
    if (d == 0) ready.insert(n);
  }
  std::vector<std::string> order;
  while (!ready.empty()) {
    auto it = reverse_ties ? std::prev(ready.end()) : ready.begin();
    std::string n = *it;
    ready.erase(it);
    order.push_back(n);
    for (const auto& e : q.edges) {
      if (e.subject == n && --indeg[e.object] == 0) ready.insert(e.object);
    }
  }
  require(order.size() == nodes.size(), ErrorKind::CyclicQuery, "query graph has a cycle");
  return order;
}

/// Structural checks: acyclic, objects are variables, the only sink is
/// ?target, anchors are bound to known entities and relations are known.
inline void validate_query(const ConjunctiveQuery& q, const Vocabulary& vocab) {
  require(!q.edges.empty(), ErrorKind::MalformedQuery, "query has no edges");
  require(q.target_type < vocab.type_names.size(), ErrorKind::UnknownType, "target type index out of range");
  std::set<std::string> has_out;
  for (const auto& e : q.edges) {
    require(is_variable(e.object), ErrorKind::MalformedQuery, "edge object " + e.object + " is not a variable");
    require(e.subject != e.object, ErrorKind::CyclicQuery, "self loop on " + e.subject);
    require(e.rel < vocab.relation_names.size(), ErrorKind::UnknownRelation, "relation index out of range");
    if (!is_variable(e.subject)) {
      auto it = q.anchors.find(e.subject);
      require(it != q.anchors.end(), ErrorKind::UnknownAnchor, "anchor " + e.subject + " is not bound");
      require(it->second < vocab.entity_names.size(), ErrorKind::UnknownAnchor, "anchor " + e.subject + " is unknown");
    }
    has_out.insert(e.subject);
  }
  topological_order(q);
  std::vector<std::string> sinks;
  for (const auto& n : query_nodes(q)) {
    if (!has_out.contains(n)) sinks.push_back(n);
  }
  require(sinks.size() == 1, ErrorKind::MultipleSinks, "query must have exactly one sink, found " + std::to_string(sinks.size()));
  require(sinks[0] == kTarget, ErrorKind::MalformedQuery, "the sink must be " + kTarget);
}

/// Incoming edges of each node, in edge-list order.
inline std::map<std::string, std::vector<const QueryEdge*>> in_edges(const ConjunctiveQuery& q) {
  std::map<std::string, std::vector<const QueryEdge*>> m;
  for (const auto& e : q.edges) m[e.object].push_back(&e);
  return m;
}

// ---- JSON -------------------------------------------------------------------

inline nlohmann::json query_to_json(const QAExample& ex, const Vocabulary& v) {
  const auto& q = ex.query;
  nlohmann::json edges = nlohmann::json::array();
  for (const auto& e : q.edges) edges.push_back({e.subject, v.relation_names.at(e.rel), to_string(e.dir), e.object});
  nlohmann::json anchors = nlohmann::json::object();
  for (const auto& [n, e] : q.anchors) anchors[n] = v.entity_names.at(e);
  auto names = [&](const std::vector<EntityIdx>& es) {
    nlohmann::json a = nlohmann::json::array();
    for (auto e : es) a.push_back(v.entity_names.at(e));
    return a;
  };
  nlohmann::json j = {
      {"dag", to_string(q.dag)},
      {"target_type", v.type_names.at(q.target_type)},
      {"edges", edges},
      {"anchors", anchors},
      {"answer", ex.answer ? nlohmann::json(v.entity_names.at(*ex.answer)) : nlohmann::json(nullptr)},
      {"negatives", names(ex.negatives)},
      {"hard_negatives", names(ex.hard_negatives)},
  };
  if (!q.var_types.empty()) {
    nlohmann::json vt = nlohmann::json::object();
    for (const auto& [n, t] : q.var_types) vt[n] = v.type_names.at(t);
    j["var_types"] = vt;
  }
  return j;
}

namespace detail {
inline const nlohmann::json& field(const nlohmann::json& j, const char* name) {
  require(j.is_object(), ErrorKind::MalformedQuery, "query must be a JSON object");
  auto it = j.find(name);
  require(it != j.end(), ErrorKind::MalformedQuery, std::string("missing field \"") + name + "\"");
  return *it;
}

inline std::string str(const nlohmann::json& j, const std::string& what) {
  require(j.is_string(), ErrorKind::MalformedQuery, what + " must be a string");
  return j.get<std::string>();
}

inline EntityIdx entity_named(const Vocabulary& v, const std::string& name, ErrorKind kind) {
  auto it = v.entity_index.find(name);
  require(it != v.entity_index.end(), kind, "unknown entity " + name);
  return it->second;
}

inline TypeIdx type_named(const Vocabulary& v, const std::string& name) {
  auto it = v.type_index.find(name);
  require(it != v.type_index.end(), ErrorKind::UnknownType, "unknown type " + name);
  return it->second;
}
}  // namespace detail

/// Parses and validates one query object.
inline QAExample query_from_json(const nlohmann::json& j, const Vocabulary& v) {
  using detail::field;
  using detail::str;
  QAExample ex;
  auto& q = ex.query;
  q.dag = parse_dag(str(field(j, "dag"), "dag"));
  q.target_type = detail::type_named(v, str(field(j, "target_type"), "target_type"));
  const auto& edges = field(j, "edges");
  require(edges.is_array(), ErrorKind::MalformedQuery, "edges must be an array");
  for (const auto& e : edges) {
    require(e.is_array() && e.size() == 4, ErrorKind::MalformedQuery, "each edge is [subject, relation, dir, object]");
    QueryEdge qe;
    qe.subject = str(e[0], "edge subject");
    const auto rel = str(e[1], "edge relation");
    auto rit = v.relation_index.find(rel);
    require(rit != v.relation_index.end(), ErrorKind::UnknownRelation, "unknown relation " + rel);
    qe.rel = rit->second;
    const auto dir = str(e[2], "edge dir");
    require(dir == "fwd" || dir == "inv", ErrorKind::MalformedQuery, "dir must be fwd or inv");
    qe.dir = parse_direction(dir);
    qe.object = str(e[3], "edge object");
    q.edges.push_back(std::move(qe));
  }
  const auto& anchors = field(j, "anchors");
  require(anchors.is_object(), ErrorKind::MalformedQuery, "anchors must be an object");
  for (const auto& [n, e] : anchors.items()) {
    q.anchors[n] = detail::entity_named(v, str(e, "anchor " + n), ErrorKind::UnknownAnchor);
  }
  if (auto it = j.find("var_types"); it != j.end() && !it->is_null()) {
    require(it->is_object(), ErrorKind::MalformedQuery, "var_types must be an object");
    for (const auto& [n, t] : it->items()) q.var_types[n] = detail::type_named(v, str(t, "var type"));
  }
  if (auto it = j.find("answer"); it != j.end() && !it->is_null()) {
    ex.answer = detail::entity_named(v, str(*it, "answer"), ErrorKind::UnknownEntity);
  }
  for (const char* key : {"negatives", "hard_negatives"}) {
    auto it = j.find(key);
    if (it == j.end() || it->is_null()) continue;
    require(it->is_array(), ErrorKind::MalformedQuery, std::string(key) + " must be an array");
    auto& out = std::string_view(key) == "negatives" ? ex.negatives : ex.hard_negatives;
    for (const auto& e : *it) out.push_back(detail::entity_named(v, str(e, key), ErrorKind::UnknownEntity));
  }
  validate_query(q, v);
  return ex;
}

}  // namespace sekge
