#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "sekge/geokg.hpp"
#include "sekge/query.hpp"

namespace sekge {

namespace detail {

inline std::vector<EntityIdx> intersect_sorted(const std::vector<EntityIdx>& a, const std::vector<EntityIdx>& b) {
  std::vector<EntityIdx> out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

// Backtracking over variables in topological order. Each variable's
// candidates are the intersection of the steps from its bound in-neighbors.
inline std::vector<EntityIdx> match(const GeoKG& kg, const ConjunctiveQuery& q) {
  if (q.edges.empty()) return {};
  const auto order = topological_order(q);
  const auto incoming = in_edges(q);
  std::vector<std::string> vars;
  for (const auto& n : order) {
    if (is_variable(n)) vars.push_back(n);
  }
  std::map<std::string, EntityIdx> bound;
  for (const auto& [n, e] : q.anchors) bound[n] = e;
  for (const auto& e : q.edges) {
    if (!is_variable(e.subject) && !bound.contains(e.subject)) return {};
  }
  std::set<EntityIdx> answers;
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    const std::string& var = vars[i];
    std::vector<EntityIdx> cand;
    bool first = true;
    for (const QueryEdge* e : incoming.at(var)) {
      const auto& s = kg.step(bound.at(e->subject), e->rel, e->dir);
      cand = first ? s : intersect_sorted(cand, s);
      first = false;
      if (cand.empty()) return;
    }
    if (i + 1 == vars.size()) {
      answers.insert(cand.begin(), cand.end());
      return;
    }
    for (EntityIdx c : cand) {
      bound[var] = c;
      rec(i + 1);
    }
    bound.erase(var);
  };
  rec(0);
  return {answers.begin(), answers.end()};
}

// Drops every edge whose object can no longer reach ?target.
inline ConjunctiveQuery prune_to_target(ConjunctiveQuery q) {
  std::set<std::string> reach{kTarget};
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& e : q.edges) {
      if (reach.contains(e.object) && reach.insert(e.subject).second) changed = true;
    }
  }
  std::erase_if(q.edges, [&](const QueryEdge& e) { return !reach.contains(e.object); });
  return q;
}

}  // namespace detail

/// phi(G, q): every entity the target variable can bind to.
inline std::vector<EntityIdx> bruteforce_answers(const GeoKG& kg, const ConjunctiveQuery& q) {
  return detail::match(kg, q);
}

/// The node where branches meet: the first node in topological order with
/// two or more incoming edges.
inline std::optional<std::string> intersection_node(const ConjunctiveQuery& q) {
  const auto incoming = in_edges(q);
  for (const auto& n : topological_order(q)) {
    auto it = incoming.find(n);
    if (it != incoming.end() && it->second.size() >= 2) return n;
  }
  return std::nullopt;
}

/// Answer sets of the relaxed queries that keep exactly one branch into the
/// intersection node. Empty when the query has no intersection.
inline std::vector<std::vector<EntityIdx>> branch_answers(const GeoKG& kg, const ConjunctiveQuery& q) {
  auto node = intersection_node(q);
  if (!node) return {};
  std::vector<std::size_t> branch_edges;
  for (std::size_t i = 0; i < q.edges.size(); ++i) {
    if (q.edges[i].object == *node) branch_edges.push_back(i);
  }
  std::vector<std::vector<EntityIdx>> out;
  for (std::size_t keep : branch_edges) {
    ConjunctiveQuery relaxed = q;
    relaxed.edges.clear();
    for (std::size_t i = 0; i < q.edges.size(); ++i) {
      if (q.edges[i].object == *node && i != keep) continue;
      relaxed.edges.push_back(q.edges[i]);
    }
    // a branch removed from ?target leaves its feeder chain dangling
    out.push_back(detail::match(kg, detail::prune_to_target(std::move(relaxed))));
  }
  return out;
}

/// Entities satisfying some branch of the query but not the whole query.
inline std::vector<EntityIdx> hard_negative_pool(const GeoKG& kg, const ConjunctiveQuery& q) {
  std::set<EntityIdx> partial;
  for (const auto& b : branch_answers(kg, q)) partial.insert(b.begin(), b.end());
  for (EntityIdx e : bruteforce_answers(kg, q)) partial.erase(e);
  return {partial.begin(), partial.end()};
}

}  // namespace sekge
