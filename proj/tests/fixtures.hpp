#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "sekge/sekge.hpp"

namespace fixtures {

using namespace sekge;

inline StudyArea unit_area(double side = 1000.0) { return {{0.0, 0.0}, {side, side}}; }

/// A toy reconstruction of the "which city in Alameda County is the assembly
/// place of the Chevrolet Eagle and the nearest city to San Francisco Bay"
/// query graph: 15 entities, one answer (oakland) for all three patterns.
inline GeoKG bay_area_kg() {
  std::vector<EntityRecord> ents = {
      {"alameda_county", "County", Point2{400, 400}, Box{{300, 300}, {500, 500}}},
      {"sf_bay", "Water", Point2{250, 450}, std::nullopt},
      {"chevrolet_eagle", "Car", std::nullopt, std::nullopt},
      {"ford_model_t", "Car", std::nullopt, std::nullopt},
      {"oakland", "City", Point2{350, 450}, std::nullopt},
      {"berkeley", "City", Point2{340, 480}, std::nullopt},
      {"fremont", "City", Point2{450, 320}, std::nullopt},
      {"hayward", "City", Point2{420, 380}, std::nullopt},
      {"san_francisco", "City", Point2{200, 450}, std::nullopt},
      {"san_jose", "City", Point2{500, 200}, std::nullopt},
      {"flint", "City", Point2{900, 900}, std::nullopt},
      {"detroit", "City", Point2{880, 860}, std::nullopt},
      {"oakland_assembly", "Factory", Point2{352, 452}, std::nullopt},
      {"santa_clara_county", "County", Point2{500, 150}, Box{{450, 100}, {550, 250}}},
      {"ada_lovelace", "Person", std::nullopt, std::nullopt},
  };
  std::vector<RawTriple> ts = {
      {"oakland", "isPartOf", "alameda_county"},
      {"berkeley", "isPartOf", "alameda_county"},
      {"fremont", "isPartOf", "alameda_county"},
      {"hayward", "isPartOf", "alameda_county"},
      {"san_jose", "isPartOf", "santa_clara_county"},
      {"chevrolet_eagle", "assembly", "oakland"},
      {"chevrolet_eagle", "assembly", "flint"},
      {"chevrolet_eagle", "assembly", "oakland_assembly"},
      {"chevrolet_eagle", "assembly", "fremont"},
      {"ford_model_t", "assembly", "detroit"},
      {"sf_bay", "nearestCity", "san_francisco"},
      {"sf_bay", "nearestCity", "san_jose"},
      {"sf_bay", "nearestCity", "oakland"},
      {"sf_bay", "nearestCity", "berkeley"},
      {"ada_lovelace", "birthPlace", "san_francisco"},
  };
  return load_kg(ts, ents, unit_area());
}

/// ?target of type City: isPartOf(?target, alameda) ^ assembly(eagle, ?target) ^ nearestCity(bay, ?target).
inline ConjunctiveQuery bay_area_query(const GeoKG& kg) {
  ConjunctiveQuery q;
  q.dag = DagType::Inter3;
  q.target_type = *kg.find_type("City");
  q.edges = {{"a1", kg.relation("isPartOf"), Direction::Inverse, kTarget},
             {"a2", kg.relation("assembly"), Direction::Forward, kTarget},
             {"a3", kg.relation("nearestCity"), Direction::Forward, kTarget}};
  q.anchors = {{"a1", kg.entity("alameda_county")}, {"a2", kg.entity("chevrolet_eagle")}, {"a3", kg.entity("sf_bay")}};
  return q;
}

/// Ten entities over three types, with one box, for gradient checks.
inline GeoKG grad_kg() {
  std::vector<EntityRecord> ents = {
      {"r0", "Region", Point2{250, 250}, Box{{100, 100}, {400, 400}}},
      {"r1", "Region", Point2{750, 750}, Box{{600, 600}, {900, 900}}},
      {"p0", "Place", Point2{150, 300}, std::nullopt},
      {"p1", "Place", Point2{350, 120}, std::nullopt},
      {"p2", "Place", Point2{700, 800}, std::nullopt},
      {"p3", "Place", Point2{820, 640}, std::nullopt},
      {"a0", "Agent", std::nullopt, std::nullopt},
      {"a1", "Agent", std::nullopt, std::nullopt},
      {"a2", "Agent", std::nullopt, std::nullopt},
      {"a3", "Agent", std::nullopt, std::nullopt},
  };
  std::vector<RawTriple> ts = {
      {"p0", "isPartOf", "r0"}, {"p1", "isPartOf", "r0"}, {"p2", "isPartOf", "r1"}, {"p3", "isPartOf", "r1"},
      {"p0", "near", "p1"},     {"p2", "near", "p3"},     {"a0", "home", "p0"},     {"a1", "home", "p2"},
      {"a2", "home", "p3"},     {"a3", "home", "p1"},     {"a0", "knows", "a1"},    {"a2", "knows", "a3"},
      {"r0", "adjacentTo", "r1"},
  };
  return load_kg(ts, ents, unit_area());
}

/// Small model configuration, d = 8 for modes with both halves.
inline ModelConfig small_config(ModelMode mode, std::size_t half = 4, std::size_t scales = 4) {
  ModelConfig base;
  base.feat_dim = half;
  base.space_dim = half;
  base.loc.schedule = make_schedule(scales, 10.0, 2000.0);
  // baselines without a space half keep the same total d
  if (mode == ModelMode::Gqe || mode == ModelMode::GqeDiag || mode == ModelMode::Cga) base.feat_dim = 2 * half;
  return ModelConfig::for_mode(mode, base);
}

inline bool same_set(std::vector<EntityIdx> a, std::vector<EntityIdx> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  return a == b;
}

/// Independent evaluator: for each pattern, the set of entities matching it
/// on its own (anchors only, no variables besides ?target).
inline std::set<EntityIdx> pattern_matches(const GeoKG& kg, const ConjunctiveQuery& q, const QueryEdge& e) {
  std::set<EntityIdx> out;
  const EntityIdx a = q.anchors.at(e.subject);
  for (const auto& t : kg.triples()) {
    if (t.rel != e.rel) continue;
    if (e.dir == Direction::Forward && t.head == a) out.insert(t.tail);
    if (e.dir == Direction::Inverse && t.tail == a) out.insert(t.head);
  }
  return out;
}

/// Enumeration over all assignments of every variable: the answer set by
/// definition, using no graph indexes.
inline std::vector<EntityIdx> enumerate_answers(const GeoKG& kg, const ConjunctiveQuery& q) {
  std::set<std::pair<std::pair<EntityIdx, RelationIdx>, EntityIdx>> triples;
  for (const auto& t : kg.triples()) triples.insert({{t.head, t.rel}, t.tail});
  auto holds = [&](EntityIdx s, const QueryEdge& e, EntityIdx o) {
    return e.dir == Direction::Forward ? triples.contains({{s, e.rel}, o}) : triples.contains({{o, e.rel}, s});
  };
  std::vector<std::string> vars;
  for (const auto& n : query_nodes(q))
    if (is_variable(n)) vars.push_back(n);
  std::set<EntityIdx> answers;
  std::map<std::string, EntityIdx> bind = q.anchors;
  const auto n = static_cast<EntityIdx>(kg.num_entities());
  // an edge is checked as soon as both of its ends are bound
  auto consistent = [&](std::size_t bound_vars) {
    auto is_bound = [&](const std::string& node) {
      if (!is_variable(node)) return true;
      return std::find(vars.begin(), vars.begin() + bound_vars, node) != vars.begin() + bound_vars;
    };
    for (const auto& e : q.edges) {
      if (is_bound(e.subject) && is_bound(e.object) && !holds(bind.at(e.subject), e, bind.at(e.object))) return false;
    }
    return true;
  };
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == vars.size()) {
      answers.insert(bind.at(kTarget));
      return;
    }
    for (EntityIdx v = 0; v < n; ++v) {
      bind[vars[i]] = v;
      if (consistent(i + 1)) rec(i + 1);
    }
  };
  rec(0);
  return {answers.begin(), answers.end()};
}

/// Number of patterns of `q` satisfied with ?target bound to `x`, existentially
/// over the other variables (by enumeration).
inline std::size_t patterns_satisfied(const GeoKG& kg, const ConjunctiveQuery& q, EntityIdx x) {
  std::size_t best = 0;
  std::vector<std::string> vars;
  for (const auto& n : query_nodes(q))
    if (is_variable(n) && n != kTarget) vars.push_back(n);
  std::map<std::string, EntityIdx> bind = q.anchors;
  bind[kTarget] = x;
  const auto n = static_cast<EntityIdx>(kg.num_entities());
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == vars.size()) {
      std::size_t c = 0;
      for (const auto& e : q.edges) c += kg.has_edge(bind.at(e.subject), e.rel, e.dir, bind.at(e.object));
      best = std::max(best, c);
      return;
    }
    for (EntityIdx v = 0; v < n; ++v) {
      bind[vars[i]] = v;
      rec(i + 1);
    }
  };
  rec(0);
  return best;
}

/// Phi(q) written out per DAG shape with the value-level operators.
inline Vec manual_embedding(const Model& m, const ConjunctiveQuery& q) {
  auto edge = [&](const std::string& s, const std::string& o) -> const QueryEdge& {
    for (const auto& e : q.edges) {
      if (e.subject == s && e.object == o) return e;
    }
    throw std::runtime_error("no edge " + s + " -> " + o);
  };
  auto from = [&](const std::string& a, const std::string& o) {
    const auto& e = edge(a, o);
    return project_entity(m, encode_entity(m, q.anchors.at(a)), e.rel, e.dir);
  };
  auto P = [&](const Vec& v, const std::string& s, const std::string& o) {
    const auto& e = edge(s, o);
    return project_entity(m, v, e.rel, e.dir);
  };
  const std::string t = kTarget;
  switch (q.dag) {
    case DagType::Chain2: return P(from("a1", "?v1"), "?v1", t);
    case DagType::Chain3: return P(P(from("a1", "?v1"), "?v1", "?v2"), "?v2", t);
    case DagType::Inter2:
    case DagType::HardInter2: return intersect(m, {from("a1", t), from("a2", t)}, q.target_type);
    case DagType::Inter3:
    case DagType::HardInter3: return intersect(m, {from("a1", t), from("a2", t), from("a3", t)}, q.target_type);
    case DagType::InterChain3:
    case DagType::HardInterChain3: return intersect(m, {P(from("a1", "?v1"), "?v1", t), from("a2", t)}, q.target_type);
    case DagType::ChainInter3:
    case DagType::HardChainInter3:
      return P(intersect(m, {from("a1", "?v1"), from("a2", "?v1")}, q.var_types.at("?v1")), "?v1", t);
  }
  return {};
}

/// Synthetic KG and split used by several suites.
// Hand-written queries on the ten-entity graph; r0 is a box entity.
inline std::vector<QAExample> grad_queries(const GeoKG& kg) {
  QAExample chain;
  chain.query.dag = DagType::Chain2;
  chain.query.target_type = *kg.find_type("Region");
  chain.query.edges = {{"a1", kg.relation("home"), Direction::Forward, "?v1"},
                       {"?v1", kg.relation("isPartOf"), Direction::Forward, kTarget}};
  chain.query.anchors = {{"a1", kg.entity("a0")}};
  chain.query.var_types = {{"?v1", *kg.find_type("Place")}};
  chain.answer = kg.entity("r0");
  chain.negatives = {kg.entity("r1")};

  QAExample inter;
  inter.query.dag = DagType::HardInter2;
  inter.query.target_type = *kg.find_type("Place");
  inter.query.edges = {{"a1", kg.relation("isPartOf"), Direction::Inverse, kTarget},
                       {"a2", kg.relation("home"), Direction::Forward, kTarget}};
  inter.query.anchors = {{"a1", kg.entity("r0")}, {"a2", kg.entity("a3")}};
  inter.answer = kg.entity("p1");
  inter.negatives = {kg.entity("p2"), kg.entity("p3")};
  inter.hard_negatives = {kg.entity("p0")};
  return {chain, inter};
}

inline std::vector<KGExample> grad_kg_examples(const GeoKG& kg) {
  const auto p0 = kg.entity("p0");
  const auto r0 = kg.entity("r0");
  return {{p0, kg.neighborhood(p0), {kg.entity("p2"), kg.entity("p3")}},
          {r0, {kg.neighborhood(r0).front()}, {kg.entity("r1")}}};
}

inline std::vector<LPExample> grad_lp_examples(const GeoKG& kg) {
  return {{{kg.entity("a1"), kg.relation("home"), kg.entity("p2")}, {kg.entity("p0"), kg.entity("r1")}, {kg.entity("a3")}},
          {{kg.entity("p0"), kg.relation("isPartOf"), kg.entity("r0")}, {kg.entity("r1")}, {kg.entity("p3")}}};
}

inline std::vector<SSLExample> grad_ssl_examples(const GeoKG& kg) {
  return {{{kg.entity("p0"), kg.relation("isPartOf"), kg.entity("r0")}, Direction::Forward, {kg.entity("r1")}},
          {{kg.entity("p2"), kg.relation("near"), kg.entity("p3")}, Direction::Inverse, {kg.entity("p1"), kg.entity("r1")}},
          {{kg.entity("r0"), kg.relation("adjacentTo"), kg.entity("r1")}, Direction::Forward, {kg.entity("p2")}}};
}

struct SynthSetup {
  GeoKG kg;
  KGSplit split;
};

inline SynthSetup synth_setup(std::uint64_t seed = 42, SynthConfig cfg = {}) {
  auto s = synth_geokg(cfg, seed);
  SynthSetup out{load_kg(s.triples, s.entities, s.area), {}};
  out.split = split_kg(out.kg, parse_ratio("90:1:9"), seed);
  return out;
}

}  // namespace fixtures
