#pragma once

#include <span>
#include <vector>

#include "sekge/autodiff.hpp"
#include "sekge/entity_encoder.hpp"
#include "sekge/error.hpp"
#include "sekge/model.hpp"

namespace sekge {

/// P(v; r, dir). Block mode acts on the feature and space halves separately.
inline ad::Var project_entity(Graph& g, ad::Var v, RelationIdx r, Direction dir) {
  const Model& m = g.model();
  m.check_relation(r);
  const auto& c = m.config();
  require(g.value(v).size() == c.dim(), ErrorKind::DimensionMismatch, "projection input has wrong length");
  auto& ps = g.params();
  switch (c.projection) {
    case ProjectionKind::Bilinear: return ad::matvec(g.tape, ps.at(pname::proj(r, dir, "full")), v);
    case ProjectionKind::Diagonal: return ad::diag_mul(g.tape, ps.at(pname::proj(r, dir, "diag")), v);
    case ProjectionKind::Block: break;
  }
  if (c.has_feature && c.has_space) {
    ad::Var f = ad::matvec(g.tape, ps.at(pname::proj(r, dir, "c")), ad::slice(g.tape, v, 0, c.feat_dim));
    ad::Var s = ad::matvec(g.tape, ps.at(pname::proj(r, dir, "x")), ad::slice(g.tape, v, c.feat_dim, c.space_dim));
    return ad::concat(g.tape, f, s);
  }
  return ad::matvec(g.tape, ps.at(pname::proj(r, dir, c.has_feature ? "c" : "x")), v);
}

/// Location projection: s = LocEnc(x), output [R_xc s ; R_x s].
inline ad::Var project_location(Graph& g, Point2 x, RelationIdx r, Direction dir) {
  const Model& m = g.model();
  m.check_relation(r);
  const auto& c = m.config();
  require(c.projection == ProjectionKind::Block && c.has_space, ErrorKind::UnsupportedMode,
          std::string(to_string(c.mode)) + " cannot project a bare location");
  auto& ps = g.params();
  ad::Var s = g.location(x);
  ad::Var sx = ad::matvec(g.tape, ps.at(pname::proj(r, dir, "x")), s);
  if (!c.has_feature) return sx;
  return ad::concat(g.tape, ad::matvec(g.tape, ps.at(pname::proj(r, dir, "xc")), s), sx);
}

/// I({e_j}; type). Attention pooling or elementwise minimum, then a per-type dense layer.
inline ad::Var intersect(Graph& g, std::span<const ad::Var> xs, TypeIdx type) {
  require(!xs.empty(), ErrorKind::EmptyInput, "intersection of nothing");
  const Model& m = g.model();
  require(type < m.vocab().type_names.size(), ErrorKind::UnknownType, "type index " + std::to_string(type));
  const auto& c = m.config();
  for (auto x : xs) require(g.value(x).size() == c.dim(), ErrorKind::DimensionMismatch, "intersection input length");
  auto& ps = g.params();
  ad::Var pooled = c.intersection == IntersectionKind::Attention ? ad::attention_pool(g.tape, xs, ps.at(pname::inter(type, "u")))
                                                                 : ad::elementwise_min(g.tape, xs);
  ad::Var out = ad::add_bias(g.tape, ad::matvec(g.tape, ps.at(pname::inter(type, "W")), pooled), ps.at(pname::inter(type, "b")));
  return ad::activate(g.tape, out, c.intersection_activation);
}

// ---- value versions -------------------------------------------------------

inline Vec project_entity(const Model& m, const Vec& v, RelationIdx r, Direction dir) {
  Graph g = Graph::inference(m);
  return g.value(project_entity(g, g.tape.constant(v), r, dir));
}

inline Vec project_location(const Model& m, Point2 x, RelationIdx r, Direction dir) {
  Graph g = Graph::inference(m);
  return g.value(project_location(g, x, r, dir));
}

inline Vec intersect(const Model& m, const std::vector<Vec>& xs, TypeIdx type) {
  Graph g = Graph::inference(m);
  std::vector<ad::Var> vs;
  for (const auto& x : xs) vs.push_back(g.tape.constant(x));
  return g.value(intersect(g, vs, type));
}

}  // namespace sekge
