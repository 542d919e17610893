#pragma once

#include <unordered_map>

#include "sekge/autodiff.hpp"
#include "sekge/error.hpp"
#include "sekge/geokg.hpp"
#include "sekge/location_encoder.hpp"
#include "sekge/model.hpp"
#include "sekge/rng.hpp"

namespace sekge {

inline Point2 uniform_in_box(const Box& b, Rng& rng) {
  return {b.min.x + (b.max.x - b.min.x) * rng.uniform(), b.min.y + (b.max.y - b.min.y) * rng.uniform()};
}

/// X(e): the point itself, or a fresh uniform draw from the box.
inline Point2 footprint_point(const Vocabulary& vocab, EntityIdx e, Rng& rng) {
  require(e < vocab.footprints.size(), ErrorKind::UnknownEntity, "entity index " + std::to_string(e));
  const auto& fp = vocab.footprints[e];
  require(fp.has_value(), ErrorKind::NotGeographic, vocab.entity_names[e] + " has no footprint");
  if (fp->box) return uniform_in_box(*fp->box, rng);
  return fp->point;
}

/// One differentiable forward pass against a model's parameters. Entities
/// can be cached so that a box entity used twice in one step gets one draw.
class Graph {
 public:
  Graph(const Model& model, ParamStore& params, FootprintSampling sampling, Rng* rng, bool cache_entities = true)
      : model_(model), params_(params), sampling_(sampling), rng_(rng), cache_(cache_entities) {
    require(sampling == FootprintSampling::Centroid || rng != nullptr, ErrorKind::BadArgument,
            "random footprint sampling needs an rng");
  }

  /// Read-only pass with deterministic centroid footprints.
  static Graph inference(const Model& model) { return Graph(model, model.tape_params(), FootprintSampling::Centroid, nullptr); }

  ad::Tape tape;

  const Model& model() const { return model_; }
  ParamStore& params() { return params_; }
  FootprintSampling sampling() const { return sampling_; }
  const Vec& value(ad::Var v) const { return tape.value(v); }

  /// Coordinate fed to the location encoder for a geographic entity.
  Point2 space_point(EntityIdx e) {
    const auto& fp = model_.vocab().footprints.at(e);
    require(fp.has_value(), ErrorKind::NotGeographic, model_.vocab().entity_names.at(e) + " has no footprint");
    if (!fp->box || !model_.config().use_boxes) return fp->point;
    if (sampling_ == FootprintSampling::Centroid) return fp->box->centroid();
    return uniform_in_box(*fp->box, *rng_);
  }

  /// X(e) under this pass's sampling mode.
  Point2 footprint_point(EntityIdx e) {
    model_.check_entity(e);
    const auto& fp = model_.vocab().footprints[e];
    require(fp.has_value(), ErrorKind::NotGeographic, model_.vocab().entity_names[e] + " has no footprint");
    if (!fp->box) return fp->point;
    if (sampling_ == FootprintSampling::Centroid) return fp->box->centroid();
    return uniform_in_box(*fp->box, *rng_);
  }

  ad::Var feature(EntityIdx e) {
    model_.check_entity(e);
    require(model_.config().has_feature, ErrorKind::UnsupportedMode, "model has no feature encoder");
    auto& table = params_.at(pname::feature(model_.type_of(e)));
    return ad::l2_normalize(tape, ad::param_row(tape, table, model_.feature_row(e)));
  }

  ad::Var space(EntityIdx e) {
    model_.check_entity(e);
    require(model_.config().has_space, ErrorKind::UnsupportedMode, "model has no space encoder");
    if (!model_.is_geo(e)) {
      return ad::l2_normalize(tape, ad::param_row(tape, params_.at(pname::nongeo_space()), model_.nongeo_row(e)));
    }
    return location(space_point(e));
  }

  ad::Var location(Point2 x) {
    require(model_.config().has_space, ErrorKind::NoLocationEncoder, "model has no location encoder");
    return encode_location(tape, params_, model_.config().loc, x);
  }

  ad::Var entity(EntityIdx e) {
    if (cache_) {
      if (auto it = entities_.find(e); it != entities_.end()) return it->second;
    }
    const auto& c = model_.config();
    ad::Var v;
    if (c.has_feature && c.has_space) v = ad::concat(tape, feature(e), space(e));
    else if (c.has_feature) v = feature(e);
    else v = space(e);
    if (cache_) entities_.emplace(e, v);
    return v;
  }

 private:
  const Model& model_;
  ParamStore& params_;
  FootprintSampling sampling_;
  Rng* rng_;
  bool cache_;
  std::unordered_map<EntityIdx, ad::Var> entities_;
};

/// Value-returning encoders for inference and tests.
inline Vec encode_feature(const Model& model, EntityIdx e) {
  Graph g = Graph::inference(model);
  return g.value(g.feature(e));
}

inline Vec encode_space(const Model& model, EntityIdx e, Rng& rng, FootprintSampling sampling = FootprintSampling::Random) {
  Graph g(model, model.tape_params(), sampling, &rng);
  return g.value(g.space(e));
}

inline Vec encode_entity(const Model& model, EntityIdx e, Rng& rng, FootprintSampling sampling = FootprintSampling::Random) {
  Graph g(model, model.tape_params(), sampling, &rng);
  return g.value(g.entity(e));
}

inline Vec encode_entity(const Model& model, EntityIdx e) {
  Graph g = Graph::inference(model);
  return g.value(g.entity(e));
}

}  // namespace sekge
