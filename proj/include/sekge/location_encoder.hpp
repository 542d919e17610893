#pragma once

#include <cmath>
#include <numbers>
#include <string_view>
#include <vector>

#include "sekge/autodiff.hpp"
#include "sekge/error.hpp"
#include "sekge/geokg.hpp"
#include "sekge/params.hpp"
#include "sekge/tensor.hpp"

namespace sekge {

/// Geometric ladder of wavelengths from lambda_min to lambda_max (meters).
struct ScaleSchedule {
  std::size_t scales = 0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  Vec wavelengths;
};

inline ScaleSchedule make_schedule(std::size_t scales, double lambda_min, double lambda_max) {
  require(scales >= 2, ErrorKind::BadScaleRange, "need at least two scales");
  require(std::isfinite(lambda_min) && std::isfinite(lambda_max) && lambda_min > 0.0 && lambda_min < lambda_max,
          ErrorKind::BadScaleRange, "need 0 < lambda_min < lambda_max");
  ScaleSchedule s{scales, lambda_min, lambda_max, Vec(scales)};
  const double ratio = lambda_max / lambda_min;
  for (std::size_t i = 0; i < scales; ++i) {
    s.wavelengths[i] = lambda_min * std::pow(ratio, static_cast<double>(i) / static_cast<double>(scales - 1));
  }
  // pin the endpoints exactly
  s.wavelengths.front() = lambda_min;
  s.wavelengths.back() = lambda_max;
  return s;
}

enum class DirectionLayout { Hexagonal, Axis };

inline std::string_view to_string(DirectionLayout l) { return l == DirectionLayout::Hexagonal ? "hex" : "axis"; }

inline DirectionLayout parse_layout(std::string_view s) {
  if (s == "hex") return DirectionLayout::Hexagonal;
  if (s == "axis") return DirectionLayout::Axis;
  fail(ErrorKind::ParseError, "direction layout must be hex or axis");
}

/// Unit vectors at 0, 120, 240 degrees (hex) or the two coordinate axes.
inline std::vector<Point2> direction_vectors(DirectionLayout layout) {
  if (layout == DirectionLayout::Axis) return {{1.0, 0.0}, {0.0, 1.0}};
  std::vector<Point2> dirs;
  for (int k = 0; k < 3; ++k) {
    const double a = 2.0 * std::numbers::pi * k / 3.0;
    dirs.push_back({std::cos(a), std::sin(a)});
  }
  return dirs;
}

/// [sin(<x,u>/lambda_s), cos(<x,u>/lambda_s)] for each direction u (outer)
/// and scale s (inner).
inline Vec position_encode(Point2 x, const ScaleSchedule& schedule, DirectionLayout layout) {
  require(std::isfinite(x.x) && std::isfinite(x.y), ErrorKind::NonFiniteInput, "non-finite coordinate");
  const auto dirs = direction_vectors(layout);
  Vec pe;
  pe.reserve(2 * dirs.size() * schedule.scales);
  for (const auto& u : dirs) {
    const double proj = x.x * u.x + x.y * u.y;
    for (double lambda : schedule.wavelengths) {
      pe.push_back(std::sin(proj / lambda));
      pe.push_back(std::cos(proj / lambda));
    }
  }
  return pe;
}

enum class LocationInput {
  MultiScale,  // sinusoidal multi-scale representation
  Direct,      // raw coordinates, rescaled to [-1, 1] over the study area
};

struct LocationEncoderConfig {
  ScaleSchedule schedule = make_schedule(16, 50.0, 5.4e6);
  DirectionLayout layout = DirectionLayout::Hexagonal;
  LocationInput input = LocationInput::MultiScale;
  std::size_t out_dim = 64;
  ad::Activation activation = ad::Activation::Sigmoid;
  bool l2_normalize_output = false;
  StudyArea area{{0.0, 0.0}, {1.0, 1.0}};

  std::size_t input_dim() const {
    return input == LocationInput::Direct ? 2 : 2 * direction_vectors(layout).size() * schedule.scales;
  }
  std::size_t hidden_dim() const { return out_dim; }
};

inline Vec location_features(Point2 x, const LocationEncoderConfig& cfg) {
  require(std::isfinite(x.x) && std::isfinite(x.y), ErrorKind::NonFiniteInput, "non-finite coordinate");
  if (cfg.input == LocationInput::MultiScale) return position_encode(x, cfg.schedule, cfg.layout);
  const double cx = (cfg.area.min.x + cfg.area.max.x) / 2.0;
  const double cy = (cfg.area.min.y + cfg.area.max.y) / 2.0;
  return {(x.x - cx) / ((cfg.area.max.x - cfg.area.min.x) / 2.0), (x.y - cy) / ((cfg.area.max.y - cfg.area.min.y) / 2.0)};
}

inline void init_location_encoder(ParamStore& store, const LocationEncoderConfig& cfg, Rng& rng) {
  require(cfg.out_dim > 0, ErrorKind::DimensionMismatch, "location embedding dimension must be positive");
  const std::size_t in = cfg.input_dim();
  const std::size_t hid = cfg.hidden_dim();
  store.add("loc/W1", Tensor::uniform(hid, in, in, rng));
  store.add("loc/b1", Tensor(hid, 1));
  store.add("loc/W2", Tensor::uniform(cfg.out_dim, hid, hid, rng));
  store.add("loc/b2", Tensor(cfg.out_dim, 1));
}

/// NN(PE(x)): one hidden layer, linear output, optional L2 normalization.
inline ad::Var encode_location(ad::Tape& tape, ParamStore& store, const LocationEncoderConfig& cfg, Point2 x) {
  ad::Var pe = tape.constant(location_features(x, cfg));
  ad::Var h = ad::activate(tape, ad::add_bias(tape, ad::matvec(tape, store.at("loc/W1"), pe), store.at("loc/b1")),
                           cfg.activation);
  ad::Var out = ad::add_bias(tape, ad::matvec(tape, store.at("loc/W2"), h), store.at("loc/b2"));
  return cfg.l2_normalize_output ? ad::l2_normalize(tape, out) : out;
}

inline Vec encode_location(const ParamStore& store, const LocationEncoderConfig& cfg, Point2 x) {
  ad::Tape tape;
  // read-only: backward() is never invoked on this tape
  return tape.value(encode_location(tape, const_cast<ParamStore&>(store), cfg, x));
}

}  // namespace sekge
