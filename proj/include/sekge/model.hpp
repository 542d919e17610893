#pragma once

#include <cmath>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "sekge/autodiff.hpp"
#include "sekge/error.hpp"
#include "sekge/geokg.hpp"
#include "sekge/hash.hpp"
#include "sekge/location_encoder.hpp"
#include "sekge/params.hpp"

namespace sekge {

/// Model variants: the full spatially explicit model, its ablations, and the
/// feature-only query-embedding baselines.
enum class ModelMode { GqeDiag, Gqe, Cga, SeKgeDirect, SeKgePt, SeKgeSpace, SeKgeFull, SeKgeSsl };

inline std::string_view to_string(ModelMode m) {
  switch (m) {
    case ModelMode::GqeDiag: return "gqe-diag";
    case ModelMode::Gqe: return "gqe";
    case ModelMode::Cga: return "cga";
    case ModelMode::SeKgeDirect: return "se-kge-direct";
    case ModelMode::SeKgePt: return "se-kge-pt";
    case ModelMode::SeKgeSpace: return "se-kge-space";
    case ModelMode::SeKgeFull: return "se-kge-full";
    case ModelMode::SeKgeSsl: return "se-kge-ssl";
  }
  return "se-kge-full";
}

inline ModelMode parse_mode(std::string_view s) {
  for (auto m : {ModelMode::GqeDiag, ModelMode::Gqe, ModelMode::Cga, ModelMode::SeKgeDirect, ModelMode::SeKgePt,
                 ModelMode::SeKgeSpace, ModelMode::SeKgeFull, ModelMode::SeKgeSsl}) {
    if (to_string(m) == s) return m;
  }
  fail(ErrorKind::ParseError, "unknown model mode " + std::string(s));
}

enum class ProjectionKind { Block, Bilinear, Diagonal };
enum class IntersectionKind { Attention, MinFfn };

inline std::string_view to_string(ProjectionKind k) {
  switch (k) {
    case ProjectionKind::Block: return "se-kge-block";
    case ProjectionKind::Bilinear: return "gqe-bilinear";
    case ProjectionKind::Diagonal: return "gqe-diagonal";
  }
  return "se-kge-block";
}

inline std::string_view to_string(IntersectionKind k) { return k == IntersectionKind::Attention ? "attention" : "min-ffn"; }

/// How box footprints become a single coordinate at encoding time.
enum class FootprintSampling {
  Random,    // fresh uniform draw inside the box
  Centroid,  // box center; deterministic
};

inline std::string_view to_string(FootprintSampling s) { return s == FootprintSampling::Random ? "random" : "centroid"; }

struct ModelConfig {
  ModelMode mode = ModelMode::SeKgeFull;
  std::size_t feat_dim = 64;
  std::size_t space_dim = 64;
  bool has_feature = true;
  bool has_space = true;
  bool use_boxes = true;
  ProjectionKind projection = ProjectionKind::Block;
  IntersectionKind intersection = IntersectionKind::Attention;
  ad::Activation intersection_activation = ad::Activation::Identity;
  LocationEncoderConfig loc;

  std::size_t feature_part() const { return has_feature ? feat_dim : 0; }
  std::size_t space_part() const { return has_space ? space_dim : 0; }
  std::size_t dim() const { return feature_part() + space_part(); }

  /// Structural defaults for a mode. Dimensions and schedule are kept from `base`.
  static ModelConfig for_mode(ModelMode mode, const ModelConfig& base) {
    ModelConfig c = base;
    c.mode = mode;
    c.loc.out_dim = c.space_dim;
    switch (mode) {
      case ModelMode::GqeDiag:
      case ModelMode::Gqe:
      case ModelMode::Cga:
        c.has_feature = true;
        c.has_space = false;
        c.use_boxes = false;
        c.projection = mode == ModelMode::GqeDiag ? ProjectionKind::Diagonal : ProjectionKind::Bilinear;
        c.intersection = mode == ModelMode::Cga ? IntersectionKind::Attention : IntersectionKind::MinFfn;
        break;
      case ModelMode::SeKgeDirect:
      case ModelMode::SeKgePt:
        c.has_feature = c.has_space = true;
        c.use_boxes = false;
        c.projection = ProjectionKind::Block;
        c.intersection = IntersectionKind::Attention;
        c.loc.input = mode == ModelMode::SeKgeDirect ? LocationInput::Direct : LocationInput::MultiScale;
        c.loc.activation = ad::Activation::Sigmoid;
        c.loc.l2_normalize_output = false;
        break;
      case ModelMode::SeKgeSpace:
        c.has_feature = false;
        c.has_space = true;
        c.use_boxes = true;
        c.projection = ProjectionKind::Block;
        c.intersection = IntersectionKind::Attention;
        c.loc.input = LocationInput::MultiScale;
        c.loc.activation = ad::Activation::LeakyRelu;
        c.loc.l2_normalize_output = true;
        break;
      case ModelMode::SeKgeFull:
      case ModelMode::SeKgeSsl:
        c.has_feature = c.has_space = true;
        c.use_boxes = true;
        c.projection = ProjectionKind::Block;
        c.intersection = IntersectionKind::Attention;
        c.loc.input = LocationInput::MultiScale;
        c.loc.activation = ad::Activation::Sigmoid;
        c.loc.l2_normalize_output = false;
        break;
    }
    return c;
  }

  static ModelConfig for_mode(ModelMode mode) { return for_mode(mode, ModelConfig{}); }

  nlohmann::json to_json() const {
    return {
        {"mode", to_string(mode)},
        {"feat_dim", feat_dim},
        {"space_dim", space_dim},
        {"has_feature", has_feature},
        {"has_space", has_space},
        {"use_boxes", use_boxes},
        {"projection", to_string(projection)},
        {"intersection", to_string(intersection)},
        {"intersection_activation", ad::to_string(intersection_activation)},
        {"scales", loc.schedule.scales},
        {"lambda_min", loc.schedule.lambda_min},
        {"lambda_max", loc.schedule.lambda_max},
        {"directions", to_string(loc.layout)},
        {"location_input", loc.input == LocationInput::Direct ? "direct" : "multi-scale"},
        {"location_activation", ad::to_string(loc.activation)},
        {"location_l2_normalize", loc.l2_normalize_output},
    };
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.mode = parse_mode(j.at("mode").get<std::string>());
    c.feat_dim = j.at("feat_dim").get<std::size_t>();
    c.space_dim = j.at("space_dim").get<std::size_t>();
    c.has_feature = j.at("has_feature").get<bool>();
    c.has_space = j.at("has_space").get<bool>();
    c.use_boxes = j.at("use_boxes").get<bool>();
    const auto proj = j.at("projection").get<std::string>();
    c.projection = proj == "gqe-bilinear" ? ProjectionKind::Bilinear
                   : proj == "gqe-diagonal" ? ProjectionKind::Diagonal
                                            : ProjectionKind::Block;
    c.intersection = j.at("intersection").get<std::string>() == "min-ffn" ? IntersectionKind::MinFfn : IntersectionKind::Attention;
    c.intersection_activation = ad::parse_activation(j.at("intersection_activation").get<std::string>());
    c.loc.schedule = make_schedule(j.at("scales").get<std::size_t>(), j.at("lambda_min").get<double>(),
                                   j.at("lambda_max").get<double>());
    c.loc.layout = parse_layout(j.at("directions").get<std::string>());
    c.loc.input = j.at("location_input").get<std::string>() == "direct" ? LocationInput::Direct : LocationInput::MultiScale;
    c.loc.activation = ad::parse_activation(j.at("location_activation").get<std::string>());
    c.loc.l2_normalize_output = j.at("location_l2_normalize").get<bool>();
    c.loc.out_dim = c.space_dim;
    return c;
  }

  std::string hash() const { return hex64(fnv1a64(to_json().dump())); }
};

/// Parameter names. Types and relations are addressed by index so that
/// arbitrary identifiers never collide with the separators.
namespace pname {
inline std::string feature(TypeIdx t) { return "feat/T" + std::to_string(t); }
inline std::string nongeo_space() { return "space/nongeo"; }
inline std::string proj(RelationIdx r, Direction d, std::string_view part) {
  return "proj/R" + std::to_string(r) + "/" + std::string(to_string(d)) + "/" + std::string(part);
}
inline std::string inter(TypeIdx t, std::string_view part) { return "inter/T" + std::to_string(t) + "/" + std::string(part); }
}  // namespace pname

/// Trainable parameters plus the vocabulary and footprints they are tied to.
class Model {
 public:
  Model() = default;

  /// Builds freshly initialized parameters for every entity, relation
  /// direction and type of `kg`.
  static Model create(const GeoKG& kg, ModelConfig cfg, std::uint64_t seed) {
    cfg.loc.out_dim = cfg.space_dim;
    cfg.loc.area = kg.area();
    require(cfg.dim() > 0, ErrorKind::DimensionMismatch, "model dimension must be positive");
    require(!cfg.has_feature || cfg.feat_dim > 0, ErrorKind::DimensionMismatch, "feature dimension must be positive");
    require(!cfg.has_space || cfg.space_dim > 0, ErrorKind::DimensionMismatch, "space dimension must be positive");
    Model m;
    m.config_ = cfg;
    m.vocab_ = kg.vocab_ptr();
    m.seed_ = seed;
    m.build_rows();
    Rng rng(seed);
    m.init_params(rng);
    return m;
  }

  /// Reassembles a model around existing parameters (checkpoint loading).
  static Model assemble(std::shared_ptr<const Vocabulary> vocab, ModelConfig cfg, ParamStore params, std::uint64_t seed) {
    cfg.loc.out_dim = cfg.space_dim;
    cfg.loc.area = vocab->area;
    Model m;
    m.config_ = cfg;
    m.vocab_ = std::move(vocab);
    m.seed_ = seed;
    m.params_ = std::move(params);
    m.build_rows();
    return m;
  }

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return *vocab_; }
  std::shared_ptr<const Vocabulary> vocab_ptr() const { return vocab_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t dim() const { return config_.dim(); }
  std::size_t num_entities() const { return vocab_->entity_names.size(); }

  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  /// Parameter access for read-only tapes that are never differentiated.
  ParamStore& tape_params() const { return params_; }

  std::size_t feature_row(EntityIdx e) const { return feature_row_.at(e); }
  std::size_t nongeo_row(EntityIdx e) const { return nongeo_row_.at(e); }

  bool is_geo(EntityIdx e) const { return vocab_->footprints.at(e).has_value(); }
  TypeIdx type_of(EntityIdx e) const { return vocab_->entity_types.at(e); }

  EntityIdx entity(std::string_view id) const {
    auto it = vocab_->entity_index.find(std::string(id));
    require(it != vocab_->entity_index.end(), ErrorKind::UnknownEntity, std::string(id));
    return it->second;
  }
  RelationIdx relation(std::string_view id) const {
    auto it = vocab_->relation_index.find(std::string(id));
    require(it != vocab_->relation_index.end(), ErrorKind::UnknownRelation, std::string(id));
    return it->second;
  }
  void check_entity(EntityIdx e) const {
    require(e < num_entities(), ErrorKind::UnknownEntity, "entity index " + std::to_string(e));
  }
  void check_relation(RelationIdx r) const {
    require(r < vocab_->relation_names.size(), ErrorKind::UnknownRelation, "relation index " + std::to_string(r));
  }

  /// Relations usable for spatial semantic lifting (both endpoints geographic in training).
  const std::vector<RelationIdx>& liftable() const { return liftable_; }
  void set_liftable(std::vector<RelationIdx> rels) { liftable_ = std::move(rels); }

 private:
  void build_rows() {
    const std::size_t n = vocab_->entity_names.size();
    feature_row_.assign(n, 0);
    nongeo_row_.assign(n, SIZE_MAX);
    type_counts_.assign(vocab_->type_names.size(), 0);
    nongeo_count_ = 0;
    for (EntityIdx e = 0; e < n; ++e) {
      feature_row_[e] = type_counts_[vocab_->entity_types[e]]++;
      if (!vocab_->footprints[e]) nongeo_row_[e] = nongeo_count_++;
    }
  }

  void init_params(Rng& rng) {
    const auto& c = config_;
    if (c.has_feature) {
      for (TypeIdx t = 0; t < type_counts_.size(); ++t) {
        params_.add(pname::feature(t), Tensor::uniform(std::max<std::size_t>(type_counts_[t], 1), c.feat_dim, c.feat_dim, rng));
      }
    }
    if (c.has_space) {
      params_.add(pname::nongeo_space(), Tensor::uniform(std::max<std::size_t>(nongeo_count_, 1), c.space_dim, c.space_dim, rng));
      init_location_encoder(params_, c.loc, rng);
    }
    const std::size_t d = c.dim();
    for (RelationIdx r = 0; r < vocab_->relation_names.size(); ++r) {
      for (Direction dir : {Direction::Forward, Direction::Inverse}) {
        switch (c.projection) {
          case ProjectionKind::Block:
            if (c.has_feature) {
              params_.add(pname::proj(r, dir, "c"), projection_init(c.feat_dim, c.feat_dim, rng));
              if (c.has_space) params_.add(pname::proj(r, dir, "xc"), projection_init(c.feat_dim, c.space_dim, rng));
            }
            if (c.has_space) params_.add(pname::proj(r, dir, "x"), projection_init(c.space_dim, c.space_dim, rng));
            break;
          case ProjectionKind::Bilinear:
            params_.add(pname::proj(r, dir, "full"), projection_init(d, d, rng));
            break;
          case ProjectionKind::Diagonal: {
            Tensor diag(d, 1);
            for (auto& x : diag.data) x = 1.0 + rng.uniform(-0.1, 0.1);
            params_.add(pname::proj(r, dir, "diag"), std::move(diag));
            break;
          }
        }
      }
    }
    for (TypeIdx t = 0; t < vocab_->type_names.size(); ++t) {
      if (c.intersection == IntersectionKind::Attention) params_.add(pname::inter(t, "u"), Tensor::uniform(d, 1, d, rng));
      Tensor w = Tensor::identity(d);
      for (auto& x : w.data) x += rng.uniform(-0.01, 0.01);
      params_.add(pname::inter(t, "W"), std::move(w));
      params_.add(pname::inter(t, "b"), Tensor(d, 1));
    }
  }

  // Norm-preserving in expectation: uniform(+-sqrt(3/cols)).
  static Tensor projection_init(std::size_t rows, std::size_t cols, Rng& rng) {
    Tensor t(rows, cols);
    const double a = std::sqrt(3.0 / static_cast<double>(cols));
    for (auto& x : t.data) x = rng.uniform(-a, a);
    return t;
  }

  ModelConfig config_;
  std::shared_ptr<const Vocabulary> vocab_ = std::make_shared<Vocabulary>();
  std::uint64_t seed_ = 0;
  mutable ParamStore params_;
  std::vector<std::size_t> feature_row_;
  std::vector<std::size_t> nongeo_row_;
  std::vector<std::size_t> type_counts_;
  std::size_t nongeo_count_ = 0;
  std::vector<RelationIdx> liftable_;
};

}  // namespace sekge
