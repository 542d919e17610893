#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "sekge/error.hpp"
#include "sekge/rng.hpp"

namespace sekge {

using EntityIdx = std::uint32_t;
using RelationIdx = std::uint32_t;
using TypeIdx = std::uint32_t;

/// Planar coordinates in meters.
struct Point2 {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point2&, const Point2&) = default;
};

struct Box {
  Point2 min;
  Point2 max;

  bool valid() const { return min.x <= max.x && min.y <= max.y; }
  bool contains(Point2 p) const { return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y; }
  Point2 centroid() const { return {(min.x + max.x) / 2.0, (min.y + max.y) / 2.0}; }
  friend bool operator==(const Box&, const Box&) = default;
};

/// Every geographic entity has a point; large ones additionally carry a box.
struct Footprint {
  Point2 point;
  std::optional<Box> box;
  friend bool operator==(const Footprint&, const Footprint&) = default;
};

struct StudyArea {
  Point2 min;
  Point2 max;

  bool valid() const { return min.x < max.x && min.y < max.y; }
  bool contains(Point2 p) const { return p.x >= min.x && p.x <= max.x && p.y >= min.y && p.y <= max.y; }
  friend bool operator==(const StudyArea&, const StudyArea&) = default;
};

enum class Direction : std::uint8_t { Forward, Inverse };

inline std::string_view to_string(Direction d) { return d == Direction::Forward ? "fwd" : "inv"; }

inline Direction parse_direction(std::string_view s) {
  if (s == "fwd") return Direction::Forward;
  if (s == "inv") return Direction::Inverse;
  fail(ErrorKind::ParseError, "direction must be \"fwd\" or \"inv\", got \"" + std::string(s) + "\"");
}

inline Direction flip(Direction d) { return d == Direction::Forward ? Direction::Inverse : Direction::Forward; }

struct Triple {
  EntityIdx head = 0;
  RelationIdx rel = 0;
  EntityIdx tail = 0;
  friend bool operator==(const Triple&, const Triple&) = default;
  friend auto operator<=>(const Triple&, const Triple&) = default;
};

/// A triple as read from disk, before interning.
struct RawTriple {
  std::string head;
  std::string rel;
  std::string tail;
  friend bool operator==(const RawTriple&, const RawTriple&) = default;
};

struct EntityRecord {
  std::string id;
  std::string type;
  std::optional<Point2> point;
  std::optional<Box> bbox;
};

/// (relation, direction, neighbor): projecting `entity` through (rel, dir)
/// lands on the entity whose neighborhood this is.
struct Neighbor {
  RelationIdx rel = 0;
  Direction dir = Direction::Forward;
  EntityIdx entity = 0;
  friend bool operator==(const Neighbor&, const Neighbor&) = default;
  friend auto operator<=>(const Neighbor&, const Neighbor&) = default;
};

/// Interned names and footprints shared between a KG and its splits.
struct Vocabulary {
  std::vector<std::string> entity_names;
  std::vector<TypeIdx> entity_types;
  std::vector<std::optional<Footprint>> footprints;
  std::vector<std::string> type_names;
  std::vector<std::string> relation_names;
  StudyArea area;
  std::unordered_map<std::string, EntityIdx> entity_index;
  std::unordered_map<std::string, RelationIdx> relation_index;
  std::unordered_map<std::string, TypeIdx> type_index;

  void reindex() {
    entity_index.clear();
    relation_index.clear();
    type_index.clear();
    for (std::size_t i = 0; i < entity_names.size(); ++i) entity_index.emplace(entity_names[i], static_cast<EntityIdx>(i));
    for (std::size_t i = 0; i < relation_names.size(); ++i) relation_index.emplace(relation_names[i], static_cast<RelationIdx>(i));
    for (std::size_t i = 0; i < type_names.size(); ++i) type_index.emplace(type_names[i], static_cast<TypeIdx>(i));
  }
};

/// Directed, labeled multigraph of typed entities with optional footprints.
/// Immutable after construction.
class GeoKG {
 public:
  GeoKG() = default;

  GeoKG(std::shared_ptr<const Vocabulary> vocab, std::vector<Triple> triples)
      : vocab_(std::move(vocab)), triples_(std::move(triples)) {
    build_index();
  }

  const Vocabulary& vocab() const { return *vocab_; }
  std::shared_ptr<const Vocabulary> vocab_ptr() const { return vocab_; }

  std::size_t num_entities() const { return vocab_->entity_names.size(); }
  std::size_t num_relations() const { return vocab_->relation_names.size(); }
  std::size_t num_types() const { return vocab_->type_names.size(); }
  const std::vector<Triple>& triples() const { return triples_; }
  const StudyArea& area() const { return vocab_->area; }

  const std::string& entity_name(EntityIdx e) const { return vocab_->entity_names.at(e); }
  const std::string& relation_name(RelationIdx r) const { return vocab_->relation_names.at(r); }
  const std::string& type_name(TypeIdx t) const { return vocab_->type_names.at(t); }

  std::optional<EntityIdx> find_entity(std::string_view id) const {
    auto it = vocab_->entity_index.find(std::string(id));
    if (it == vocab_->entity_index.end()) return std::nullopt;
    return it->second;
  }
  std::optional<RelationIdx> find_relation(std::string_view id) const {
    auto it = vocab_->relation_index.find(std::string(id));
    if (it == vocab_->relation_index.end()) return std::nullopt;
    return it->second;
  }
  std::optional<TypeIdx> find_type(std::string_view id) const {
    auto it = vocab_->type_index.find(std::string(id));
    if (it == vocab_->type_index.end()) return std::nullopt;
    return it->second;
  }

  EntityIdx entity(std::string_view id) const {
    auto e = find_entity(id);
    require(e.has_value(), ErrorKind::UnknownEntity, std::string(id));
    return *e;
  }
  RelationIdx relation(std::string_view id) const {
    auto r = find_relation(id);
    require(r.has_value(), ErrorKind::UnknownRelation, std::string(id));
    return *r;
  }

  TypeIdx type_of(EntityIdx e) const { return vocab_->entity_types.at(e); }
  const std::optional<Footprint>& footprint(EntityIdx e) const { return vocab_->footprints.at(e); }
  bool is_geo(EntityIdx e) const { return footprint(e).has_value(); }
  bool has_box(EntityIdx e) const { return is_geo(e) && footprint(e)->box.has_value(); }

  std::size_t num_geo() const {
    std::size_t n = 0;
    for (EntityIdx e = 0; e < num_entities(); ++e) n += is_geo(e);
    return n;
  }
  std::size_t num_box() const {
    std::size_t n = 0;
    for (EntityIdx e = 0; e < num_entities(); ++e) n += has_box(e);
    return n;
  }

  const std::vector<EntityIdx>& entities_of_type(TypeIdx t) const { return by_type_.at(t); }

  /// 1-degree neighborhood: (r, fwd, u) for each in-edge r(u, e) and
  /// (r, inv, o) for each out-edge r(e, o).
  std::vector<Neighbor> neighborhood(EntityIdx e) const {
    require(e < num_entities(), ErrorKind::UnknownEntity, "entity index out of range");
    return neighbors_[e];
  }

  const std::vector<Neighbor>& neighborhood_ref(EntityIdx e) const { return neighbors_.at(e); }

  /// Entities reached from `from` by following (rel, dir): tails for fwd, heads for inv.
  const std::vector<EntityIdx>& step(EntityIdx from, RelationIdx rel, Direction dir) const {
    const auto& m = dir == Direction::Forward ? tails_ : heads_;
    auto it = m.find(key(from, rel));
    return it == m.end() ? empty_ : it->second;
  }

  bool has_triple(EntityIdx h, RelationIdx r, EntityIdx t) const {
    const auto& ts = step(h, r, Direction::Forward);
    return std::binary_search(ts.begin(), ts.end(), t);
  }

  bool has_edge(EntityIdx from, RelationIdx r, Direction dir, EntityIdx to) const {
    return dir == Direction::Forward ? has_triple(from, r, to) : has_triple(to, r, from);
  }

  /// Same vocabulary, different triple multiset.
  GeoKG with_triples(std::vector<Triple> triples) const { return GeoKG(vocab_, std::move(triples)); }

  RawTriple raw(const Triple& t) const { return {entity_name(t.head), relation_name(t.rel), entity_name(t.tail)}; }

 private:
  static std::uint64_t key(EntityIdx e, RelationIdx r) { return (static_cast<std::uint64_t>(e) << 32) | r; }

  void build_index() {
    const std::size_t n = vocab_->entity_names.size();
    neighbors_.assign(n, {});
    by_type_.assign(vocab_->type_names.size(), {});
    for (EntityIdx e = 0; e < n; ++e) by_type_.at(vocab_->entity_types[e]).push_back(e);
    for (const auto& t : triples_) {
      tails_[key(t.head, t.rel)].push_back(t.tail);
      heads_[key(t.tail, t.rel)].push_back(t.head);
      neighbors_[t.tail].push_back({t.rel, Direction::Forward, t.head});
      neighbors_[t.head].push_back({t.rel, Direction::Inverse, t.tail});
    }
    for (auto* m : {&tails_, &heads_}) {
      for (auto& [k, v] : *m) {
        std::sort(v.begin(), v.end());
        v.erase(std::unique(v.begin(), v.end()), v.end());
      }
    }
  }

  std::shared_ptr<const Vocabulary> vocab_ = std::make_shared<Vocabulary>();
  std::vector<Triple> triples_;
  std::vector<std::vector<Neighbor>> neighbors_;
  std::vector<std::vector<EntityIdx>> by_type_;
  std::unordered_map<std::uint64_t, std::vector<EntityIdx>> tails_;
  std::unordered_map<std::uint64_t, std::vector<EntityIdx>> heads_;
  std::vector<EntityIdx> empty_;
};

/// Validates and interns entity metadata and triples into a GeoKG.
inline GeoKG load_kg(const std::vector<RawTriple>& triples, const std::vector<EntityRecord>& meta, const StudyArea& area) {
  require(area.valid(), ErrorKind::BadArgument, "study area requires min < max componentwise");
  require(!triples.empty(), ErrorKind::EmptyKG, "no triples");
  auto vocab = std::make_shared<Vocabulary>();
  vocab->area = area;
  for (const auto& rec : meta) {
    if (vocab->entity_index.contains(rec.id)) fail(ErrorKind::DuplicateEntityId, rec.id);
    auto [tit, inserted] = vocab->type_index.emplace(rec.type, static_cast<TypeIdx>(vocab->type_names.size()));
    if (inserted) vocab->type_names.push_back(rec.type);
    std::optional<Footprint> fp;
    if (rec.bbox && !rec.point) fail(ErrorKind::ParseError, rec.id + ": bbox requires point");
    if (rec.point) {
      require(std::isfinite(rec.point->x) && std::isfinite(rec.point->y), ErrorKind::NonFiniteInput, rec.id);
      if (!area.contains(*rec.point)) fail(ErrorKind::FootprintOutsideStudyArea, rec.id + ": point outside study area");
      fp = Footprint{*rec.point, std::nullopt};
      if (rec.bbox) {
        if (!rec.bbox->valid()) fail(ErrorKind::FootprintOutsideStudyArea, rec.id + ": box min exceeds max");
        if (!area.contains(rec.bbox->min) || !area.contains(rec.bbox->max)) {
          fail(ErrorKind::FootprintOutsideStudyArea, rec.id + ": box outside study area");
        }
        fp->box = rec.bbox;
      }
    }
    vocab->entity_index.emplace(rec.id, static_cast<EntityIdx>(vocab->entity_names.size()));
    vocab->entity_names.push_back(rec.id);
    vocab->entity_types.push_back(tit->second);
    vocab->footprints.push_back(fp);
  }
  std::vector<Triple> interned;
  interned.reserve(triples.size());
  for (const auto& t : triples) {
    auto h = vocab->entity_index.find(t.head);
    auto tl = vocab->entity_index.find(t.tail);
    if (h == vocab->entity_index.end()) fail(ErrorKind::UnknownEntityInTriple, t.head);
    if (tl == vocab->entity_index.end()) fail(ErrorKind::UnknownEntityInTriple, t.tail);
    auto [rit, inserted] = vocab->relation_index.emplace(t.rel, static_cast<RelationIdx>(vocab->relation_names.size()));
    if (inserted) vocab->relation_names.push_back(t.rel);
    interned.push_back({h->second, rit->second, tl->second});
  }
  return GeoKG(std::move(vocab), std::move(interned));
}

/// Single-pass degree filter. Degree counts in- and out-edges in the input;
/// an entity survives iff degree >= its threshold, and a triple survives iff
/// both endpoints survive. TripleT needs `head` and `tail` members.
template <typename TripleT, typename IsGeo>
std::vector<TripleT> degree_filter(const std::vector<TripleT>& triples, IsGeo&& is_geo, std::size_t eta_geo,
                                   std::size_t eta_nongeo) {
  require(eta_geo >= 1 && eta_nongeo >= 1, ErrorKind::BadArgument, "degree thresholds must be >= 1");
  using Key = std::remove_cvref_t<decltype(std::declval<TripleT>().head)>;
  std::unordered_map<Key, std::size_t> degree;
  for (const auto& t : triples) {
    ++degree[t.head];
    ++degree[t.tail];
  }
  auto keep = [&](const Key& e) { return degree[e] >= (is_geo(e) ? eta_geo : eta_nongeo); };
  std::vector<TripleT> out;
  for (const auto& t : triples) {
    if (keep(t.head) && keep(t.tail)) out.push_back(t);
  }
  return out;
}

struct SplitRatio {
  double train = 90.0;
  double valid = 1.0;
  double test = 9.0;
};

inline SplitRatio parse_ratio(std::string_view s) {
  SplitRatio r;
  double parts[3];
  std::size_t pos = 0;
  for (int i = 0; i < 3; ++i) {
    std::size_t end = i < 2 ? s.find(':', pos) : s.size();
    if (end == std::string_view::npos) fail(ErrorKind::ParseError, "ratio must look like 90:1:9");
    try {
      parts[i] = std::stod(std::string(s.substr(pos, end - pos)));
    } catch (const std::exception&) {
      fail(ErrorKind::ParseError, "ratio must look like 90:1:9");
    }
    pos = end + 1;
  }
  r.train = parts[0];
  r.valid = parts[1];
  r.test = parts[2];
  require(r.train > 0 && r.valid > 0 && r.test > 0, ErrorKind::BadArgument, "ratio parts must be positive");
  return r;
}

struct KGSplit {
  GeoKG train;
  std::vector<Triple> valid;
  std::vector<Triple> test;
  GeoKG full;
};

/// Target sizes before coverage repair: valid and test are rounded, train takes the rest.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatio& ratio) {
  const double total = ratio.train + ratio.valid + ratio.test;
  auto nv = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio.valid / total));
  auto nt = static_cast<std::size_t>(std::llround(static_cast<double>(n) * ratio.test / total));
  if (nv + nt > n) nt = n - nv;
  return {n - nv - nt, nv, nt};
}

/// Random split with coverage repair: every entity incident to a triple and
/// every relation keeps at least one training triple.
inline KGSplit split_kg(const GeoKG& kg, const SplitRatio& ratio, std::uint64_t seed) {
  require(!kg.triples().empty(), ErrorKind::EmptyKG, "cannot split an empty KG");
  require(ratio.train > 0 && ratio.valid > 0 && ratio.test > 0, ErrorKind::BadArgument, "ratio parts must be positive");
  std::vector<Triple> order = kg.triples();
  Rng rng(seed);
  rng.shuffle(order);
  const auto [n_train, n_valid, n_test] = split_sizes(order.size(), ratio);

  // 0 = train, 1 = valid, 2 = test
  std::vector<int> assign(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) assign[i] = i < n_train ? 0 : (i < n_train + n_valid ? 1 : 2);

  std::vector<std::size_t> ent_count(kg.num_entities(), 0);
  std::vector<std::size_t> rel_count(kg.num_relations(), 0);
  auto add = [&](const Triple& t, int delta) {
    ent_count[t.head] += delta;
    rel_count[t.rel] += delta;
    if (t.tail != t.head) ent_count[t.tail] += delta;
  };
  for (std::size_t i = 0; i < order.size(); ++i)
    if (assign[i] == 0) add(order[i], 1);

  // Move orphaning held-out triples back to train.
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (assign[i] == 0) continue;
    const auto& t = order[i];
    if (ent_count[t.head] == 0 || ent_count[t.tail] == 0 || rel_count[t.rel] == 0) {
      assign[i] = 0;
      add(t, 1);
    }
  }

  // Refill the held-out deficit from train with triples whose removal orphans nothing.
  std::array<std::size_t, 3> have{0, 0, 0};
  for (int a : assign) ++have[a];
  const std::array<std::size_t, 3> want{n_train, n_valid, n_test};
  for (int split = 1; split <= 2; ++split) {
    for (std::size_t i = 0; i < order.size() && have[split] < want[split]; ++i) {
      if (assign[i] != 0) continue;
      const auto& t = order[i];
      if (ent_count[t.head] > 1 && ent_count[t.tail] > 1 && rel_count[t.rel] > 1) {
        assign[i] = split;
        add(t, -1);
        --have[0];
        ++have[split];
      }
    }
  }
  for (int split = 1; split <= 2; ++split) {
    if (have[split] + 1 < want[split]) {
      fail(ErrorKind::InfeasibleSplit, "cannot fill held-out split without orphaning entities or relations");
    }
  }

  KGSplit out;
  std::vector<Triple> train;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (assign[i] == 0)
      train.push_back(order[i]);
    else if (assign[i] == 1)
      out.valid.push_back(order[i]);
    else
      out.test.push_back(order[i]);
  }
  out.train = kg.with_triples(std::move(train));
  out.full = kg;
  return out;
}

/// Entities that appear in at least one triple.
inline std::vector<bool> incident_entities(const GeoKG& kg) {
  std::vector<bool> seen(kg.num_entities(), false);
  for (const auto& t : kg.triples()) seen[t.head] = seen[t.tail] = true;
  return seen;
}

}  // namespace sekge
