#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "sekge/bruteforce.hpp"
#include "sekge/error.hpp"
#include "sekge/geokg.hpp"
#include "sekge/hash.hpp"
#include "sekge/kg_io.hpp"
#include "sekge/query.hpp"
#include "sekge/rng.hpp"

namespace sekge {

/// N_n(e): n neighbors without replacement, or all of them if fewer.
inline std::vector<Neighbor> sample_neighborhood(const GeoKG& kg, EntityIdx e, std::size_t n, Rng& rng) {
  require(n >= 1, ErrorKind::BadArgument, "neighborhood sample size must be at least 1");
  return rng.sample(kg.neighborhood(e), n);
}

enum class QuerySplit { Train, Eval };

enum class NegativeMode { TypeMatched, Hard };

struct SamplerConfig {
  std::size_t negatives = 10;
  std::size_t max_attempts = 100;
};

/// Type-matched pool: same type as the answer, never an answer of the query
/// on the full graph.
inline std::vector<EntityIdx> type_matched_pool(const GeoKG& full, TypeIdx type, const std::vector<EntityIdx>& answers) {
  std::vector<EntityIdx> pool;
  for (EntityIdx e : full.entities_of_type(type)) {
    if (!std::binary_search(answers.begin(), answers.end(), e)) pool.push_back(e);
  }
  return pool;
}

/// Hard pool: entities of the answer's type that satisfy some branch but not the whole query.
inline std::vector<EntityIdx> typed_hard_pool(const GeoKG& full, const ConjunctiveQuery& q) {
  std::vector<EntityIdx> pool;
  for (EntityIdx e : hard_negative_pool(full, q)) {
    if (full.type_of(e) == q.target_type) pool.push_back(e);
  }
  return pool;
}

inline std::vector<EntityIdx> sample_negatives(const GeoKG& full, const QAExample& ex, NegativeMode mode, std::size_t size,
                                               Rng& rng) {
  require(ex.answer.has_value(), ErrorKind::BadArgument, "example has no answer");
  std::vector<EntityIdx> pool = mode == NegativeMode::Hard
                                    ? typed_hard_pool(full, ex.query)
                                    : type_matched_pool(full, full.type_of(*ex.answer), bruteforce_answers(full, ex.query));
  std::erase(pool, *ex.answer);
  require(!pool.empty(), ErrorKind::EmptyNegativePool, "no negatives available");
  return rng.sample(pool, size);
}

/// Query sampling by reverse navigation from an answer entity.
class QuerySampler {
 public:
  QuerySampler(const GeoKG& train, const GeoKG& full, SamplerConfig cfg = {}) : train_(train), full_(full), cfg_(cfg) {
    for (EntityIdx e = 0; e < train.num_entities(); ++e) {
      if (train.neighborhood_ref(e).empty()) continue;
      answers_.push_back(e);
      if (train.is_geo(e)) geo_answers_.push_back(e);
    }
  }

  /// A query without negatives satisfying the split's answerability contract.
  /// `heldout` seeds eval queries and is ignored for training queries.
  QAExample sample_query(DagType dag, bool geo_only, QuerySplit split, std::span<const Triple> heldout, Rng& rng) const {
    for (std::size_t attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
      auto ex = split == QuerySplit::Train ? try_train(dag, geo_only, rng) : try_eval(dag, geo_only, heldout, rng);
      if (ex) return *ex;
    }
    fail(ErrorKind::SamplingExhausted, std::string("no ") + std::string(to_string(dag)) + " query for the " +
                                           (split == QuerySplit::Train ? "train" : "eval") + " split after " +
                                           std::to_string(cfg_.max_attempts) + " attempts");
  }

  /// Full example: query, type-matched negatives and, for Hard-* types, hard negatives.
  QAExample sample_example(DagType dag, bool geo_only, QuerySplit split, std::span<const Triple> heldout, Rng& rng) const {
    for (std::size_t attempt = 0; attempt < cfg_.max_attempts; ++attempt) {
      QAExample ex = sample_query(dag, geo_only, split, heldout, rng);
      try {
        ex.negatives = sample_negatives(full_, ex, NegativeMode::TypeMatched, cfg_.negatives, rng);
        if (is_hard(dag)) ex.hard_negatives = sample_negatives(full_, ex, NegativeMode::Hard, cfg_.negatives, rng);
        return ex;
      } catch (const Error& err) {
        if (err.kind() != ErrorKind::EmptyNegativePool) throw;
      }
    }
    fail(ErrorKind::SamplingExhausted, std::string("no ") + std::string(to_string(dag)) + " query with negatives after " +
                                           std::to_string(cfg_.max_attempts) + " attempts");
  }

  const SamplerConfig& config() const { return cfg_; }

 private:
  // Binds subjects of every edge by walking the shape backwards from the
  // target. `fixed` optionally pre-binds one in-edge of the target.
  std::optional<ConjunctiveQuery> navigate(const GeoKG& kg, DagType dag, EntityIdx answer, Rng& rng,
                                           std::optional<std::pair<std::size_t, Neighbor>> fixed) const {
    const auto shape = dag_shape(dag);
    ConjunctiveQuery q;
    q.dag = dag;
    q.target_type = kg.type_of(answer);
    q.edges.resize(shape.size());
    std::map<std::string, EntityIdx> bound{{kTarget, answer}};
    std::map<std::string, std::vector<std::size_t>> by_object;
    for (std::size_t i = 0; i < shape.size(); ++i) by_object[shape[i].second].push_back(i);
    for (std::size_t i = shape.size(); i-- > 0;) {
      const auto& obj = shape[i].second;
      auto& group = by_object[obj];
      if (group.empty()) continue;  // already bound together with its siblings
      auto it = bound.find(obj);
      if (it == bound.end()) return std::nullopt;
      std::vector<Neighbor> picks;
      std::vector<std::size_t> free_edges;
      for (std::size_t ei : group) {
        if (fixed && fixed->first == ei) picks.push_back(fixed->second);
        else free_edges.push_back(ei);
      }
      std::vector<Neighbor> pool;
      for (const auto& nb : kg.neighborhood_ref(it->second)) {
        if (std::find(picks.begin(), picks.end(), nb) == picks.end()) pool.push_back(nb);
      }
      std::sort(pool.begin(), pool.end());
      pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
      if (pool.size() < free_edges.size()) return std::nullopt;
      auto chosen = rng.sample(pool, free_edges.size());
      std::vector<std::size_t> order;
      for (std::size_t ei : group) {
        if (!(fixed && fixed->first == ei)) order.push_back(ei);
      }
      for (std::size_t j = 0; j < order.size(); ++j) assign(q, bound, shape, order[j], chosen[j]);
      if (fixed && std::find(group.begin(), group.end(), fixed->first) != group.end()) {
        assign(q, bound, shape, fixed->first, fixed->second);
      }
      group.clear();
    }
    for (const auto& [node, e] : bound) {
      if (is_variable(node) && node != kTarget) q.var_types[node] = kg.type_of(e);
    }
    return q;
  }

  static void assign(ConjunctiveQuery& q, std::map<std::string, EntityIdx>& bound,
                     const std::vector<std::pair<std::string, std::string>>& shape, std::size_t ei, const Neighbor& nb) {
    const auto& [subj, obj] = shape[ei];
    q.edges[ei] = {subj, nb.rel, nb.dir, obj};
    if (is_variable(subj)) bound[subj] = nb.entity;
    else q.anchors[subj] = nb.entity;
  }

  std::optional<QAExample> try_train(DagType dag, bool geo_only, Rng& rng) const {
    const auto& pool = geo_only ? geo_answers_ : answers_;
    require(!pool.empty(), ErrorKind::SamplingExhausted, "no candidate answer entities");
    const EntityIdx answer = pool[rng.index(pool.size())];
    auto q = navigate(train_, dag, answer, rng, std::nullopt);
    if (!q) return std::nullopt;
    const auto ans = bruteforce_answers(train_, *q);
    if (!std::binary_search(ans.begin(), ans.end(), answer)) return std::nullopt;
    return QAExample{*q, answer, {}, {}};
  }

  std::optional<QAExample> try_eval(DagType dag, bool geo_only, std::span<const Triple> heldout, Rng& rng) const {
    require(!heldout.empty(), ErrorKind::SamplingExhausted, "no held-out triples to seed eval queries");
    const Triple& t = heldout[rng.index(heldout.size())];
    const bool to_tail = rng.uniform() < 0.5;
    const EntityIdx answer = to_tail ? t.tail : t.head;
    const Neighbor seed{t.rel, to_tail ? Direction::Forward : Direction::Inverse, to_tail ? t.head : t.tail};
    if (geo_only && !full_.is_geo(answer)) return std::nullopt;
    const auto shape = dag_shape(dag);
    std::vector<std::size_t> target_edges;
    for (std::size_t i = 0; i < shape.size(); ++i) {
      if (shape[i].second == kTarget) target_edges.push_back(i);
    }
    const std::size_t slot = target_edges[rng.index(target_edges.size())];
    auto q = navigate(full_, dag, answer, rng, std::make_pair(slot, seed));
    if (!q) return std::nullopt;
    if (!bruteforce_answers(train_, *q).empty()) return std::nullopt;
    const auto ans = bruteforce_answers(full_, *q);
    if (!std::binary_search(ans.begin(), ans.end(), answer)) return std::nullopt;
    return QAExample{*q, answer, {}, {}};
  }

  const GeoKG& train_;
  const GeoKG& full_;
  SamplerConfig cfg_;
  std::vector<EntityIdx> answers_;
  std::vector<EntityIdx> geo_answers_;
};

struct QACounts {
  std::size_t train = 100;
  std::size_t valid = 10;
  std::size_t test = 10;
};

struct QADataset {
  std::vector<QAExample> train;
  std::vector<QAExample> valid;
  std::vector<QAExample> test;
  nlohmann::json manifest;
};

/// Independent stream per (split, dag) so output does not depend on the order of generation.
inline Rng stream_rng(std::uint64_t seed, std::string_view split, DagType dag) {
  return Rng(seed ^ fnv1a64(std::string(split) + "/" + std::string(to_string(dag))));
}

inline QADataset build_qa_dataset(const KGSplit& split, const QACounts& counts, bool geo_only, std::uint64_t seed,
                                  SamplerConfig cfg = {}) {
  require(counts.train >= 1 && counts.valid >= 1 && counts.test >= 1, ErrorKind::BadArgument, "counts must be at least 1");
  QuerySampler sampler(split.train, split.full, cfg);
  QADataset ds;
  nlohmann::json per_split = nlohmann::json::object();
  struct Part {
    const char* name;
    std::vector<QAExample>* out;
    std::size_t count;
    QuerySplit kind;
    const std::vector<Triple>* heldout;
  };
  const std::vector<Part> parts = {
      {"train", &ds.train, counts.train, QuerySplit::Train, nullptr},
      {"valid", &ds.valid, counts.valid, QuerySplit::Eval, &split.valid},
      {"test", &ds.test, counts.test, QuerySplit::Eval, &split.test},
  };
  for (const auto& p : parts) {
    nlohmann::json dag_counts = nlohmann::json::object();
    for (DagType dag : kAllDagTypes) {
      Rng rng = stream_rng(seed, p.name, dag);
      std::span<const Triple> held = p.heldout ? std::span<const Triple>(*p.heldout) : std::span<const Triple>();
      for (std::size_t i = 0; i < p.count; ++i) {
        try {
          p.out->push_back(sampler.sample_example(dag, geo_only, p.kind, held, rng));
        } catch (const Error& e) {
          fail(e.kind(), std::string(to_string(dag)) + " / " + p.name + ": " + e.what());
        }
      }
      dag_counts[std::string(to_string(dag))] = p.count;
    }
    per_split[p.name] = dag_counts;
  }
  nlohmann::json config = {{"per_dag", {counts.train, counts.valid, counts.test}},
                           {"geo_only", geo_only},
                           {"negatives", cfg.negatives},
                           {"max_attempts", cfg.max_attempts}};
  ds.manifest = {
      {"seed", seed},
      {"config", config},
      {"config_hash", hex64(fnv1a64(config.dump()))},
      {"splits", per_split},
      {"retry_policy", "each example retries up to max_attempts times; exhaustion aborts the build"},
      {"eval_seeding", "eval queries bind one target in-edge to a held-out triple of the split"},
      {"negatives_exclude", "all answers of the query on the full graph"},
  };
  return ds;
}

inline void write_qa_jsonl(const fs::path& path, const std::vector<QAExample>& xs, const Vocabulary& v) {
  auto out = open_out(path);
  for (const auto& x : xs) out << query_to_json(x, v).dump() << '\n';
}

inline std::vector<QAExample> read_qa_jsonl(const fs::path& path, const Vocabulary& v) {
  auto in = open_in(path);
  std::vector<QAExample> xs;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::ParseError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    xs.push_back(query_from_json(j, v));
  }
  return xs;
}

inline void save_qa_dir(const fs::path& dir, const QADataset& ds, const Vocabulary& v) {
  write_qa_jsonl(dir / "train.jsonl", ds.train, v);
  write_qa_jsonl(dir / "valid.jsonl", ds.valid, v);
  write_qa_jsonl(dir / "test.jsonl", ds.test, v);
  write_json_file(dir / "manifest.json", ds.manifest);
}

inline QADataset load_qa_dir(const fs::path& dir, const Vocabulary& v) {
  QADataset ds;
  ds.train = read_qa_jsonl(dir / "train.jsonl", v);
  ds.valid = read_qa_jsonl(dir / "valid.jsonl", v);
  ds.test = read_qa_jsonl(dir / "test.jsonl", v);
  if (fs::exists(dir / "manifest.json")) ds.manifest = read_json_file(dir / "manifest.json");
  return ds;
}

// ---- spatial semantic lifting data ------------------------------------------

/// T_s (geographic head), T_o (geographic tail) and the relations of triples
/// whose both ends are geographic.
struct SSLDataset {
  std::vector<Triple> forward;
  std::vector<Triple> backward;
  std::vector<RelationIdx> relations;
};

inline SSLDataset build_ssl_dataset(const GeoKG& kg) {
  SSLDataset d;
  std::set<RelationIdx> rels;
  for (const auto& t : kg.triples()) {
    const bool hg = kg.is_geo(t.head);
    const bool tg = kg.is_geo(t.tail);
    if (hg) d.forward.push_back(t);
    if (tg) d.backward.push_back(t);
    if (hg && tg) rels.insert(t.rel);
  }
  d.relations.assign(rels.begin(), rels.end());
  return d;
}

/// One lifting observation: fwd predicts the tail from X(head), inv predicts
/// the head from X(tail).
struct SSLExample {
  Triple triple;
  Direction dir = Direction::Forward;
  std::vector<EntityIdx> negatives;
  friend bool operator==(const SSLExample&, const SSLExample&) = default;
};

inline EntityIdx ssl_source(const SSLExample& x) { return x.dir == Direction::Forward ? x.triple.head : x.triple.tail; }
inline EntityIdx ssl_target(const SSLExample& x) { return x.dir == Direction::Forward ? x.triple.tail : x.triple.head; }

/// Type-matched negatives for the predicted end, excluding every true answer on `full`.
inline std::vector<EntityIdx> ssl_negatives(const GeoKG& full, const Triple& t, Direction dir, std::size_t size, Rng& rng) {
  const EntityIdx src = dir == Direction::Forward ? t.head : t.tail;
  const EntityIdx dst = dir == Direction::Forward ? t.tail : t.head;
  auto pool = type_matched_pool(full, full.type_of(dst), full.step(src, t.rel, dir));
  std::erase(pool, dst);
  require(!pool.empty(), ErrorKind::EmptyNegativePool, "no negatives for lifting triple");
  return rng.sample(pool, size);
}

inline std::vector<SSLExample> ssl_examples(const SSLDataset& d, const GeoKG& full, std::size_t negatives, Rng& rng) {
  std::vector<SSLExample> out;
  for (auto [list, dir] : {std::pair{&d.forward, Direction::Forward}, std::pair{&d.backward, Direction::Inverse}}) {
    for (const auto& t : *list) {
      try {
        out.push_back({t, dir, ssl_negatives(full, t, dir, negatives, rng)});
      } catch (const Error& e) {
        if (e.kind() != ErrorKind::EmptyNegativePool) throw;
      }
    }
  }
  return out;
}

inline nlohmann::json ssl_to_json(const SSLExample& x, const Vocabulary& v) {
  nlohmann::json negs = nlohmann::json::array();
  for (auto e : x.negatives) negs.push_back(v.entity_names.at(e));
  return {{"head", v.entity_names.at(x.triple.head)},
          {"relation", v.relation_names.at(x.triple.rel)},
          {"tail", v.entity_names.at(x.triple.tail)},
          {"dir", to_string(x.dir)},
          {"negatives", negs}};
}

inline SSLExample ssl_from_json(const nlohmann::json& j, const Vocabulary& v) {
  auto ent = [&](const char* k) { return detail::entity_named(v, j.at(k).get<std::string>(), ErrorKind::UnknownEntity); };
  SSLExample x;
  x.triple.head = ent("head");
  x.triple.tail = ent("tail");
  const auto rel = j.at("relation").get<std::string>();
  auto it = v.relation_index.find(rel);
  require(it != v.relation_index.end(), ErrorKind::UnknownRelation, "unknown relation " + rel);
  x.triple.rel = it->second;
  x.dir = parse_direction(j.at("dir").get<std::string>());
  for (const auto& n : j.at("negatives")) x.negatives.push_back(detail::entity_named(v, n.get<std::string>(), ErrorKind::UnknownEntity));
  return x;
}

inline void write_ssl_jsonl(const fs::path& path, const std::vector<SSLExample>& xs, const Vocabulary& v) {
  auto out = open_out(path);
  for (const auto& x : xs) out << ssl_to_json(x, v).dump() << '\n';
}

inline std::vector<SSLExample> read_ssl_jsonl(const fs::path& path, const Vocabulary& v) {
  auto in = open_in(path);
  std::vector<SSLExample> xs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      xs.push_back(ssl_from_json(nlohmann::json::parse(line), v));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorKind::ParseError, path.string() + ": " + e.what());
    }
  }
  return xs;
}

struct SSLSplits {
  std::vector<SSLExample> train;
  std::vector<SSLExample> valid;
  std::vector<SSLExample> test;
  std::vector<RelationIdx> relations;
};

inline SSLSplits build_ssl_splits(const KGSplit& split, std::size_t negatives, std::uint64_t seed) {
  SSLSplits s;
  Rng rng(seed ^ fnv1a64("ssl"));
  const auto train = build_ssl_dataset(split.train);
  s.relations = train.relations;
  s.train = ssl_examples(train, split.full, negatives, rng);
  s.valid = ssl_examples(build_ssl_dataset(split.full.with_triples(split.valid)), split.full, negatives, rng);
  s.test = ssl_examples(build_ssl_dataset(split.full.with_triples(split.test)), split.full, negatives, rng);
  return s;
}

inline void save_ssl_dir(const fs::path& dir, const SSLSplits& s, const Vocabulary& v) {
  write_ssl_jsonl(dir / "train.jsonl", s.train, v);
  write_ssl_jsonl(dir / "valid.jsonl", s.valid, v);
  write_ssl_jsonl(dir / "test.jsonl", s.test, v);
  nlohmann::json rels = nlohmann::json::array();
  for (auto r : s.relations) rels.push_back(v.relation_names.at(r));
  write_json_file(dir / "relations.json", {{"relations", rels}});
}

inline SSLSplits load_ssl_dir(const fs::path& dir, const Vocabulary& v) {
  SSLSplits s;
  s.train = read_ssl_jsonl(dir / "train.jsonl", v);
  s.valid = read_ssl_jsonl(dir / "valid.jsonl", v);
  s.test = read_ssl_jsonl(dir / "test.jsonl", v);
  const auto rels = read_json_file(dir / "relations.json");
  for (const auto& r : rels.at("relations")) {
    s.relations.push_back(v.relation_index.at(r.get<std::string>()));
  }
  return s;
}

}  // namespace sekge
