#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "fixtures.hpp"

using namespace sekge;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::ParseError;
}

struct Shared {
  fixtures::SynthSetup setup = fixtures::synth_setup(42);
  QADataset qa = build_qa_dataset(setup.split, {10, 5, 5}, false, 42);
};

const Shared& shared() {
  static const Shared s;
  return s;
}

bool contains(const std::vector<EntityIdx>& v, EntityIdx e) { return std::find(v.begin(), v.end(), e) != v.end(); }

}  // namespace

TEST(SampleNeighborhood, InclusionRateIsNOverDegree) {
  std::vector<EntityRecord> ents;
  for (int i = 0; i < 6; ++i) ents.push_back({"e" + std::to_string(i), "T", std::nullopt, std::nullopt});
  std::vector<RawTriple> ts;
  for (int i = 1; i <= 5; ++i) ts.push_back({"e" + std::to_string(i), "r", "e0"});
  auto kg = load_kg(ts, ents, fixtures::unit_area());
  ASSERT_EQ(kg.neighborhood(0).size(), 5u);
  Rng rng(12);
  const int draws = 10000;
  std::vector<int> hits(6, 0);
  for (int i = 0; i < draws; ++i) {
    const auto s = sample_neighborhood(kg, 0, 2, rng);
    ASSERT_EQ(s.size(), 2u);
    ASSERT_NE(s[0], s[1]);
    for (const auto& nb : s) ++hits[nb.entity];
  }
  const double p = 2.0 / 5.0;
  const double sigma = std::sqrt(p * (1 - p) / draws);
  for (int e = 1; e <= 5; ++e) EXPECT_NEAR(hits[e] / double(draws), p, 3 * sigma) << e;
}

TEST(SampleNeighborhood, SmallNeighborhoodReturnedWhole) {
  auto kg = fixtures::bay_area_kg();
  Rng rng(1);
  const auto e = kg.entity("detroit");
  EXPECT_EQ(sample_neighborhood(kg, e, 3, rng), kg.neighborhood(e));
  EXPECT_EQ(kind_of([&] { sample_neighborhood(kg, e, 0, rng); }), ErrorKind::BadArgument);
}

TEST(QuerySampler, ChainTwoStructure) {
  const auto& s = shared();
  QuerySampler sampler(s.setup.split.train, s.setup.split.full);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    const auto ex = sampler.sample_query(DagType::Chain2, false, QuerySplit::Train, {}, rng);
    const auto& q = ex.query;
    ASSERT_EQ(q.edges.size(), 2u);
    EXPECT_EQ(q.edges[0].subject, "a1");
    EXPECT_EQ(q.edges[0].object, "?v1");
    EXPECT_EQ(q.edges[1].subject, "?v1");
    EXPECT_EQ(q.edges[1].object, kTarget);
    EXPECT_EQ(q.anchors.size(), 1u);
    EXPECT_EQ(q.target_type, s.setup.kg.type_of(*ex.answer));
    EXPECT_TRUE(q.var_types.contains("?v1"));
  }
}

TEST(QuerySampler, EveryShapeHasItsEdges) {
  const auto& s = shared();
  for (const auto& ex : s.qa.train) {
    const auto shape = dag_shape(ex.query.dag);
    ASSERT_EQ(ex.query.edges.size(), shape.size());
    for (std::size_t i = 0; i < shape.size(); ++i) {
      EXPECT_EQ(ex.query.edges[i].subject, shape[i].first);
      EXPECT_EQ(ex.query.edges[i].object, shape[i].second);
    }
  }
}

TEST(QuerySampler, Deterministic) {
  const auto& s = shared();
  const auto again = build_qa_dataset(s.setup.split, {10, 5, 5}, false, 42);
  EXPECT_EQ(again.train, s.qa.train);
  EXPECT_EQ(again.test, s.qa.test);
  EXPECT_EQ(again.manifest, s.qa.manifest);
  const auto other = build_qa_dataset(s.setup.split, {10, 5, 5}, false, 43);
  EXPECT_NE(other.train, s.qa.train);
}

TEST(QuerySampler, AnswerabilityContracts) {
  const auto& s = shared();
  const auto& train = s.setup.split.train;
  const auto& full = s.setup.split.full;
  for (const auto& ex : s.qa.train) {
    EXPECT_TRUE(contains(fixtures::enumerate_answers(train, ex.query), *ex.answer));
  }
  for (const auto* part : {&s.qa.valid, &s.qa.test}) {
    for (const auto& ex : *part) {
      EXPECT_TRUE(fixtures::enumerate_answers(train, ex.query).empty()) << to_string(ex.query.dag);
      EXPECT_TRUE(contains(fixtures::enumerate_answers(full, ex.query), *ex.answer));
    }
  }
}

TEST(QuerySampler, TypeMatchedNegatives) {
  const auto& s = shared();
  const auto& full = s.setup.split.full;
  for (const auto& ex : s.qa.test) {
    ASSERT_FALSE(ex.negatives.empty());
    const auto answers = fixtures::enumerate_answers(full, ex.query);
    std::set<EntityIdx> uniq(ex.negatives.begin(), ex.negatives.end());
    EXPECT_EQ(uniq.size(), ex.negatives.size());
    for (EntityIdx n : ex.negatives) {
      EXPECT_EQ(full.type_of(n), full.type_of(*ex.answer));
      EXPECT_FALSE(contains(answers, n));
    }
  }
}

TEST(QuerySampler, HardNegativesMatchSomeButNotAllPatterns) {
  const auto& s = shared();
  const auto& full = s.setup.split.full;
  std::size_t checked = 0;
  for (const auto* part : {&s.qa.train, &s.qa.test}) {
    for (const auto& ex : *part) {
      if (!is_hard(ex.query.dag)) {
        EXPECT_TRUE(ex.hard_negatives.empty());
        continue;
      }
      ASSERT_FALSE(ex.hard_negatives.empty()) << to_string(ex.query.dag);
      for (EntityIdx n : ex.hard_negatives) {
        const auto k = fixtures::patterns_satisfied(full, ex.query, n);
        EXPECT_GE(k, 1u);
        EXPECT_LT(k, ex.query.edges.size());
        EXPECT_EQ(full.type_of(n), ex.query.target_type);
        ++checked;
      }
      EXPECT_EQ(&scoring_negatives(ex), &ex.hard_negatives);
    }
  }
  EXPECT_GT(checked, 0u);
}

TEST(QuerySampler, HardNegativesOnBayAreaQuery) {
  auto kg = fixtures::bay_area_kg();
  QAExample ex{fixtures::bay_area_query(kg), kg.entity("oakland"), {}, {}};
  Rng rng(5);
  const auto negs = sample_negatives(kg, ex, NegativeMode::Hard, 10, rng);
  std::vector<EntityIdx> expect;
  for (const char* c : {"berkeley", "fremont", "hayward", "flint", "san_francisco", "san_jose"}) expect.push_back(kg.entity(c));
  EXPECT_TRUE(fixtures::same_set(negs, expect));
  const auto typed = sample_negatives(kg, ex, NegativeMode::TypeMatched, 10, rng);
  std::vector<EntityIdx> cities = kg.entities_of_type(*kg.find_type("City"));
  std::erase(cities, kg.entity("oakland"));
  EXPECT_TRUE(fixtures::same_set(typed, cities));
}

TEST(QuerySampler, SmallPoolReturnsWholePool) {
  std::vector<EntityRecord> ents = {{"h", "H", std::nullopt, std::nullopt}, {"g", "H", std::nullopt, std::nullopt}};
  for (int i = 0; i < 5; ++i) ents.push_back({"x" + std::to_string(i), "X", std::nullopt, std::nullopt});
  std::vector<RawTriple> ts = {{"h", "r", "x0"}};
  for (int i = 1; i < 5; ++i) ts.push_back({"g", "s", "x" + std::to_string(i)});
  auto kg = load_kg(ts, ents, fixtures::unit_area());
  ConjunctiveQuery q;
  q.target_type = *kg.find_type("X");
  q.edges = {{"a1", kg.relation("r"), Direction::Forward, kTarget}};
  q.anchors = {{"a1", kg.entity("h")}};
  Rng rng(2);
  const auto negs = sample_negatives(kg, {q, kg.entity("x0"), {}, {}}, NegativeMode::TypeMatched, 10, rng);
  EXPECT_EQ(negs.size(), 4u);
  EXPECT_EQ(kind_of([&] { sample_negatives(kg, {q, kg.entity("x0"), {}, {}}, NegativeMode::Hard, 10, rng); }),
            ErrorKind::EmptyNegativePool);
}

TEST(BuildQaDataset, CountsAndManifest) {
  const auto& s = shared();
  EXPECT_EQ(s.qa.train.size(), 100u);
  EXPECT_EQ(s.qa.valid.size(), 50u);
  EXPECT_EQ(s.qa.test.size(), 50u);
  std::map<DagType, int> per;
  for (const auto& ex : s.qa.train) ++per[ex.query.dag];
  for (DagType d : kAllDagTypes) {
    EXPECT_EQ(per[d], 10);
    EXPECT_EQ(s.qa.manifest["splits"]["train"][std::string(to_string(d))].get<int>(), 10);
  }
  EXPECT_EQ(s.qa.manifest["seed"].get<std::uint64_t>(), 42u);
  EXPECT_TRUE(s.qa.manifest.contains("retry_policy"));
}

TEST(BuildQaDataset, GeoOnlyAnswers) {
  const auto& s = shared();
  const auto geo = build_qa_dataset(s.setup.split, {2, 1, 1}, true, 5);
  for (const auto* part : {&geo.train, &geo.valid, &geo.test}) {
    for (const auto& ex : *part) EXPECT_TRUE(s.setup.kg.is_geo(*ex.answer));
  }
}

TEST(BuildQaDataset, ExhaustionIsReported) {
  auto kg = fixtures::bay_area_kg();
  KGSplit split{kg, {}, {}, kg};
  SamplerConfig cfg;
  cfg.max_attempts = 5;
  EXPECT_EQ(kind_of([&] { build_qa_dataset(split, {1, 1, 1}, false, 1, cfg); }), ErrorKind::SamplingExhausted);
}

TEST(BuildQaDataset, DirectoryRoundTrip) {
  const auto& s = shared();
  const auto dir = std::filesystem::temp_directory_path() / "sekge_qa_roundtrip";
  std::filesystem::remove_all(dir);
  save_qa_dir(dir, s.qa, s.setup.kg.vocab());
  const auto back = load_qa_dir(dir, s.setup.kg.vocab());
  EXPECT_EQ(back.train, s.qa.train);
  EXPECT_EQ(back.valid, s.qa.valid);
  EXPECT_EQ(back.test, s.qa.test);
  EXPECT_EQ(back.manifest, s.qa.manifest);
  std::filesystem::remove_all(dir);
}

TEST(BuildSslDataset, DirectionSets) {
  std::vector<EntityRecord> ents = {{"person", "P", std::nullopt, std::nullopt},
                                    {"city", "C", Point2{1, 1}, std::nullopt},
                                    {"town", "C", Point2{5, 5}, std::nullopt}};
  auto kg = load_kg({{"person", "bornIn", "city"}, {"city", "near", "town"}}, ents, fixtures::unit_area());
  const auto d = build_ssl_dataset(kg);
  const Triple born{kg.entity("person"), kg.relation("bornIn"), kg.entity("city")};
  const Triple near{kg.entity("city"), kg.relation("near"), kg.entity("town")};
  EXPECT_EQ(d.forward, std::vector<Triple>{near});
  EXPECT_EQ(d.backward, (std::vector<Triple>{born, near}));
  EXPECT_EQ(d.relations, std::vector<RelationIdx>{kg.relation("near")});
}

TEST(BuildSslDataset, RelationsMatchScan) {
  const auto& s = shared();
  const auto& kg = s.setup.split.train;
  const auto d = build_ssl_dataset(kg);
  std::set<RelationIdx> expect;
  std::size_t fwd = 0, bwd = 0;
  for (const auto& t : kg.triples()) {
    if (kg.is_geo(t.head) && kg.is_geo(t.tail)) expect.insert(t.rel);
    fwd += kg.is_geo(t.head);
    bwd += kg.is_geo(t.tail);
  }
  EXPECT_EQ(d.relations, std::vector<RelationIdx>(expect.begin(), expect.end()));
  EXPECT_EQ(d.forward.size(), fwd);
  EXPECT_EQ(d.backward.size(), bwd);
  // synthetic KG: knows links agents only, so it is not liftable
  EXPECT_FALSE(expect.contains(kg.relation("knows")));
  EXPECT_TRUE(expect.contains(kg.relation("nearestCity")));
}

TEST(BuildSslSplits, NegativesAreTypedNonAnswers) {
  const auto& s = shared();
  const auto ssl = build_ssl_splits(s.setup.split, 10, 42);
  ASSERT_FALSE(ssl.test.empty());
  const auto& full = s.setup.split.full;
  for (const auto& x : ssl.test) {
    const EntityIdx src = ssl_source(x), dst = ssl_target(x);
    EXPECT_TRUE(full.is_geo(src));
    const auto answers = full.step(src, x.triple.rel, x.dir);
    for (EntityIdx n : x.negatives) {
      EXPECT_EQ(full.type_of(n), full.type_of(dst));
      EXPECT_FALSE(std::binary_search(answers.begin(), answers.end(), n));
    }
  }
  const auto dir = std::filesystem::temp_directory_path() / "sekge_ssl_roundtrip";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  save_ssl_dir(dir, ssl, full.vocab());
  const auto back = load_ssl_dir(dir, full.vocab());
  EXPECT_EQ(back.train, ssl.train);
  EXPECT_EQ(back.test, ssl.test);
  EXPECT_EQ(back.relations, ssl.relations);
  std::filesystem::remove_all(dir);
}
