#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "fixtures.hpp"

using namespace sekge;
using fixtures::small_config;
using fixtures::grad_queries;
using fixtures::grad_kg_examples;
using fixtures::grad_lp_examples;
using fixtures::grad_ssl_examples;

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

double hinge_value(double margin, double pos, double neg) { return std::max(0.0, margin - pos + neg); }

}  // namespace

TEST(Hinge, SaturatedAndTie) {
  ad::Tape t;
  auto one = t.constant({1.0}), minus = t.constant({-1.0}), half = t.constant({0.5});
  EXPECT_EQ(t.scalar(ad::hinge(t, 1.0, one, minus)), 0.0);
  EXPECT_EQ(t.scalar(ad::hinge(t, 1.0, one, t.constant({0.0}))), 0.0);
  EXPECT_EQ(t.scalar(ad::hinge(t, 0.7, half, half)), 0.7);
  EXPECT_DOUBLE_EQ(t.scalar(ad::hinge(t, 1.0, minus, one)), 3.0);
}

TEST(Losses, QaLossMatchesHandComputation) {
  auto kg = fixtures::grad_kg();
  auto m = Model::create(kg, small_config(ModelMode::SeKgeFull), 3);
  const auto qs = grad_queries(kg);
  Graph g = Graph::inference(m);
  const double got = g.tape.scalar(loss_qa(g, qs, 0.8));
  double expect = 0.0;
  for (const auto& x : qs) {
    const auto q = fixtures::manual_embedding(m, x.query);
    const double sp = cosine(q, encode_entity(m, *x.answer));
    // hard types score against their hard negatives
    for (EntityIdx n : is_hard(x.query.dag) ? x.hard_negatives : x.negatives) {
      expect += hinge_value(0.8, sp, cosine(q, encode_entity(m, n)));
    }
  }
  EXPECT_NEAR(got, expect, 1e-12);
}

TEST(Losses, KgLossMatchesHandComputation) {
  auto kg = fixtures::grad_kg();
  auto m = Model::create(kg, small_config(ModelMode::SeKgeFull), 3);
  const auto xs = grad_kg_examples(kg);
  Graph g = Graph::inference(m);
  const double got = g.tape.scalar(loss_kg(g, xs, 1.0));
  double expect = 0.0;
  for (const auto& x : xs) {
    std::vector<Vec> parts;
    for (const auto& nb : x.neighbors) parts.push_back(project_entity(m, encode_entity(m, nb.entity), nb.rel, nb.dir));
    const Vec pred = parts.size() == 1 ? parts[0] : intersect(m, parts, kg.type_of(x.entity));
    const double sp = cosine(pred, encode_entity(m, x.entity));
    for (EntityIdx n : x.negatives) expect += hinge_value(1.0, sp, cosine(pred, encode_entity(m, n)));
  }
  EXPECT_NEAR(got, expect, 1e-12);
}

TEST(Losses, LpAndSslMatchHandComputation) {
  auto kg = fixtures::grad_kg();
  auto m = Model::create(kg, small_config(ModelMode::SeKgeSsl), 3);
  const auto lp = grad_lp_examples(kg);
  const auto ssl = grad_ssl_examples(kg);
  Graph g = Graph::inference(m);
  const double got_lp = g.tape.scalar(loss_lp(g, lp, 1.0));
  const double got_ssl = g.tape.scalar(loss_ssl(g, ssl, 1.0));
  double lp_expect = 0.0;
  for (const auto& x : lp) {
    const auto& t = x.triple;
    const auto fwd = project_entity(m, encode_entity(m, t.head), t.rel, Direction::Forward);
    for (EntityIdx n : x.tail_negatives)
      lp_expect += hinge_value(1.0, cosine(fwd, encode_entity(m, t.tail)), cosine(fwd, encode_entity(m, n)));
    const auto inv = project_entity(m, encode_entity(m, t.tail), t.rel, Direction::Inverse);
    for (EntityIdx n : x.head_negatives)
      lp_expect += hinge_value(1.0, cosine(inv, encode_entity(m, t.head)), cosine(inv, encode_entity(m, n)));
  }
  double ssl_expect = 0.0;
  for (const auto& x : ssl) {
    const EntityIdx src = x.dir == Direction::Forward ? x.triple.head : x.triple.tail;
    const EntityIdx dst = x.dir == Direction::Forward ? x.triple.tail : x.triple.head;
    const auto fp = *kg.footprint(src);
    const Point2 at = fp.box ? fp.box->centroid() : fp.point;
    const auto pred = project_location(m, at, x.triple.rel, x.dir);
    for (EntityIdx n : x.negatives) ssl_expect += hinge_value(1.0, cosine(pred, encode_entity(m, dst)), cosine(pred, encode_entity(m, n)));
  }
  EXPECT_NEAR(got_lp, lp_expect, 1e-12);
  EXPECT_NEAR(got_ssl, ssl_expect, 1e-12);
}

TEST(Losses, EmptyNegativesRejected) {
  auto kg = fixtures::grad_kg();
  auto m = Model::create(kg, small_config(ModelMode::SeKgeFull), 3);
  auto qs = grad_queries(kg);
  qs[0].negatives.clear();
  Graph g = Graph::inference(m);
  EXPECT_EQ(kind_of([&] { loss_qa(g, std::span(qs).first(1), 1.0); }), ErrorKind::EmptyNegatives);
}

TEST(GradCheck, AllFourLosses) {
  auto kg = fixtures::grad_kg();
  const auto qs = grad_queries(kg);
  const auto kgx = grad_kg_examples(kg);
  const auto lp = grad_lp_examples(kg);
  const auto ssl = grad_ssl_examples(kg);
  auto qa_model = Model::create(kg, small_config(ModelMode::SeKgeFull), 11);
  auto ssl_model = Model::create(kg, small_config(ModelMode::SeKgeSsl), 11);
  ASSERT_EQ(qa_model.dim(), 8u);
  const auto r_kg = grad_check(qa_model, [&](Graph& g) { return loss_kg(g, kgx, 1.0); });
  const auto r_qa = grad_check(qa_model, [&](Graph& g) { return loss_qa(g, qs, 1.0); });
  const auto r_lp = grad_check(ssl_model, [&](Graph& g) { return loss_lp(g, lp, 1.0); });
  const auto r_ssl = grad_check(ssl_model, [&](Graph& g) { return loss_ssl(g, ssl, 1.0); });
  for (const auto* r : {&r_kg, &r_qa, &r_lp, &r_ssl}) {
    EXPECT_GT(r->loss, 0.0);
    EXPECT_LT(r->max_error, 1e-4);
  }
  // the box entity's location encoder must receive a gradient
  EXPECT_GT(r_ssl.per_group.count("loc/W1"), 0u);
}

TEST(GradCheck, BaselineModes) {
  auto kg = fixtures::grad_kg();
  const auto qs = grad_queries(kg);
  for (auto mode : {ModelMode::GqeDiag, ModelMode::Gqe, ModelMode::Cga, ModelMode::SeKgeSpace, ModelMode::SeKgeDirect}) {
    auto m = Model::create(kg, small_config(mode), 5);
    EXPECT_LT(grad_check(m, [&](Graph& g) { return loss_qa(g, qs, 1.0); }).max_error, 1e-4) << to_string(mode);
  }
}

TEST(GradCheck, DetectsScaledGradient) {
  auto kg = fixtures::grad_kg();
  const auto qs = grad_queries(kg);
  auto m = Model::create(kg, small_config(ModelMode::SeKgeFull), 11);
  const auto r = grad_check(m, [&](Graph& g) { return loss_qa(g, qs, 1.0); }, 1e-5, 7, 2.0);
  // |2a - a| / (|2a| + |a|)
  EXPECT_NEAR(r.max_error, 1.0 / 3.0, 1e-4);
}

TEST(GradCheck, InactiveHingeHasZeroGradient) {
  auto kg = fixtures::grad_kg();
  auto m = Model::create(kg, small_config(ModelMode::SeKgeFull), 11);
  const auto a = kg.entity("p0"), b = kg.entity("r0");
  const auto r = grad_check(m, [&](Graph& g) {
    ad::Var pa = g.entity(a), pb = g.entity(b);
    // cosines lie in [-1, 1], so a margin of -5 can never activate
    return ad::hinge(g.tape, -5.0, ad::cosine(g.tape, pa, pb), ad::cosine(g.tape, pb, pa));
  });
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.max_error, 0.0);
  Rng rng(7);
  Graph g(m, m.params(), FootprintSampling::Random, &rng);
  auto l = ad::hinge(g.tape, -5.0, ad::cosine(g.tape, g.entity(a), g.entity(b)), ad::cosine(g.tape, g.entity(b), g.entity(a)));
  m.params().zero_grad();
  g.tape.backward(l);
  for (const auto& [name, p] : m.params()) {
    for (double x : p.grad.data) EXPECT_EQ(x, 0.0) << name;
  }
}

namespace {

struct SmokeSetup {
  fixtures::SynthSetup setup = fixtures::synth_setup(42);
  QADataset qa = build_qa_dataset(setup.split, {20, 1, 1}, false, 42);
};

const SmokeSetup& smoke() {
  static const SmokeSetup s;
  return s;
}

}  // namespace

TEST(Train, LossDropsOverFiveHundredSteps) {
  const auto& s = smoke();
  ASSERT_EQ(s.setup.kg.num_entities(), 200u);
  auto m = Model::create(s.setup.kg, ModelConfig::for_mode(ModelMode::SeKgeFull, ModelConfig{}), 42);
  TrainConfig cfg;
  cfg.steps = 500;
  cfg.seed = 42;
  const auto h = train_qa(m, s.setup.split.train, s.qa.train, cfg);
  ASSERT_EQ(h.rows.size(), 500u);
  const double first = h.window_mean(0, 10);
  const double last = h.window_mean(490, 10);
  EXPECT_LE(last, 0.8 * first) << first << " -> " << last;
  for (std::size_t i = 0; i < h.rows.size(); ++i) {
    EXPECT_EQ(h.rows[i].step, i);
    EXPECT_EQ(h.rows[i].component, i % 2 == 0 ? "kg" : "qa");
  }
}

TEST(Train, DeterministicGivenSeed) {
  const auto& s = smoke();
  TrainConfig cfg;
  cfg.steps = 20;
  cfg.seed = 9;
  auto run = [&] {
    auto m = Model::create(s.setup.kg, small_config(ModelMode::SeKgeFull), 1);
    const auto h = train_qa(m, s.setup.split.train, s.qa.train, cfg);
    return std::pair{m.params().at("loc/W1").value.data, h.rows.back().loss_total};
  };
  EXPECT_EQ(run(), run());
}

TEST(Train, GqeSkipsKgLossAndUsesDiagonals) {
  const auto& s = smoke();
  auto m = Model::create(s.setup.kg, small_config(ModelMode::GqeDiag), 1);
  for (const auto& [name, p] : m.params()) {
    EXPECT_FALSE(name.starts_with("loc/")) << name;
    EXPECT_FALSE(name.starts_with("space/")) << name;
    if (name.starts_with("proj/")) {
      EXPECT_TRUE(name.ends_with("/diag")) << name;
      EXPECT_EQ(p.value.cols, 1u);
    }
  }
  TrainConfig cfg;
  cfg.steps = 6;
  cfg.use_kg_loss = false;
  const auto h = train_qa(m, s.setup.split.train, s.qa.train, cfg);
  for (const auto& r : h.rows) EXPECT_EQ(r.component, "qa");
}

TEST(Train, SpaceOnlyModelHasNoFeatureParameters) {
  const auto& s = smoke();
  auto m = Model::create(s.setup.kg, small_config(ModelMode::SeKgeSpace), 1);
  for (const auto& [name, p] : m.params()) {
    EXPECT_FALSE(name.starts_with("feat/")) << name;
    EXPECT_FALSE(name.ends_with("/c") || name.ends_with("/xc")) << name;
  }
  EXPECT_TRUE(m.config().loc.l2_normalize_output);
  EXPECT_EQ(m.config().loc.activation, ad::Activation::LeakyRelu);
}

TEST(Train, SslLossDrops) {
  const auto& s = smoke();
  const auto ssl = build_ssl_splits(s.setup.split, 10, 42);
  auto m = Model::create(s.setup.kg, small_config(ModelMode::SeKgeSsl, 8), 1);
  TrainConfig cfg;
  cfg.steps = 300;
  const auto h = train_ssl(m, s.setup.split.train, ssl.train, cfg);
  EXPECT_LT(h.window_mean(290, 10), h.window_mean(0, 10));
  EXPECT_EQ(h.rows[1].component, "ssl");
}

TEST(Train, CheckpointCallbackAndCsv) {
  const auto& s = smoke();
  auto m = Model::create(s.setup.kg, small_config(ModelMode::SeKgeFull), 1);
  TrainConfig cfg;
  cfg.steps = 10;
  cfg.checkpoint_every = 4;
  std::vector<std::size_t> seen;
  const auto h = train_qa(m, s.setup.split.train, s.qa.train, cfg, [&](std::size_t step, const Model&) { seen.push_back(step); });
  EXPECT_EQ(seen, (std::vector<std::size_t>{4, 8}));
  const auto path = std::filesystem::temp_directory_path() / "sekge_history.csv";
  h.write_csv(path);
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,loss_total,loss_component,wall_ms");
  std::size_t n = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 3);
    ++n;
  }
  EXPECT_EQ(n, 10u);
  std::filesystem::remove(path);
}

TEST(TrainConfig, MergeValidateAndHash) {
  TrainConfig a;
  TrainConfig b;
  b.merge({{"steps", 17}, {"learning_rate", 0.5}, {"use_kg_loss", false}});
  EXPECT_EQ(b.steps, 17u);
  EXPECT_EQ(b.adam.learning_rate, 0.5);
  EXPECT_FALSE(b.use_kg_loss);
  EXPECT_NE(a.hash(), b.hash());
  TrainConfig c;
  c.merge(b.to_json());
  EXPECT_EQ(c.hash(), b.hash());
  c.margin = 0.0;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::BadArgument);
}

TEST(ModelConfig, JsonRoundTripPerMode) {
  for (auto mode : {ModelMode::GqeDiag, ModelMode::Gqe, ModelMode::Cga, ModelMode::SeKgeDirect, ModelMode::SeKgePt,
                    ModelMode::SeKgeSpace, ModelMode::SeKgeFull, ModelMode::SeKgeSsl}) {
    const auto c = small_config(mode);
    const auto back = ModelConfig::from_json(c.to_json());
    EXPECT_EQ(back.to_json(), c.to_json()) << to_string(mode);
    EXPECT_EQ(back.hash(), c.hash());
  }
  EXPECT_NE(small_config(ModelMode::SeKgeFull).hash(), small_config(ModelMode::SeKgeSpace).hash());
}
