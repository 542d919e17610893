#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <set>
#include <string>

#include "CLI11.hpp"
#include "sekge/sekge.hpp"
#include "sekge/service.hpp"

using namespace sekge;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::uint64_t seed = 0;
  std::string config;

  nlohmann::json config_json() const {
    if (config.empty()) return nlohmann::json::object();
    auto j = read_json_file(config);
    require(j.is_object(), ErrorKind::ParseError, config + ": config must be a JSON object");
    return j;
  }
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "random seed")->capture_default_str();
  cmd->add_option("--config", c.config, "JSON config file")->check(CLI::ExistingFile);
}

void log(const std::string& msg) { std::cerr << msg << '\n'; }

void print_json(const nlohmann::json& j) { std::cout << j.dump(2) << '\n'; }

// Model fields a config file may override. Dimensions and the schedule are
// applied before the mode's structural defaults.
ModelConfig model_config(ModelMode mode, const nlohmann::json& j) {
  ModelConfig base;
  if (auto it = j.find("feat_dim"); it != j.end()) base.feat_dim = it->get<std::size_t>();
  if (auto it = j.find("space_dim"); it != j.end()) base.space_dim = it->get<std::size_t>();
  const auto scales = j.value("scales", base.loc.schedule.scales);
  const auto lmin = j.value("lambda_min", base.loc.schedule.lambda_min);
  const auto lmax = j.value("lambda_max", base.loc.schedule.lambda_max);
  base.loc.schedule = make_schedule(scales, lmin, lmax);
  if (auto it = j.find("directions"); it != j.end()) base.loc.layout = parse_layout(it->get<std::string>());
  auto c = ModelConfig::for_mode(mode, base);
  if (auto it = j.find("location_activation"); it != j.end()) c.loc.activation = ad::parse_activation(it->get<std::string>());
  if (auto it = j.find("location_l2_normalize"); it != j.end()) c.loc.l2_normalize_output = it->get<bool>();
  if (auto it = j.find("intersection_activation"); it != j.end()) c.intersection_activation = ad::parse_activation(it->get<std::string>());
  return c;
}

struct TrainFlags {
  std::optional<std::size_t> steps, batch_size, negatives;
  std::optional<double> learning_rate, margin;
  bool no_kg_loss = false;
};

void add_train_flags(CLI::App* cmd, TrainFlags& f) {
  cmd->add_option("--steps", f.steps, "optimizer steps");
  cmd->add_option("--batch-size", f.batch_size, "examples per batch");
  cmd->add_option("--negatives", f.negatives, "negatives per training example");
  cmd->add_option("--learning-rate", f.learning_rate, "Adam learning rate");
  cmd->add_option("--margin", f.margin, "hinge margin");
}

TrainConfig train_config(ModelMode mode, const Common& c, const TrainFlags& f) {
  TrainConfig tc;
  // baselines are trained on QA pairs only unless the config says otherwise
  tc.use_kg_loss = !(mode == ModelMode::Gqe || mode == ModelMode::GqeDiag || mode == ModelMode::Cga);
  tc.merge(c.config_json());
  tc.seed = c.seed;
  if (f.steps) tc.steps = *f.steps;
  if (f.batch_size) tc.batch_size = *f.batch_size;
  if (f.negatives) tc.negatives = *f.negatives;
  if (f.learning_rate) tc.adam.learning_rate = *f.learning_rate;
  if (f.margin) tc.margin = *f.margin;
  if (f.no_kg_loss) tc.use_kg_loss = false;
  tc.validate();
  return tc;
}

void save_trained(const Model& m, const fs::path& out, const History& h, const TrainConfig& tc, const std::string& objective) {
  CheckpointInfo info;
  info.train = {{"objective", objective},
                {"config", tc.to_json()},
                {"config_hash", tc.hash()},
                {"optimizer", "adam"},
                {"steps", h.rows.size()},
                {"final_loss_total", h.rows.empty() ? 0.0 : h.rows.back().loss_total}};
  save_checkpoint(m, out, info);
  h.write_csv(out.string() + ".history.csv");
  log("wrote " + out.string() + " (config " + m.config().hash() + ", train " + tc.hash() + ")");
}

StepCallback snapshot_writer(const fs::path& out) {
  return [out](std::size_t step, const Model& m) { save_checkpoint(m, out.string() + ".step" + std::to_string(step)); };
}

// Degree filter, split and lifting examples; shared by build-dataset and synth.
void build_dataset(std::vector<RawTriple> triples, std::vector<EntityRecord> meta, const StudyArea& area, std::size_t eta_geo,
                   std::size_t eta_nongeo, const std::string& ratio, std::size_t ssl_negatives, std::uint64_t seed,
                   const fs::path& out) {
  std::set<std::string> geo;
  for (const auto& r : meta)
    if (r.point || r.bbox) geo.insert(r.id);
  const std::size_t before = triples.size();
  triples = degree_filter(triples, [&](const std::string& e) { return geo.contains(e); }, eta_geo, eta_nongeo);
  std::set<std::string> used;
  for (const auto& t : triples) {
    used.insert(t.head);
    used.insert(t.tail);
  }
  std::erase_if(meta, [&](const EntityRecord& r) { return !used.contains(r.id); });
  log("degree filter kept " + std::to_string(triples.size()) + " of " + std::to_string(before) + " triples");

  const GeoKG kg = load_kg(triples, meta, area);
  const KGSplit split = split_kg(kg, parse_ratio(ratio), seed);
  save_split_dir(out, split, {{"seed", seed}, {"split", ratio}, {"eta_geo", eta_geo}, {"eta_nongeo", eta_nongeo}});
  const auto ssl = build_ssl_splits(split, ssl_negatives, seed);
  fs::create_directories(out / "ssl");
  save_ssl_dir(out / "ssl", ssl, split.full.vocab());
  print_json(read_json_file(out / "stats.json"));
}

Model load_model(const std::string& path) { return load_checkpoint(path).model; }

nlohmann::json ranked_json(const Model& m, const RankedAnswers& r) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : r) out.push_back({{"entity", m.vocab().entity_names.at(s.entity)}, {"score", s.score}});
  return {{"ranked", out}};
}

void write_report(const EvalReport& rep, const std::string& path) {
  write_json_file(path, rep.to_json());
  std::cout << rep.to_text();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spatially explicit knowledge graph embeddings: datasets, training, evaluation and serving"};
  app.require_subcommand(1);

  Common common;

  // build-dataset
  std::string triples_f, meta_f, area_f, out_dir, split_ratio = "90:1:9";
  std::size_t eta_geo = 5, eta_nongeo = 10, ssl_neg = 10;
  auto* build = app.add_subcommand("build-dataset", "filter, split and write a geographic KG");
  add_common(build, common);
  build->add_option("--triples", triples_f, "head<TAB>relation<TAB>tail file")->required()->check(CLI::ExistingFile);
  build->add_option("--meta", meta_f, "entity records, one JSON object per line")->required()->check(CLI::ExistingFile);
  build->add_option("--area", area_f, "study area JSON")->required()->check(CLI::ExistingFile);
  build->add_option("--eta-geo", eta_geo, "minimum degree of geographic entities")->capture_default_str();
  build->add_option("--eta-nongeo", eta_nongeo, "minimum degree of other entities")->capture_default_str();
  build->add_option("--split", split_ratio, "train:valid:test ratio")->capture_default_str();
  build->add_option("--ssl-negatives", ssl_neg, "negatives per lifting example")->capture_default_str();
  build->add_option("--out", out_dir, "output directory")->required();

  // synth
  SynthConfig synth_cfg;
  auto* synth = app.add_subcommand("synth", "generate a synthetic geographic KG and build a dataset from it");
  add_common(synth, common);
  synth->add_option("--regions", synth_cfg.n_regions)->capture_default_str();
  synth->add_option("--places", synth_cfg.n_places)->capture_default_str();
  synth->add_option("--agents", synth_cfg.n_agents)->capture_default_str();
  synth->add_option("--split", split_ratio, "train:valid:test ratio")->capture_default_str();
  synth->add_option("--ssl-negatives", ssl_neg)->capture_default_str();
  synth->add_option("--out", out_dir)->required();

  // sample-queries
  std::string kg_dir, qa_dir;
  std::size_t per_dag = 100;
  std::optional<std::size_t> per_dag_eval;
  bool geo_only = false;
  SamplerConfig sampler_cfg;
  auto* sample = app.add_subcommand("sample-queries", "sample QA examples for the ten query shapes");
  add_common(sample, common);
  sample->add_option("--kg", kg_dir, "dataset directory")->required()->check(CLI::ExistingDirectory);
  sample->add_option("--per-dag", per_dag, "training queries per query shape")->capture_default_str();
  sample->add_option("--per-dag-eval", per_dag_eval, "valid and test queries per shape (default: --per-dag)");
  sample->add_flag("--geo-only", geo_only, "answers must be geographic");
  sample->add_option("--negatives", sampler_cfg.negatives)->capture_default_str();
  sample->add_option("--max-attempts", sampler_cfg.max_attempts)->capture_default_str();
  sample->add_option("--out", out_dir)->required();

  // train-qa / train-ssl
  std::string mode_s, ckpt_out, ssl_dir;
  TrainFlags tflags;
  auto* train_qa_cmd = app.add_subcommand("train-qa", "train on link prediction and QA pairs");
  add_common(train_qa_cmd, common);
  add_train_flags(train_qa_cmd, tflags);
  train_qa_cmd->add_flag("--no-kg-loss", tflags.no_kg_loss, "train on QA batches only");
  train_qa_cmd->add_option("--kg", kg_dir)->required()->check(CLI::ExistingDirectory);
  train_qa_cmd->add_option("--qa", qa_dir)->required()->check(CLI::ExistingDirectory);
  train_qa_cmd->add_option("--mode", mode_s)
      ->required()
      ->check(CLI::IsMember({"se-kge-full", "cga", "gqe", "gqe-diag", "se-kge-direct", "se-kge-pt", "se-kge-space"}));
  train_qa_cmd->add_option("--out", ckpt_out)->required();

  auto* train_ssl_cmd = app.add_subcommand("train-ssl", "train for spatial semantic lifting");
  add_common(train_ssl_cmd, common);
  add_train_flags(train_ssl_cmd, tflags);
  train_ssl_cmd->add_option("--kg", kg_dir)->required()->check(CLI::ExistingDirectory);
  train_ssl_cmd->add_option("--ssl", ssl_dir)->required()->check(CLI::ExistingDirectory);
  train_ssl_cmd->add_option("--mode", mode_s)->required()->check(CLI::IsMember({"se-kge-ssl", "se-kge-space"}));
  train_ssl_cmd->add_option("--out", ckpt_out)->required();

  // eval
  std::string ckpt, report;
  bool use_valid = false;
  auto* eval_qa_cmd = app.add_subcommand("eval-qa", "AUC and APR per query shape");
  add_common(eval_qa_cmd, common);
  eval_qa_cmd->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  eval_qa_cmd->add_option("--qa", qa_dir)->required()->check(CLI::ExistingDirectory);
  eval_qa_cmd->add_option("--report", report)->required();
  eval_qa_cmd->add_flag("--valid", use_valid, "evaluate the validation split instead of test");

  auto* eval_ssl_cmd = app.add_subcommand("eval-ssl", "AUC and APR per lifting relation");
  add_common(eval_ssl_cmd, common);
  eval_ssl_cmd->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  eval_ssl_cmd->add_option("--ssl", ssl_dir)->required()->check(CLI::ExistingDirectory);
  eval_ssl_cmd->add_option("--report", report)->required();
  eval_ssl_cmd->add_flag("--valid", use_valid, "evaluate the validation split instead of test");

  // grid-export
  double cell_m = 20000.0;
  std::size_t clusters = 8;
  std::string out_file;
  auto* grid = app.add_subcommand("grid-export", "cluster location embeddings of a regular grid");
  add_common(grid, common);
  grid->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  grid->add_option("--cell-m", cell_m, "cell size in meters")->capture_default_str();
  grid->add_option("--k", clusters, "number of clusters")->capture_default_str();
  grid->add_option("--out", out_file)->required();

  // answer / lift
  std::string query_f, relation, dir_s = "fwd", cand_s = "all";
  std::size_t k = 10;
  double x = 0, y = 0;
  auto* answer = app.add_subcommand("answer", "rank entities for a conjunctive query");
  add_common(answer, common);
  answer->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  answer->add_option("--query", query_f, "query JSON (one object)")->required()->check(CLI::ExistingFile);
  answer->add_option("--k", k)->capture_default_str()->check(CLI::PositiveNumber);
  answer->add_option("--candidates", cand_s)->capture_default_str()->check(CLI::IsMember({"all", "geo", "type"}));

  auto* lift_cmd = app.add_subcommand("lift", "rank entities related to a location");
  add_common(lift_cmd, common);
  lift_cmd->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  lift_cmd->add_option("--x", x)->required();
  lift_cmd->add_option("--y", y)->required();
  lift_cmd->add_option("--relation", relation)->required();
  lift_cmd->add_option("--dir", dir_s)->capture_default_str()->check(CLI::IsMember({"fwd", "inv"}));
  lift_cmd->add_option("--k", k)->capture_default_str()->check(CLI::PositiveNumber);
  lift_cmd->add_option("--candidates", cand_s)->capture_default_str()->check(CLI::IsMember({"all", "geo", "type"}));

  // serve
  std::string addr = "127.0.0.1:8080";
  auto* serve = app.add_subcommand("serve", "HTTP inference service over a checkpoint");
  add_common(serve, common);
  serve->add_option("--ckpt", ckpt)->required()->check(CLI::ExistingFile);
  serve->add_option("--addr", addr, "HOST:PORT")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*build) {
      auto tin = open_in(triples_f);
      auto min = open_in(meta_f);
      build_dataset(parse_triples_tsv(tin), parse_entities_jsonl(min), study_area_from_json(read_json_file(area_f)), eta_geo,
                    eta_nongeo, split_ratio, ssl_neg, common.seed, out_dir);
    } else if (*synth) {
      const auto s = synth_geokg(synth_cfg, common.seed);
      const fs::path out(out_dir);
      fs::create_directories(out / "raw");
      {
        auto o = open_out(out / "raw" / "triples.tsv");
        write_triples_tsv(o, s.triples);
      }
      {
        auto o = open_out(out / "raw" / "entities.jsonl");
        write_entities_jsonl(o, s.entities);
      }
      write_json_file(out / "raw" / "area.json", study_area_to_json(s.area));
      // the generator already has the degrees it wants; no filtering
      build_dataset(s.triples, s.entities, s.area, 1, 1, split_ratio, ssl_neg, common.seed, out);
    } else if (*sample) {
      const auto split = load_split_dir(kg_dir);
      const std::size_t eval_n = per_dag_eval.value_or(per_dag);
      const auto ds = build_qa_dataset(split, {per_dag, eval_n, eval_n}, geo_only, common.seed, sampler_cfg);
      save_qa_dir(out_dir, ds, split.full.vocab());
      log("wrote " + std::to_string(ds.train.size()) + "/" + std::to_string(ds.valid.size()) + "/" +
          std::to_string(ds.test.size()) + " queries to " + out_dir);
    } else if (*train_qa_cmd) {
      const auto mode = parse_mode(mode_s);
      const auto split = load_split_dir(kg_dir);
      const auto qa = load_qa_dir(qa_dir, split.full.vocab());
      const auto tc = train_config(mode, common, tflags);
      Model m = Model::create(split.train, model_config(mode, common.config_json()), common.seed);
      m.set_liftable(build_ssl_dataset(split.train).relations);
      log("training " + mode_s + " d=" + std::to_string(m.dim()) + " for " + std::to_string(tc.steps) + " steps");
      const auto h = train_qa(m, split.train, qa.train, tc, snapshot_writer(ckpt_out));
      save_trained(m, ckpt_out, h, tc, tc.use_kg_loss ? "kg+qa" : "qa");
    } else if (*train_ssl_cmd) {
      const auto mode = parse_mode(mode_s);
      const auto split = load_split_dir(kg_dir);
      const auto ssl = load_ssl_dir(ssl_dir, split.full.vocab());
      const auto tc = train_config(mode, common, tflags);
      Model m = Model::create(split.train, model_config(mode, common.config_json()), common.seed);
      m.set_liftable(ssl.relations);
      log("training " + mode_s + " d=" + std::to_string(m.dim()) + " for " + std::to_string(tc.steps) + " steps");
      const auto h = train_ssl(m, split.train, ssl.train, tc, snapshot_writer(ckpt_out));
      save_trained(m, ckpt_out, h, tc, "lp+ssl");
    } else if (*eval_qa_cmd) {
      const Model m = load_model(ckpt);
      const auto qa = load_qa_dir(qa_dir, m.vocab());
      auto rep = eval_qa(m, use_valid ? qa.valid : qa.test);
      rep.seed = m.seed();
      write_report(rep, report);
    } else if (*eval_ssl_cmd) {
      const Model m = load_model(ckpt);
      const auto ssl = load_ssl_dir(ssl_dir, m.vocab());
      auto rep = eval_ssl(m, use_valid ? ssl.valid : ssl.test);
      rep.seed = m.seed();
      write_report(rep, report);
    } else if (*grid) {
      const Model m = load_model(ckpt);
      const auto cells = grid_cluster_export(m, cell_m, clusters);
      {
        auto o = open_out(out_file);
        for (const auto& c : cells) o << grid_cell_json(c).dump() << '\n';
      }
      write_json_file(out_file + ".meta.json", {{"cells", cells.size()},
                                                 {"cell_m", cell_m},
                                                 {"k", clusters},
                                                 {"linkage", "average"},
                                                 {"distance", "cosine"},
                                                 {"note", "cluster count and linkage are artifact defaults"},
                                                 {"config_hash", m.config().hash()}});
      log("wrote " + std::to_string(cells.size()) + " cells to " + out_file);
    } else if (*answer) {
      const Model m = load_model(ckpt);
      const auto ex = query_from_json(read_json_file(query_f), m.vocab());
      print_json(ranked_json(m, answer_query(m, ex.query, k, parse_candidates(cand_s))));
    } else if (*lift_cmd) {
      const Model m = load_model(ckpt);
      print_json(ranked_json(m, lift(m, {x, y}, m.relation(relation), parse_direction(dir_s), k, parse_candidates(cand_s))));
    } else if (*serve) {
      const auto [host, port] = parse_address(addr);
      Service svc(load_model(ckpt));
      httplib::Server server;
      svc.mount(server);
      log("listening on " + addr);
      if (!server.listen(host, port)) fail(ErrorKind::IoFailure, "cannot bind " + addr);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << to_string(e.kind()) << ": " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
