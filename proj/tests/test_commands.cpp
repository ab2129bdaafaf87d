#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "cato/checkpoint.hpp"
#include "cato/commands.hpp"
#include "cato/error.hpp"

using namespace cato;
namespace fs = std::filesystem;

namespace {

// One small dataset shared by every case in this file.
const fs::path& tiny_dataset() {
  static const fs::path dir = [] {
    auto p = fs::temp_directory_path() / "cato_cmd_data";
    fs::remove_all(p);
    DatasetConfig cfg;
    cfg.rows = 8;
    cfg.cols = 8;
    cfg.n_train = 4;
    cfg.n_test = 3;
    cfg.cloud_points = 24;
    write_dataset(cfg, p);
    return p;
  }();
  return dir;
}

RunConfig tiny_run(const std::string& out) {
  RunConfig cfg;
  cfg.dataset = tiny_dataset().string();
  cfg.output = (fs::temp_directory_path() / out).string();
  cfg.model.layers = 1;
  cfg.model.embed_dim = 8;
  cfg.model.heads = 2;
  cfg.model.mlp_ratio = 2;
  cfg.model.chart_hidden = 8;
  cfg.model.lift_hidden = 8;
  cfg.optim.epochs = 2;
  cfg.optim.batch = 2;
  cfg.optim.lr = 1e-3;
  cfg.pc.layers = 1;
  cfg.pc.embed_dim = 8;
  cfg.pc.heads = 2;
  cfg.pc.knn = 4;
  cfg.pc.chart_hidden = 8;
  return cfg;
}

std::size_t count_lines(const fs::path& p, const std::string& needle) {
  std::ifstream is(p);
  std::size_t n = 0;
  for (std::string line; std::getline(is, line);) n += line.find(needle) != std::string::npos;
  return n;
}

}  // namespace

TEST_CASE("run config json") {
  auto cfg = run_config_from_json(R"({"seed": 3, "model": {"layers": 2}, "optim": {"lr": 0.002}, "loss": "none"})");
  CHECK(cfg.seed == 3);
  CHECK(cfg.data.seed == 3);
  CHECK(cfg.model.layers == 2);
  CHECK(cfg.optim.lr == 0.002);
  CHECK(cfg.loss.lambda_g == 0.0);
  CHECK(run_config_from_json(R"({"loss": "darcy"})").loss.lambda_g == 0.2);
  auto w = run_config_from_json(R"({"loss": {"lambda_g": 0.5}})").loss;
  CHECK(w.lambda_g == 0.5);
  CHECK(w.lambda_f == 0.0);
  CHECK_THROWS_AS(run_config_from_json(R"({"sed": 3})"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(R"({"model": {"layers": "two"}})"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json(R"({"loss": "strong"})"), ConfigError);
  CHECK_THROWS_AS(run_config_from_json("{"), ConfigError);
  auto back = run_config_from_json(run_config_to_json(cfg));
  CHECK(run_config_to_json(back) == run_config_to_json(cfg));
}

TEST_CASE("zero epochs leave the initialization untouched") {
  RunConfig cfg = tiny_run("cato_cmd_zero");
  cfg.optim.epochs = 0;
  Dataset ds = load_dataset(tiny_dataset());
  TrainResult r = train(ds, cfg, false);
  CatoConfig mc = cfg.model;
  mc.feature_dim = 1;
  ModelState init = ModelState::create(mc, cfg.seed);
  auto a = r.model.parameters(), b = init.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(max_abs_diff(a[k]->value, b[k]->value) == 0.0);
  CHECK(r.epoch_loss.empty());
  CHECK(r.final_eval.per_sample.size() == 3);
}

TEST_CASE("training writes its artifacts and is reproducible") {
  RunConfig cfg = tiny_run("cato_cmd_train");
  fs::remove_all(cfg.output);
  std::ostringstream progress;
  TrainResult r = cmd_train(cfg, &progress);
  const fs::path out(cfg.output);
  for (const char* f : {"config.json", "model.json", "metrics.jsonl", "model.cato", "eval.json"})
    CHECK(fs::exists(out / f));
  CHECK(count_lines(out / "metrics.jsonl", "\"kind\":\"step\"") == 4);
  CHECK(count_lines(out / "metrics.jsonl", "\"kind\":\"epoch\"") == 2);
  CHECK(r.epoch_loss.size() == 2);
  CHECK(progress.str().find("\"epoch\":1") != std::string::npos);

  Dataset ds = load_dataset(tiny_dataset());
  TrainResult again = train(ds, cfg, false);
  auto a = r.model.parameters(), b = again.model.parameters();
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(max_abs_diff(a[k]->value, b[k]->value) == 0.0);

  // eval from the saved checkpoint reproduces the final evaluation
  EvalReport ev = cmd_eval(cfg);
  CHECK(ev.mean_rel_l2 == doctest::Approx(r.final_eval.mean_rel_l2).epsilon(1e-14));
  double mean = 0.0;
  for (double e : ev.per_sample) mean += e;
  CHECK(ev.mean_rel_l2 == doctest::Approx(mean / 3.0).epsilon(1e-14));
  CHECK(ev.parameter_count == r.model.parameter_count());
  fs::remove_all(out);
}

TEST_CASE("loss presets change what gets logged") {
  Dataset ds = load_dataset(tiny_dataset());
  RunConfig cfg = tiny_run("unused");
  cfg.optim.epochs = 1;
  cfg.loss = LossWeights::value_only();
  auto plain = train(ds, cfg, false);
  cfg.loss = LossWeights::darcy();
  auto physics = train(ds, cfg, false);
  REQUIRE(plain.epoch_loss.size() == 1);
  // every term is measured either way; only the weighting differs
  CHECK(plain.epoch_loss[0].grad > 0.0);
  CHECK(plain.epoch_loss[0].total == doctest::Approx(plain.epoch_loss[0].val));
  CHECK(physics.epoch_loss[0].total > physics.epoch_loss[0].val);
}

TEST_CASE("eval reference modes") {
  RunConfig cfg = tiny_run("unused");
  cfg.eval_mode = EvalMode::Oracle;
  auto oracle = cmd_eval(cfg);
  CHECK(oracle.mean_rel_l2 == 0.0);
  CHECK(oracle.grad_mse == 0.0);
  cfg.eval_mode = EvalMode::Zeros;
  auto zeros = cmd_eval(cfg);
  CHECK(zeros.mean_rel_l2 == doctest::Approx(1.0));
  CHECK(zeros.grad_mse > 0.0);
  cfg.eval_mode = EvalMode::Model;
  cfg.checkpoint = (fs::temp_directory_path() / "cato_missing" / "model.cato").string();
  CHECK_THROWS_AS(cmd_eval(cfg), IoError);
}

TEST_CASE("point cloud training") {
  RunConfig cfg = tiny_run("cato_cmd_pc");
  fs::remove_all(cfg.output);
  auto r = cmd_train_pc(cfg);
  CHECK(r.epoch_loss.size() == 2);
  CHECK(r.final_eval.per_sample.size() == 3);
  auto ev = cmd_eval_pc(cfg);
  CHECK(ev.mean_rel_l2 == doctest::Approx(r.final_eval.mean_rel_l2).epsilon(1e-14));
  fs::remove_all(cfg.output);
}

TEST_CASE("theory verification passes with default budgets") {
  RunConfig cfg;
  cfg.theory.samples = 32;
  cfg.theory.trials = 20;
  auto res = cmd_verify_theory(cfg);
  CHECK(res.all_pass);
  CHECK(res.reports.size() == 9);
  for (const auto& r : res.reports) {
    INFO(r.to_json());
    CHECK(r.pass);
    CHECK(r.margin == doctest::Approx(r.bound - r.measured));
  }
}

TEST_CASE("generate is deterministic per seed") {
  RunConfig cfg;
  cfg.data.rows = 6;
  cfg.data.cols = 6;
  cfg.data.n_train = 2;
  cfg.data.n_test = 1;
  cfg.dataset = (fs::temp_directory_path() / "cato_cmd_gen_a").string();
  fs::remove_all(cfg.dataset);
  auto a = cmd_generate(cfg);
  cfg.dataset = (fs::temp_directory_path() / "cato_cmd_gen_b").string();
  fs::remove_all(cfg.dataset);
  auto b = cmd_generate(cfg);
  CHECK(a.digest == b.digest);
  CHECK(a.digest.size() == 16);
  cfg.seed = 1;
  fs::remove_all(cfg.dataset);
  CHECK(cmd_generate(cfg).digest != a.digest);
  fs::remove_all(cfg.dataset);
  fs::remove_all(a.manifest.parent_path());
}
