#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cato/commands.hpp"
#include "cato/error.hpp"
#include "cato/run_config.hpp"

namespace {

using nlohmann::json;

enum class Kind { Int, Real, Text, Flag };

// One command-line flag that overrides a RunConfig field.
struct Override {
  std::string flag;
  std::string path;  // dotted JSON path
  Kind kind;
  std::string help;
  std::optional<std::string> value;
  bool set = false;
};

std::vector<Override> make_overrides() {
  return {
      {"--seed", "seed", Kind::Int, "global seed", {}},
      {"--dataset", "dataset", Kind::Text, "dataset directory", {}},
      {"--output", "output", Kind::Text, "output directory", {}},
      {"--checkpoint", "checkpoint", Kind::Text, "model checkpoint file", {}},
      {"--checkpoint-every", "checkpoint_every", Kind::Int, "epochs between checkpoints", {}},
      {"--eval-every", "eval_every", Kind::Int, "epochs between test evaluations", {}},
      {"--limit-train", "limit_train", Kind::Int, "use at most this many training samples", {}},
      {"--limit-test", "limit_test", Kind::Int, "use at most this many test samples", {}},
      {"--eval-mode", "eval_mode", Kind::Text, "model, oracle or zeros", {}},
      {"--variant", "model.variant", Kind::Text, "cato or lift-readout", {}},
      {"--layers", "model.layers", Kind::Int, "", {}},
      {"--embed-dim", "model.embed_dim", Kind::Int, "", {}},
      {"--heads", "model.heads", Kind::Int, "", {}},
      {"--mlp-ratio", "model.mlp_ratio", Kind::Int, "", {}},
      {"--kernel", "model.kernel", Kind::Int, "local stencil size", {}},
      {"--rope-theta", "model.rope_theta", Kind::Real, "", {}},
      {"--rope-scale", "model.rope_scale", Kind::Real, "", {}},
      {"--chart-hidden", "model.chart_hidden", Kind::Int, "", {}},
      {"--dropout", "model.dropout", Kind::Real, "", {}},
      {"--core", "model.core", Kind::Flag, "core variant (no LN, no local branch)", {}},
      {"--lambda-g", "loss.lambda_g", Kind::Real, "gradient loss weight", {}},
      {"--lambda-f", "loss.lambda_f", Kind::Real, "flux loss weight", {}},
      {"--lambda-c", "loss.lambda_c", Kind::Real, "consistency loss weight", {}},
      {"--lr", "optim.lr", Kind::Real, "peak learning rate", {}},
      {"--batch", "optim.batch", Kind::Int, "", {}},
      {"--epochs", "optim.epochs", Kind::Int, "", {}},
      {"--weight-decay", "optim.weight_decay", Kind::Real, "", {}},
      {"--rows", "data.rows", Kind::Int, "", {}},
      {"--cols", "data.cols", Kind::Int, "", {}},
      {"--n-train", "data.n_train", Kind::Int, "", {}},
      {"--n-test", "data.n_test", Kind::Int, "", {}},
      {"--contrast", "data.contrast", Kind::Real, "coefficient contrast", {}},
      {"--source", "data.source", Kind::Text, "manufactured or random", {}},
      {"--distortion", "data.distortion", Kind::Real, "mesh distortion amplitude", {}},
      {"--cloud-points", "data.cloud_points", Kind::Int, "points per point-cloud sample", {}},
      {"--pc-layers", "pc.layers", Kind::Int, "", {}},
      {"--pc-embed-dim", "pc.embed_dim", Kind::Int, "", {}},
      {"--knn", "pc.knn", Kind::Int, "", {}},
      {"--grid", "theory.grid", Kind::Int, "theory grid side", {}},
      {"--M", "theory.M", Kind::Real, "input ball radius", {}},
      {"--eps-nn", "theory.eps_nn", Kind::Real, "", {}},
      {"--eps-rk", "theory.eps_rk", Kind::Real, "", {}},
      {"--delta", "theory.delta", Kind::Real, "", {}},
      {"--trials", "theory.trials", Kind::Int, "", {}},
      {"--samples", "theory.samples", Kind::Int, "", {}},
      {"--head-budget", "theory.head_budget", Kind::Int, "", {}},
  };
}

json parse_value(const Override& o) {
  switch (o.kind) {
    case Kind::Int: {
      std::size_t used = 0;
      long long v = std::stoll(*o.value, &used);
      if (used != o.value->size() || v < 0) throw cato::ConfigError(o.flag + ": expected a non-negative integer");
      return static_cast<std::uint64_t>(v);
    }
    case Kind::Real: {
      std::size_t used = 0;
      double v = std::stod(*o.value, &used);
      if (used != o.value->size()) throw cato::ConfigError(o.flag + ": expected a number");
      return v;
    }
    case Kind::Text:
      return *o.value;
    case Kind::Flag:
      return true;
  }
  return nullptr;
}

void set_path(json& root, const std::string& path, json value) {
  json* node = &root;
  std::size_t start = 0;
  for (;;) {
    auto dot = path.find('.', start);
    std::string key = path.substr(start, dot - start);
    if (dot == std::string::npos) {
      (*node)[key] = std::move(value);
      return;
    }
    json& child = (*node)[key];
    if (child.is_string()) child = json::object();  // "loss": "darcy" becomes explicit weights
    node = &child;
    start = dot + 1;
  }
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw cato::IoError("cannot read config " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

cato::RunConfig build_config(const std::string& command, const std::string& config_path,
                             const std::vector<Override>& overrides) {
  json doc = json::object();
  if (!config_path.empty()) {
    try {
      doc = json::parse(read_file(config_path));
    } catch (const json::parse_error& e) {
      throw cato::ConfigError(config_path + ": " + e.what());
    }
    if (!doc.is_object()) throw cato::ConfigError(config_path + ": top level must be an object");
  }
  for (const auto& o : overrides) {
    if (!o.set) continue;
    if (o.path.rfind("loss.", 0) == 0 && (!doc.contains("loss") || doc["loss"].is_string())) {
      // Flag-level weights start from the preset named in the file (or the default preset).
      std::string preset = doc.contains("loss") ? doc["loss"].get<std::string>() : "darcy";
      auto w = preset == "none" ? cato::LossWeights::value_only() : cato::LossWeights::darcy();
      doc["loss"] = {{"lambda_g", w.lambda_g}, {"lambda_f", w.lambda_f}, {"lambda_c", w.lambda_c}, {"eps", w.eps}};
    }
    set_path(doc, o.path, parse_value(o));
  }
  doc["command"] = command;
  return cato::run_config_from_json(doc.dump());
}

int run(const std::string& command, const cato::RunConfig& cfg) {
  if (command == "generate") {
    auto r = cato::cmd_generate(cfg);
    std::cout << json{{"manifest", r.manifest.string()}, {"digest", r.digest}}.dump() << "\n";
    return 0;
  }
  if (command == "train") {
    auto r = cato::cmd_train(cfg, &std::cerr);
    std::cout << r.final_eval.to_json() << "\n";
    return 0;
  }
  if (command == "eval") {
    std::cout << cato::cmd_eval(cfg).to_json() << "\n";
    return 0;
  }
  if (command == "train-pc") {
    auto r = cato::cmd_train_pc(cfg, &std::cerr);
    std::cout << r.final_eval.to_json() << "\n";
    return 0;
  }
  if (command == "eval-pc") {
    std::cout << cato::cmd_eval_pc(cfg).to_json() << "\n";
    return 0;
  }
  auto r = cato::cmd_verify_theory(cfg);
  for (const auto& b : r.reports) std::cout << b.to_json() << "\n";
  return r.all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Charted axial transformer operator: data generation, training and verification"};
  app.require_subcommand(1);

  std::string config_path;
  auto overrides = make_overrides();

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"generate", "write a synthetic Darcy dataset"},
      {"train", "train a grid model"},
      {"eval", "evaluate a grid model checkpoint"},
      {"verify-theory", "check the approximation and stability bounds"},
      {"train-pc", "train the point-cloud model"},
      {"eval-pc", "evaluate a point-cloud checkpoint"},
  };
  std::string chosen;
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
    for (auto& o : overrides) {
      if (o.kind == Kind::Flag) {
        sub->add_flag_callback(o.flag, [&o] { o.set = true; o.value = "true"; }, o.help);
      } else {
        sub->add_option_function<std::string>(
            o.flag, [&o](const std::string& v) { o.set = true; o.value = v; }, o.help);
      }
    }
    sub->callback([&chosen, name = name] { chosen = name; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    auto cfg = build_config(chosen, config_path, overrides);
    return run(chosen, cfg);
  } catch (const cato::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const cato::ShapeError& e) {
    std::cerr << "shape error: " << e.what() << "\n";
    return 1;
  } catch (const cato::IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 1;
  } catch (const cato::FitError& e) {
    std::cerr << "fit failure: " << e.what() << "\n";
    return 2;
  } catch (const cato::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "bad argument: " << e.what() << "\n";
    return 1;
  } catch (const std::out_of_range& e) {
    std::cerr << "bad argument: " << e.what() << "\n";
    return 1;
  }
}
