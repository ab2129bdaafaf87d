#include "cato/run_config.hpp"

#include <set>
#include <type_traits>

#include "json.hpp"

#include "cato/error.hpp"

namespace cato {

using nlohmann::json;

namespace {

// Reads declared keys from one JSON object and rejects anything else.
class Section {
 public:
  Section(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
    if (!obj_.is_object()) throw ConfigError("'" + path_ + "' must be a JSON object");
  }

  template <class T>
  Section& field(const char* key, T& dst) {
    known_.insert(key);
    auto it = obj_.find(key);
    if (it == obj_.end()) return *this;
    const json& v = *it;
    const std::string where = path_.empty() ? std::string(key) : path_ + "." + key;
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("'" + where + "' must be a boolean");
      dst = v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
        throw ConfigError("'" + where + "' must be a non-negative integer");
      }
      dst = v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ConfigError("'" + where + "' must be a number");
      dst = v.get<T>();
    } else {
      if (!v.is_string()) throw ConfigError("'" + where + "' must be a string");
      dst = v.get<std::string>();
    }
    return *this;
  }

  /// Nested object, handed to `fn` when present.
  template <class F>
  Section& object(const char* key, F&& fn) {
    known_.insert(key);
    auto it = obj_.find(key);
    if (it != obj_.end()) fn(Section(*it, path_.empty() ? std::string(key) : path_ + "." + key));
    return *this;
  }

  /// Registers a key that the caller parses itself.
  Section& allow(const char* key) {
    known_.insert(key);
    return *this;
  }

  void finish() const {
    for (auto it = obj_.begin(); it != obj_.end(); ++it) {
      if (!known_.count(it.key())) {
        throw ConfigError("unknown key '" + (path_.empty() ? it.key() : path_ + "." + it.key()) + "'");
      }
    }
  }

 private:
  const json& obj_;
  std::string path_;
  std::set<std::string> known_;
};

void read_model(Section s, CatoConfig& m) {
  std::string variant = to_string(m.variant);
  s.field("variant", variant)
      .field("layers", m.layers)
      .field("embed_dim", m.embed_dim)
      .field("heads", m.heads)
      .field("mlp_ratio", m.mlp_ratio)
      .field("kernel", m.kernel)
      .field("rope_theta", m.rope_theta)
      .field("rope_scale", m.rope_scale)
      .field("chart_hidden", m.chart_hidden)
      .field("feature_dim", m.feature_dim)
      .field("lift_hidden", m.lift_hidden)
      .field("dropout", m.dropout)
      .field("ln_eps", m.ln_eps)
      .field("core", m.core)
      .finish();
  m.variant = model_variant_from_string(variant);
}

json model_json(const CatoConfig& m) {
  return {{"variant", to_string(m.variant)}, {"layers", m.layers},       {"embed_dim", m.embed_dim},
          {"heads", m.heads},                {"mlp_ratio", m.mlp_ratio}, {"kernel", m.kernel},
          {"rope_theta", m.rope_theta},      {"rope_scale", m.rope_scale}, {"chart_hidden", m.chart_hidden},
          {"feature_dim", m.feature_dim},    {"lift_hidden", m.lift_hidden}, {"dropout", m.dropout},
          {"ln_eps", m.ln_eps},              {"core", m.core}};
}

void read_pc(Section s, PcConfig& p) {
  s.field("layers", p.layers)
      .field("embed_dim", p.embed_dim)
      .field("heads", p.heads)
      .field("mlp_ratio", p.mlp_ratio)
      .field("knn", p.knn)
      .field("chart_hidden", p.chart_hidden)
      .field("feature_dim", p.feature_dim)
      .field("gate_init", p.gate_init)
      .field("ln_eps", p.ln_eps)
      .finish();
}

json pc_json(const PcConfig& p) {
  return {{"layers", p.layers}, {"embed_dim", p.embed_dim},       {"heads", p.heads},
          {"mlp_ratio", p.mlp_ratio}, {"knn", p.knn},             {"chart_hidden", p.chart_hidden},
          {"feature_dim", p.feature_dim}, {"gate_init", p.gate_init}, {"ln_eps", p.ln_eps}};
}

json parse(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("invalid JSON: ") + e.what());
  }
}

}  // namespace

std::string to_string(EvalMode m) {
  switch (m) {
    case EvalMode::Model: return "model";
    case EvalMode::Oracle: return "oracle";
    case EvalMode::Zeros: return "zeros";
  }
  return "model";
}

namespace {
EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "model") return EvalMode::Model;
  if (s == "oracle") return EvalMode::Oracle;
  if (s == "zeros") return EvalMode::Zeros;
  throw ConfigError("unknown eval mode '" + s + "'");
}
}  // namespace

void RunConfig::validate() const {
  model.validate();
  loss.validate();
  data.validate();
  pc.validate();
  if (optim.batch == 0) throw ConfigError("batch size must be positive");
  if (!(optim.lr > 0.0)) throw ConfigError("learning rate must be positive");
  if (!(optim.weight_decay >= 0.0)) throw ConfigError("weight decay must be non-negative");
  if (!(optim.beta1 >= 0.0 && optim.beta1 < 1.0 && optim.beta2 >= 0.0 && optim.beta2 < 1.0)) {
    throw ConfigError("Adam betas must lie in [0, 1)");
  }
  if (!(optim.eps > 0.0)) throw ConfigError("optimizer eps must be positive");
  if (!(optim.warmup_fraction >= 0.0 && optim.warmup_fraction < 1.0)) throw ConfigError("warm-up fraction must lie in [0, 1)");
  if (!(optim.div_factor >= 1.0)) throw ConfigError("div factor must be >= 1");
  if (checkpoint_every == 0 || eval_every == 0) throw ConfigError("checkpoint_every and eval_every must be positive");
  if (theory.grid < 3) throw ConfigError("theory grid must be at least 3");
  if (!(theory.M > 0.0 && theory.eps_nn > 0.0 && theory.eps_rk >= 0.0 && theory.delta >= 0.0)) {
    throw ConfigError("theory bounds must be positive (eps_rk and delta non-negative)");
  }
}

RunConfig run_config_from_json(const std::string& text) {
  const json root = parse(text);
  RunConfig cfg;
  std::string eval_mode = to_string(cfg.eval_mode);
  Section top(root, "");
  top.field("command", cfg.command)
      .field("seed", cfg.seed)
      .field("dataset", cfg.dataset)
      .field("output", cfg.output)
      .field("checkpoint", cfg.checkpoint)
      .field("checkpoint_every", cfg.checkpoint_every)
      .field("eval_every", cfg.eval_every)
      .field("limit_train", cfg.limit_train)
      .field("limit_test", cfg.limit_test)
      .field("eval_mode", eval_mode)
      .object("model", [&](Section s) { read_model(std::move(s), cfg.model); })
      .object("pc", [&](Section s) { read_pc(std::move(s), cfg.pc); })
      .object("optim", [&](Section s) {
        OptimConfig& o = cfg.optim;
        s.field("lr", o.lr)
            .field("batch", o.batch)
            .field("epochs", o.epochs)
            .field("weight_decay", o.weight_decay)
            .field("beta1", o.beta1)
            .field("beta2", o.beta2)
            .field("eps", o.eps)
            .field("warmup_fraction", o.warmup_fraction)
            .field("div_factor", o.div_factor)
            .finish();
      })
      .object("data", [&](Section s) {
        DatasetConfig& d = cfg.data;
        std::string source = to_string(d.source);
        s.field("rows", d.rows)
            .field("cols", d.cols)
            .field("n_train", d.n_train)
            .field("n_test", d.n_test)
            .field("contrast", d.contrast)
            .field("modes", d.modes)
            .field("source", source)
            .field("distortion", d.distortion)
            .field("cloud_points", d.cloud_points)
            .finish();
        d.source = source_mode_from_string(source);
      })
      .object("theory", [&](Section s) {
        TheoryConfig& t = cfg.theory;
        s.field("grid", t.grid)
            .field("M", t.M)
            .field("eps_nn", t.eps_nn)
            .field("eps_rk", t.eps_rk)
            .field("delta", t.delta)
            .field("trials", t.trials)
            .field("samples", t.samples)
            .field("head_budget", t.head_budget)
            .finish();
      });
  // loss: preset name or explicit weights
  top.allow("loss");
  if (auto it = root.find("loss"); it != root.end()) {
    if (it->is_string()) {
      const std::string preset = it->get<std::string>();
      if (preset == "darcy") cfg.loss = LossWeights::darcy();
      else if (preset == "none") cfg.loss = LossWeights::value_only();
      else throw ConfigError("unknown loss preset '" + preset + "'");
    } else {
      cfg.loss = LossWeights{};
      Section(*it, "loss")
          .field("lambda_g", cfg.loss.lambda_g)
          .field("lambda_f", cfg.loss.lambda_f)
          .field("lambda_c", cfg.loss.lambda_c)
          .field("eps", cfg.loss.eps)
          .finish();
    }
  }
  top.finish();
  cfg.eval_mode = eval_mode_from_string(eval_mode);
  cfg.data.seed = cfg.seed;
  cfg.validate();
  return cfg;
}

std::string run_config_to_json(const RunConfig& c) {
  const OptimConfig& o = c.optim;
  const DatasetConfig& d = c.data;
  const TheoryConfig& t = c.theory;
  json j = {{"command", c.command},
            {"seed", c.seed},
            {"dataset", c.dataset},
            {"output", c.output},
            {"checkpoint", c.checkpoint},
            {"checkpoint_every", c.checkpoint_every},
            {"eval_every", c.eval_every},
            {"limit_train", c.limit_train},
            {"limit_test", c.limit_test},
            {"eval_mode", to_string(c.eval_mode)},
            {"model", model_json(c.model)},
            {"pc", pc_json(c.pc)},
            {"loss", {{"lambda_g", c.loss.lambda_g}, {"lambda_f", c.loss.lambda_f}, {"lambda_c", c.loss.lambda_c},
                      {"eps", c.loss.eps}}},
            {"optim", {{"lr", o.lr}, {"batch", o.batch}, {"epochs", o.epochs}, {"weight_decay", o.weight_decay},
                       {"beta1", o.beta1}, {"beta2", o.beta2}, {"eps", o.eps},
                       {"warmup_fraction", o.warmup_fraction}, {"div_factor", o.div_factor}}},
            {"data", {{"rows", d.rows}, {"cols", d.cols}, {"n_train", d.n_train}, {"n_test", d.n_test},
                      {"contrast", d.contrast}, {"modes", d.modes}, {"source", to_string(d.source)},
                      {"distortion", d.distortion}, {"cloud_points", d.cloud_points}}},
            {"theory", {{"grid", t.grid}, {"M", t.M}, {"eps_nn", t.eps_nn}, {"eps_rk", t.eps_rk},
                        {"delta", t.delta}, {"trials", t.trials}, {"samples", t.samples},
                        {"head_budget", t.head_budget}}}};
  return j.dump(2);
}

std::string model_config_to_json(const CatoConfig& cfg) { return model_json(cfg).dump(2); }

CatoConfig model_config_from_json(const std::string& text) {
  const json j = parse(text);
  CatoConfig cfg;
  read_model(Section(j, "model"), cfg);
  cfg.validate();
  return cfg;
}

std::string pc_config_to_json(const PcConfig& cfg) { return pc_json(cfg).dump(2); }

PcConfig pc_config_from_json(const std::string& text) {
  const json j = parse(text);
  PcConfig cfg;
  read_pc(Section(j, "pc"), cfg);
  cfg.validate();
  return cfg;
}

}  // namespace cato
