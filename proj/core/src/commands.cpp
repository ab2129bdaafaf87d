#include "cato/commands.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"

#include "cato/checkpoint.hpp"
#include "cato/error.hpp"
#include "cato/ops.hpp"
#include "cato/optim.hpp"

namespace cato {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::span<const Sample> limited(const std::vector<Sample>& v, std::size_t limit) {
  return {v.data(), limit == 0 ? v.size() : std::min(limit, v.size())};
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw IoError("cannot read '" + p.string() + "'");
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::trunc);
  if (!os) throw IoError("cannot write '" + p.string() + "'");
  os << text << '\n';
  if (!os) throw IoError("write failed for '" + p.string() + "'");
}

fs::path prepare_output(const std::string& dir) {
  const fs::path out(dir);
  std::error_code ec;
  fs::create_directories(out / "checkpoints", ec);
  if (ec) throw IoError("cannot create output directory '" + out.string() + "': " + ec.message());
  return out;
}

json loss_json(const LossReport& r) {
  return {{"total", r.total}, {"val", r.val}, {"grad", r.grad},
          {"flux", r.flux},   {"cons", r.cons}, {"valid_nodes", r.valid_nodes}};
}

AdamW make_optimizer(const OptimConfig& o, std::size_t total_steps) {
  return AdamW({o.beta1, o.beta2, o.eps, o.weight_decay},
               {o.lr, std::max<std::size_t>(1, total_steps), o.warmup_fraction, o.div_factor});
}

std::uint64_t pc_estimate_macs(const PcConfig& c, std::size_t n) {
  const std::uint64_t C = c.embed_dim, N = n, K = c.knn;
  std::uint64_t per_block = 4 * N * C * C + 2 * N * N * C + 2 * N * N;  // projections, scores + mixing, chart bias
  per_block += N * K * (2 * C * C + 5 * C + C * C + C) + N * 2 * C * C;  // messages, scores, output map
  per_block += 2 * c.mlp_ratio * N * C * C;
  const std::uint64_t lift = N * ((4 + c.feature_dim) * C + C * C + 2 * C);
  const std::uint64_t chart = N * 4 * c.chart_hidden;
  return chart + lift + c.layers * per_block + 3 * N * C;
}

}  // namespace

std::string EvalReport::to_json() const {
  json j = {{"mean_rel_l2", mean_rel_l2},         {"grad_mse", grad_mse},
            {"per_sample", per_sample},           {"wall_seconds", wall_seconds},
            {"parameter_count", parameter_count}, {"flop_estimate", flop_estimate}};
  return j.dump();
}

EvalReport evaluate(ModelState& ms, std::span<const Sample> samples, EvalMode mode) {
  if (samples.empty()) throw ConfigError("evaluation needs at least one sample");
  const auto t0 = Clock::now();
  EvalReport rep;
  for (const Sample& s : samples) {
    Tensor u_hat({s.u.numel()});
    if (mode == EvalMode::Oracle) {
      u_hat = s.u;
    } else if (mode == EvalMode::Model) {
      if (s.feats.dim(1) != ms.config.feature_dim) {
        throw ShapeError("sample has " + std::to_string(s.feats.dim(1)) + " features, model expects " +
                         std::to_string(ms.config.feature_dim));
      }
      Tape tape;
      ForwardOutput out = model_forward(tape, ms, s.mesh.coords(), s.feats, s.mesh.grid);
      u_hat = out.u_hat.value().reshaped({s.u.numel()});
    }
    rep.per_sample.push_back(relative_l2(u_hat.data(), s.u.data()));
    rep.grad_mse += loss_grad(u_hat, s.u, s.mesh);
  }
  double sum = 0.0;
  for (double e : rep.per_sample) sum += e;
  rep.mean_rel_l2 = sum / static_cast<double>(rep.per_sample.size());
  rep.grad_mse /= static_cast<double>(samples.size());
  rep.wall_seconds = seconds_since(t0);
  rep.parameter_count = ms.parameter_count();
  rep.flop_estimate = estimate_forward_macs(ms.config, samples.front().mesh.grid);
  return rep;
}

TrainResult train(const Dataset& ds, const RunConfig& cfg, bool write_files, std::ostream* progress) {
  cfg.validate();
  const auto t0 = Clock::now();
  const std::span<const Sample> train_set = limited(ds.train, cfg.limit_train);
  const std::span<const Sample> test_set = limited(ds.test, cfg.limit_test);
  if (train_set.empty()) throw ConfigError("training split is empty");

  CatoConfig mc = cfg.model;
  mc.feature_dim = ds.config.feature_dim();
  TrainResult result{ModelState::create(mc, cfg.seed), {}, {}, 0.0};
  ModelState& ms = result.model;
  std::vector<Parameter*> params = ms.parameters();

  std::vector<MeshGradientOperator> grad_ops;
  std::vector<Tensor> coords;
  grad_ops.reserve(train_set.size());
  for (const Sample& s : train_set) {
    grad_ops.emplace_back(s.mesh);
    coords.push_back(s.mesh.coords());
  }

  const std::size_t batch = cfg.optim.batch;
  const std::size_t steps_per_epoch = (train_set.size() + batch - 1) / batch;
  AdamW opt = make_optimizer(cfg.optim, cfg.optim.epochs * steps_per_epoch);

  fs::path out;
  std::ofstream metrics;
  if (write_files) {
    out = prepare_output(cfg.output);
    write_text(out / "config.json", run_config_to_json(cfg));
    write_text(out / "model.json", model_config_to_json(mc));
    metrics.open(out / "metrics.jsonl", std::ios::trunc);
    if (!metrics) throw IoError("cannot open metrics log in '" + out.string() + "'");
  }
  auto log = [&](const json& j) {
    if (metrics.is_open()) metrics << j.dump() << '\n' << std::flush;
  };

  const CounterRng root(cfg.seed);
  CounterRng dropout_rng = root.fork(0xD0);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t e = 0; e < cfg.optim.epochs; ++e) {
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    CounterRng shuffle_rng = root.fork(0x5A00 + e);
    shuffle_rng.shuffle(order);
    LossReport mean;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      Tape tape;
      std::vector<LossSample> items;
      ForwardOptions fo;
      fo.training = true;
      fo.dropout_rng = &dropout_rng;
      for (std::size_t k = b * batch; k < std::min(order.size(), (b + 1) * batch); ++k) {
        const std::size_t idx = order[k];
        const Sample& s = train_set[idx];
        ForwardOutput o = model_forward(tape, ms, coords[idx], s.feats, s.mesh.grid, fo);
        items.push_back({o.u_hat, o.q_hat, &s.u, &grad_ops[idx]});
      }
      const LossTerms terms = total_loss(tape, items, cfg.loss);
      const LossReport rep = terms.report();
      if (!std::isfinite(rep.total)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(e) + ", step " + std::to_string(b));
      }
      const double lr = opt.current_lr();
      zero_grads(params);
      backward(terms.total);
      opt.step(params);
      json line = loss_json(rep);
      line["kind"] = "step";
      line["epoch"] = e;
      line["step"] = opt.steps();
      line["lr"] = lr;
      log(line);
      mean.total += rep.total;
      mean.val += rep.val;
      mean.grad += rep.grad;
      mean.flux += rep.flux;
      mean.cons += rep.cons;
      mean.valid_nodes += rep.valid_nodes;
    }
    const double inv = 1.0 / static_cast<double>(steps_per_epoch);
    mean.total *= inv;
    mean.val *= inv;
    mean.grad *= inv;
    mean.flux *= inv;
    mean.cons *= inv;
    mean.valid_nodes /= steps_per_epoch;
    result.epoch_loss.push_back(mean);
    const bool last = e + 1 == cfg.optim.epochs;
    json epoch_line = loss_json(mean);
    epoch_line["kind"] = "epoch";
    epoch_line["epoch"] = e;
    if (!test_set.empty() && ((e + 1) % cfg.eval_every == 0 || last)) {
      const EvalReport ev = evaluate(ms, test_set);
      epoch_line["test_rel_l2"] = ev.mean_rel_l2;
      epoch_line["test_grad_mse"] = ev.grad_mse;
      if (last) result.final_eval = ev;
    }
    log(epoch_line);
    if (progress) *progress << epoch_line.dump() << '\n' << std::flush;
    if (write_files && (e + 1) % cfg.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof name, "epoch_%04zu.cato", e + 1);
      save_parameters(out / "checkpoints" / name, params);
    }
  }
  if (!test_set.empty() && result.final_eval.per_sample.empty()) result.final_eval = evaluate(ms, test_set);
  result.wall_seconds = seconds_since(t0);
  if (write_files) {
    save_parameters(out / "model.cato", params);
    if (!test_set.empty()) write_text(out / "eval.json", result.final_eval.to_json());
  }
  return result;
}

GenerateResult cmd_generate(const RunConfig& cfg) {
  DatasetConfig dc = cfg.data;
  dc.seed = cfg.seed;
  GenerateResult r;
  r.manifest = write_dataset(dc, cfg.dataset);
  r.digest = file_digest(r.manifest);
  return r;
}

TrainResult cmd_train(const RunConfig& cfg, std::ostream* progress) {
  const Dataset ds = load_dataset(cfg.dataset);
  return train(ds, cfg, true, progress);
}

namespace {

fs::path checkpoint_path(const RunConfig& cfg, const char* default_name) {
  return cfg.checkpoint.empty() ? fs::path(cfg.output) / default_name : fs::path(cfg.checkpoint);
}

}  // namespace

EvalReport cmd_eval(const RunConfig& cfg) {
  const Dataset ds = load_dataset(cfg.dataset);
  const std::span<const Sample> test_set = limited(ds.test, cfg.limit_test);
  CatoConfig mc = cfg.model;
  mc.feature_dim = ds.config.feature_dim();
  if (cfg.eval_mode != EvalMode::Model) {
    ModelState ms = ModelState::create(mc, cfg.seed);
    return evaluate(ms, test_set, cfg.eval_mode);
  }
  const fs::path ckpt = checkpoint_path(cfg, "model.cato");
  const fs::path model_json = ckpt.parent_path() / "model.json";
  if (fs::exists(model_json)) mc = model_config_from_json(read_text(model_json));
  if (mc.feature_dim != ds.config.feature_dim()) {
    throw ShapeError("checkpoint expects " + std::to_string(mc.feature_dim) + " features, dataset has " +
                     std::to_string(ds.config.feature_dim()));
  }
  ModelState ms = ModelState::create(mc, cfg.seed);
  load_parameters(ckpt, ms.parameters());
  return evaluate(ms, test_set, EvalMode::Model);
}

TheoryResult cmd_verify_theory(const RunConfig& cfg) {
  cfg.validate();
  const TheoryConfig& t = cfg.theory;
  const Mesh mesh = Mesh::regular(t.grid, t.grid);
  const CounterRng root(cfg.seed);
  CounterRng chart_rng = root.fork(1);
  ChartNet chart = ChartNet::create(64, chart_rng);
  const ChartCoords zeta = chart_forward(chart, mesh);
  Lemma1Options opts;
  opts.head_budget = t.head_budget;
  opts.seed = cfg.seed + 7;

  TheoryResult res;
  auto add = [&](BoundReport r) {
    res.all_pass = res.all_pass && r.pass;
    res.reports.push_back(std::move(r));
  };

  std::uint64_t stream = 10;
  for (const auto& spec : {AxialOperatorSpec::identity(), AxialOperatorSpec::row_mean(),
                           AxialOperatorSpec::polynomial(cfg.seed + 11)}) {
    Lemma1Network net = construct_lemma1_network(spec, mesh, zeta, t.M, t.eps_nn, opts);
    CounterRng rng = root.fork(stream++);
    add(check_lemma1(net, spec, zeta, t.M, t.eps_nn, rng, t.samples));
  }

  const AxialOperatorSpec linear = AxialOperatorSpec::linear_chart();
  for (double delta : {0.0, 0.01, 0.05, 0.1}) {
    CounterRng rng = root.fork(stream++);
    add(measure_chart_stability(linear, zeta, mesh.grid, delta, t.trials, rng));
  }

  {
    // Drift along one fixed direction for one fixed field must not shrink as delta grows.
    CounterRng rng = root.fork(stream++);
    std::vector<double> f(mesh.nodes()), dir(2 * mesh.nodes());
    for (double& v : f) v = rng.normal();
    for (std::size_t k = 0; k < mesh.nodes(); ++k) {
      const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
      dir[2 * k] = std::cos(a);
      dir[2 * k + 1] = std::sin(a);
    }
    BoundReport r;
    r.name = "lemma2-sweep:" + linear.name;
    r.c_chart = linear.c_chart();
    double prev = 0.0;
    for (double delta : {0.0, 0.01, 0.05, 0.1}) {
      const double d = chart_drift(linear, zeta, mesh.grid, f, dir, delta);
      r.measured = std::max(r.measured, prev - d);  // largest decrease
      prev = d;
      ++r.samples;
      r.delta = delta;
    }
    r.margin = r.bound - r.measured;
    r.pass = r.measured <= r.bound;
    add(r);
  }

  {
    const AxialOperatorSpec poly = AxialOperatorSpec::polynomial(cfg.seed + 11);
    CounterRng rng = root.fork(stream++);
    const ChartCoords zeta_hat = chart_perturb(zeta, t.delta, rng);
    add(verify_theorem1(poly, mesh, zeta, zeta_hat, t.M, t.eps_rk, t.eps_nn, rng, opts));
  }
  return res;
}

EvalReport evaluate_pc(PcModelState& ms, std::span<const Sample> samples) {
  if (samples.empty()) throw ConfigError("evaluation needs at least one sample");
  const auto t0 = Clock::now();
  EvalReport rep;
  for (const Sample& s : samples) {
    if (!s.cloud) throw ConfigError("sample has no point cloud");
    Tape tape;
    PcOutput out = pc_model_forward(tape, ms, *s.cloud);
    rep.per_sample.push_back(relative_l2(out.u_hat.value().data(), s.cloud_u.data()));
  }
  double sum = 0.0;
  for (double e : rep.per_sample) sum += e;
  rep.mean_rel_l2 = sum / static_cast<double>(rep.per_sample.size());
  rep.wall_seconds = seconds_since(t0);
  std::size_t n = 0;
  for (const Parameter* p : ms.parameters()) n += p->value.numel();
  rep.parameter_count = n;
  rep.flop_estimate = pc_estimate_macs(ms.config, samples.front().cloud->size());
  return rep;
}

PcTrainResult train_pc(const Dataset& ds, const RunConfig& cfg, bool write_files, std::ostream* progress) {
  cfg.validate();
  const auto t0 = Clock::now();
  const std::span<const Sample> train_set = limited(ds.train, cfg.limit_train);
  const std::span<const Sample> test_set = limited(ds.test, cfg.limit_test);
  if (train_set.empty()) throw ConfigError("training split is empty");
  for (const Sample& s : train_set) {
    if (!s.cloud) throw ConfigError("dataset has no point clouds; regenerate with data.cloud_points > 0");
  }
  PcConfig pcfg = cfg.pc;
  pcfg.feature_dim = ds.config.feature_dim();
  PcTrainResult result{PcModelState::create(pcfg, cfg.seed), {}, {}, 0.0};
  PcModelState& ms = result.model;
  std::vector<Parameter*> params = ms.parameters();

  const std::size_t batch = cfg.optim.batch;
  const std::size_t steps_per_epoch = (train_set.size() + batch - 1) / batch;
  AdamW opt = make_optimizer(cfg.optim, cfg.optim.epochs * steps_per_epoch);

  fs::path out;
  std::ofstream metrics;
  if (write_files) {
    out = prepare_output(cfg.output);
    write_text(out / "config.json", run_config_to_json(cfg));
    write_text(out / "pc_model.json", pc_config_to_json(pcfg));
    metrics.open(out / "metrics.jsonl", std::ios::trunc);
  }
  const CounterRng root(cfg.seed);
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t e = 0; e < cfg.optim.epochs; ++e) {
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    CounterRng shuffle_rng = root.fork(0x5A00 + e);
    shuffle_rng.shuffle(order);
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < steps_per_epoch; ++b) {
      Tape tape;
      Var acc;
      std::size_t count = 0;
      for (std::size_t k = b * batch; k < std::min(order.size(), (b + 1) * batch); ++k, ++count) {
        const Sample& s = train_set[order[k]];
        PcOutput o = pc_model_forward(tape, ms, *s.cloud);
        const Tensor target = s.cloud_u.reshaped({s.cloud_u.numel(), 1});
        const double unorm = l2_norm(target.data());
        Var r = ops::scale(ops::sqrt(ops::sum(ops::square(ops::sub(o.u_hat, tape.constant(target))))),
                           1.0 / (unorm + cfg.loss.eps));
        acc = acc.valid() ? ops::add(acc, r) : r;
      }
      Var loss = ops::scale(acc, 1.0 / static_cast<double>(count));
      const double value = loss.value().item();
      const double lr = opt.current_lr();
      zero_grads(params);
      backward(loss);
      opt.step(params);
      epoch_loss += value;
      if (metrics.is_open()) {
        metrics << json{{"kind", "step"}, {"epoch", e}, {"step", opt.steps()}, {"lr", lr}, {"val", value}}.dump()
                << '\n';
      }
    }
    epoch_loss /= static_cast<double>(steps_per_epoch);
    result.epoch_loss.push_back(epoch_loss);
    json line = {{"kind", "epoch"}, {"epoch", e}, {"val", epoch_loss}};
    const bool last = e + 1 == cfg.optim.epochs;
    if (!test_set.empty() && ((e + 1) % cfg.eval_every == 0 || last)) {
      const EvalReport ev = evaluate_pc(ms, test_set);
      line["test_rel_l2"] = ev.mean_rel_l2;
      if (last) result.final_eval = ev;
    }
    if (metrics.is_open()) metrics << line.dump() << '\n' << std::flush;
    if (progress) *progress << line.dump() << '\n' << std::flush;
  }
  if (!test_set.empty() && result.final_eval.per_sample.empty()) result.final_eval = evaluate_pc(ms, test_set);
  result.wall_seconds = seconds_since(t0);
  if (write_files) {
    save_parameters(out / "pc_model.cato", params);
    if (!test_set.empty()) write_text(out / "pc_eval.json", result.final_eval.to_json());
  }
  return result;
}

PcTrainResult cmd_train_pc(const RunConfig& cfg, std::ostream* progress) {
  const Dataset ds = load_dataset(cfg.dataset);
  return train_pc(ds, cfg, true, progress);
}

EvalReport cmd_eval_pc(const RunConfig& cfg) {
  const Dataset ds = load_dataset(cfg.dataset);
  const fs::path ckpt = checkpoint_path(cfg, "pc_model.cato");
  PcConfig pcfg = cfg.pc;
  pcfg.feature_dim = ds.config.feature_dim();
  const fs::path model_json = ckpt.parent_path() / "pc_model.json";
  if (fs::exists(model_json)) pcfg = pc_config_from_json(read_text(model_json));
  if (pcfg.feature_dim != ds.config.feature_dim()) {
    throw ShapeError("checkpoint expects " + std::to_string(pcfg.feature_dim) + " features, dataset has " +
                     std::to_string(ds.config.feature_dim()));
  }
  PcModelState ms = PcModelState::create(pcfg, cfg.seed);
  load_parameters(ckpt, ms.parameters());
  return evaluate_pc(ms, limited(ds.test, cfg.limit_test));
}

}  // namespace cato
