#include "cato/point_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "byte_io.hpp"
#include "cato/error.hpp"
#include "cato/init.hpp"
#include "cato/ops.hpp"

namespace cato {

void PointCloud::validate() const {
  if (coords.rank() != 2 || coords.dim(1) != 2) throw ShapeError("point coordinates must be [N, 2], got " + shape_str(coords.shape()));
  if (feats.rank() == 2 && feats.dim(0) != coords.dim(0)) {
    throw ShapeError("features " + shape_str(feats.shape()) + " do not match " + std::to_string(coords.dim(0)) + " points");
  }
  if (!coords.all_finite() || !feats.all_finite()) throw NumericError("point cloud holds non-finite values");
}

PointCloud PointCloud::permuted(const std::vector<std::size_t>& perm) const {
  const std::size_t n = size(), df = feature_dim();
  if (perm.size() != n) throw ShapeError("permutation length does not match the cloud");
  PointCloud out{Tensor({n, 2}), Tensor({n, df})};
  for (std::size_t k = 0; k < n; ++k) {
    out.coords.at(k, 0) = coords.at(perm[k], 0);
    out.coords.at(k, 1) = coords.at(perm[k], 1);
    for (std::size_t c = 0; c < df; ++c) out.feats.at(k, c) = feats.at(perm[k], c);
  }
  return out;
}

KnnGraph build_knn(const PointCloud& pc, std::size_t k) {
  pc.validate();
  const std::size_t n = pc.size();
  if (k == 0 || k >= n) {
    throw ConfigError("KNN degree " + std::to_string(k) + " needs 0 < K < N = " + std::to_string(n));
  }
  KnnGraph g{n, k, std::vector<long>(n * k), std::vector<double>(n * k)};
  std::vector<std::pair<double, std::size_t>> cand(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t m = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double dx = pc.coords.at(j, 0) - pc.coords.at(i, 0);
      const double dy = pc.coords.at(j, 1) - pc.coords.at(i, 1);
      cand[m++] = {dx * dx + dy * dy, j};
    }
    std::partial_sort(cand.begin(), cand.begin() + static_cast<long>(k), cand.end());
    for (std::size_t s = 0; s < k; ++s) {
      g.neighbors[i * k + s] = static_cast<long>(cand[s].second);
      g.dist[i * k + s] = std::sqrt(cand[s].first);
    }
  }
  return g;
}

void PcConfig::validate() const {
  if (layers < 1) throw ConfigError("a CATO-PC model needs at least one block");
  if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0) {
    throw ConfigError("embedding dimension " + std::to_string(embed_dim) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if (knn == 0) throw ConfigError("KNN degree must be positive");
  if (mlp_ratio == 0 || chart_hidden == 0) throw ConfigError("mlp ratio and chart width must be positive");
  if (!(ln_eps > 0.0)) throw ConfigError("LayerNorm eps must be positive");
}

void PcAttention::collect(std::vector<Parameter*>& out) {
  for (Parameter* p : {&Wq, &Wk, &Wv, &Wo, &Wb}) out.push_back(p);
}

void PcLocal::collect(std::vector<Parameter*>& out) {
  out.push_back(&Wc);
  out.push_back(&Wd);
  geo.collect(out);
  for (Parameter* p : {&ws, &Wout, &bout}) out.push_back(p);
}

void PcBlock::collect(std::vector<Parameter*>& out) {
  ln1.collect(out);
  attn.collect(out);
  out.push_back(&gamma_attn);
  ln2.collect(out);
  local.collect(out);
  out.push_back(&gamma_local);
  ln3.collect(out);
  mlp.collect(out);
  out.push_back(&gamma_mlp);
}

PcModelState PcModelState::create(const PcConfig& config, std::uint64_t seed) {
  config.validate();
  const std::size_t c = config.embed_dim;
  CounterRng root(seed);
  PcModelState ms;
  ms.config = config;
  {
    CounterRng rng = root.fork(1);
    ms.chart = ChartNet::create(config.chart_hidden, rng);
  }
  {
    CounterRng rng = root.fork(2);
    ms.lift = Mlp::create(4 + config.feature_dim, c, c, rng, "lift");
    ms.Wcb = gaussian_linear("chart_broadcast.W", 2, c, rng);
    ms.bcb = zeros("chart_broadcast.b", {c});
  }
  for (std::size_t l = 0; l < config.layers; ++l) {
    CounterRng rng = root.fork(100 + l);
    const std::string p = "blocks." + std::to_string(l);
    PcBlock b;
    b.ln1 = LayerNormParams::create(c, p + ".ln1");
    b.ln2 = LayerNormParams::create(c, p + ".ln2");
    b.ln3 = LayerNormParams::create(c, p + ".ln3");
    b.attn = {gaussian_linear(p + ".attn.Wq", c, c, rng), gaussian_linear(p + ".attn.Wk", c, c, rng),
              gaussian_linear(p + ".attn.Wv", c, c, rng), gaussian_linear(p + ".attn.Wo", c, c, rng),
              gaussian_linear(p + ".attn.Wb", 2, 2, rng), config.heads};
    b.local = {gaussian_linear(p + ".local.Wc", c, c, rng), gaussian_linear(p + ".local.Wd", c, c, rng),
               Mlp::create(5, c, c, rng, p + ".local.geo"), gaussian_linear(p + ".local.ws", c, 1, rng),
               gaussian_linear(p + ".local.Wout", 2 * c, c, rng), zeros(p + ".local.bout", {c})};
    b.mlp = Mlp::create(c, config.mlp_ratio * c, c, rng, p + ".mlp");
    b.gamma_attn = constant(p + ".gamma_attn", {c}, config.gate_init);
    b.gamma_local = constant(p + ".gamma_local", {c}, config.gate_init);
    b.gamma_mlp = constant(p + ".gamma_mlp", {c}, config.gate_init);
    ms.blocks.push_back(std::move(b));
  }
  ms.final_ln = LayerNormParams::create(c, "final_ln");
  ms.w_u = zeros("readout.w_u", {c, 1});
  ms.b_u = zeros("readout.b_u", {1});
  ms.W_q = zeros("readout.W_q", {c, 2});
  ms.b_q = zeros("readout.b_q", {2});
  return ms;
}

std::vector<Parameter*> PcModelState::parameters() {
  std::vector<Parameter*> out;
  chart.collect(out);
  lift.collect(out);
  out.push_back(&Wcb);
  out.push_back(&bcb);
  for (auto& b : blocks) b.collect(out);
  final_ln.collect(out);
  for (Parameter* p : {&w_u, &b_u, &W_q, &b_q}) out.push_back(p);
  return out;
}

Var pc_attention_forward(Tape& tape, PcAttention& attn, const Var& h, const Var& zeta) {
  const std::size_t n = h.dim(0), c = h.dim(1), m = attn.heads, dh = c / m;
  auto heads_first = [&](const Var& x) { return ops::permute(ops::reshape(x, {n, m, dh}), {1, 0, 2}); };
  Var q = heads_first(ops::matmul(h, tape.param(attn.Wq)));
  Var k = heads_first(ops::matmul(h, tape.param(attn.Wk)));
  Var v = heads_first(ops::matmul(h, tape.param(attn.Wv)));
  Var logits = ops::scale(ops::bmm(q, ops::permute(k, {0, 2, 1})), 1.0 / std::sqrt(static_cast<double>(dh)));
  Var bias = ops::matmul(ops::matmul(zeta, tape.param(attn.Wb)), ops::transpose(zeta));  // [N, N]
  Var w = ops::softmax(ops::add(logits, bias));
  Var o = ops::reshape(ops::permute(ops::bmm(w, v), {1, 0, 2}), {n, c});
  return ops::matmul(o, tape.param(attn.Wo));
}

Var pc_local_forward(Tape& tape, PcLocal& local, const Var& h, const PcContext& ctx, Tensor* alpha) {
  const KnnGraph& g = *ctx.graph;
  const std::size_t n = h.dim(0), c = h.dim(1), k = g.k;
  if (g.n != n) throw ShapeError("KNN graph has " + std::to_string(g.n) + " nodes, features have " + std::to_string(n));
  std::vector<long> self(n * k);
  for (std::size_t i = 0; i < n; ++i) std::fill_n(self.begin() + static_cast<long>(i * k), k, static_cast<long>(i));

  Tensor dist({n * k, 1}, g.dist);
  Var dx = ops::sub(ops::index_select(ctx.coords, 0, g.neighbors), ops::index_select(ctx.coords, 0, self));
  Var dz = ops::sub(ops::index_select(ctx.zeta, 0, g.neighbors), ops::index_select(ctx.zeta, 0, self));
  Var geo = ops::concat({dx, tape.constant(std::move(dist)), dz});  // [NK, 5]

  Var hi = ops::index_select(h, 0, self);
  Var hj = ops::index_select(h, 0, g.neighbors);
  Var pre = ops::add(ops::matmul(hi, tape.param(local.Wc)), ops::matmul(ops::sub(hj, hi), tape.param(local.Wd)));
  Var msg = ops::gelu(ops::add(pre, mlp_forward(tape, local.geo, geo)));  // [NK, C]

  Var score = ops::scale(ops::matmul(msg, tape.param(local.ws)), 1.0 / std::sqrt(static_cast<double>(c)));
  Var a = ops::softmax(ops::reshape(score, {n, k}));
  if (alpha) *alpha = a.value();
  Var msg3 = ops::reshape(msg, {n, k, c});
  Var soft = ops::reshape(ops::bmm(ops::reshape(a, {n, 1, k}), msg3), {n, c});
  Var hard = ops::max_axis1(msg3);
  return ops::add(ops::matmul(ops::concat({soft, hard}), tape.param(local.Wout)), tape.param(local.bout));
}

Var pc_block_forward(Tape& tape, PcBlock& block, const PcConfig& cfg, const Var& h, const PcContext& ctx) {
  auto ln = [&](LayerNormParams& p, const Var& x) {
    return ops::layer_norm(x, tape.param(p.gamma), tape.param(p.beta), cfg.ln_eps);
  };
  Var a = pc_attention_forward(tape, block.attn, ln(block.ln1, h), ctx.zeta);
  Var h1 = ops::add(h, ops::mul(a, tape.param(block.gamma_attn)));
  Var l = pc_local_forward(tape, block.local, ln(block.ln2, h1), ctx);
  Var h2 = ops::add(h1, ops::mul(l, tape.param(block.gamma_local)));
  return ops::add(h2, ops::mul(mlp_forward(tape, block.mlp, ln(block.ln3, h2)), tape.param(block.gamma_mlp)));
}

namespace {

std::vector<std::size_t> canonical_order(const PointCloud& pc) {
  const std::size_t n = pc.size(), df = pc.feature_dim();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    for (std::size_t c = 0; c < 2; ++c) {
      if (pc.coords.at(a, c) != pc.coords.at(b, c)) return pc.coords.at(a, c) < pc.coords.at(b, c);
    }
    for (std::size_t c = 0; c < df; ++c) {
      if (pc.feats.at(a, c) != pc.feats.at(b, c)) return pc.feats.at(a, c) < pc.feats.at(b, c);
    }
    return a < b;
  });
  return order;
}

}  // namespace

PcOutput pc_model_forward(Tape& tape, PcModelState& ms, const PointCloud& pc) {
  const PcConfig& cfg = ms.config;
  pc.validate();
  if (pc.feature_dim() != cfg.feature_dim) {
    throw ShapeError("cloud has " + std::to_string(pc.feature_dim()) + " features, model expects " +
                     std::to_string(cfg.feature_dim));
  }
  const std::vector<std::size_t> order = canonical_order(pc);
  const PointCloud sorted = pc.permuted(order);
  const KnnGraph graph = build_knn(sorted, cfg.knn);

  PcContext ctx{&graph, tape.constant(sorted.coords), Var{}};
  ctx.zeta = chart_forward(tape, ms.chart, ctx.coords);
  std::vector<Var> parts{ctx.coords};
  if (cfg.feature_dim > 0) parts.push_back(tape.constant(sorted.feats));
  parts.push_back(ctx.zeta);
  Var h = ops::add(mlp_forward(tape, ms.lift, ops::concat(parts)),
                   ops::add(ops::matmul(ctx.zeta, tape.param(ms.Wcb)), tape.param(ms.bcb)));
  for (auto& block : ms.blocks) h = pc_block_forward(tape, block, cfg, h, ctx);
  h = ops::layer_norm(h, tape.param(ms.final_ln.gamma), tape.param(ms.final_ln.beta), cfg.ln_eps);

  std::vector<long> inverse(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) inverse[order[k]] = static_cast<long>(k);
  PcOutput out;
  out.u_hat = ops::index_select(ops::add(ops::matmul(h, tape.param(ms.w_u)), tape.param(ms.b_u)), 0, inverse);
  out.q_hat = ops::index_select(ops::add(ops::matmul(h, tape.param(ms.W_q)), tape.param(ms.b_q)), 0, inverse);
  out.zeta = ops::index_select(ctx.zeta, 0, inverse);
  return out;
}

namespace {
constexpr char kPcMagic[4] = {'C', 'A', 'T', 'P'};
}

void write_point_cloud(const std::filesystem::path& path, const PointCloud& pc) {
  pc.validate();
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open '" + path.string() + "' for writing");
  os.write(kPcMagic, sizeof kPcMagic);
  detail::put_u64(os, pc.size());
  detail::put_u64(os, pc.feature_dim());
  for (double v : pc.coords.data()) detail::put_f64(os, v);
  for (double v : pc.feats.data()) detail::put_f64(os, v);
  if (!os) throw IoError("write failed for '" + path.string() + "'");
}

PointCloud read_point_cloud(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open '" + path.string() + "'");
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kPcMagic, 4) != 0) {
    throw IoError("'" + path.string() + "' is not a CATP file");
  }
  std::uint64_t n = 0, df = 0;
  if (!detail::get_u64(is, n) || !detail::get_u64(is, df) || n > (1u << 26) || df > 4096) {
    throw IoError("bad CATP header in '" + path.string() + "'");
  }
  PointCloud pc{Tensor({n, 2}), Tensor({n, df})};
  for (double& v : pc.coords.data()) {
    if (!detail::get_f64(is, v)) throw IoError("truncated coordinates in '" + path.string() + "'");
  }
  for (double& v : pc.feats.data()) {
    if (!detail::get_f64(is, v)) throw IoError("truncated features in '" + path.string() + "'");
  }
  pc.validate();
  return pc;
}

}  // namespace cato
