#include "cato/model.hpp"

#include <unordered_set>

#include "cato/error.hpp"
#include "cato/init.hpp"
#include "cato/ops.hpp"

namespace cato {

void CatoConfig::validate() const {
  if (variant == ModelVariant::Cato && layers < 1) throw ConfigError("a CATO model needs at least one block");
  if (embed_dim == 0) throw ConfigError("embedding dimension must be positive");
  if (heads == 0 || embed_dim % heads != 0) {
    throw ConfigError("embedding dimension " + std::to_string(embed_dim) + " not divisible by heads " +
                      std::to_string(heads));
  }
  if ((embed_dim / heads) % 2 != 0) throw ConfigError("head dimension must be even for rotary encoding");
  if (kernel % 2 == 0) throw ConfigError("local kernel size must be odd");
  if (mlp_ratio == 0 || chart_hidden == 0) throw ConfigError("mlp ratio and chart width must be positive");
  if (!(rope_theta > 0.0)) throw ConfigError("rope theta must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (!(ln_eps > 0.0)) throw ConfigError("LayerNorm eps must be positive");
}

CatoConfig CatoConfig::desk() { return CatoConfig{}; }

CatoConfig CatoConfig::darcy_reference() {
  CatoConfig c;
  c.layers = 8;
  c.embed_dim = 96;
  c.heads = 8;
  return c;
}

std::string to_string(ModelVariant v) { return v == ModelVariant::Cato ? "cato" : "lift-readout"; }

ModelVariant model_variant_from_string(const std::string& s) {
  if (s == "cato") return ModelVariant::Cato;
  if (s == "lift-readout") return ModelVariant::LiftReadout;
  throw ConfigError("unknown model variant '" + s + "'");
}

LayerNormParams LayerNormParams::create(std::size_t channels, const std::string& prefix) {
  return {constant(prefix + ".gamma", {channels}, 1.0), zeros(prefix + ".beta", {channels})};
}

void LayerNormParams::collect(std::vector<Parameter*>& out) {
  out.push_back(&gamma);
  out.push_back(&beta);
}

Mlp Mlp::create(std::size_t in, std::size_t hidden, std::size_t out, CounterRng& rng, const std::string& prefix) {
  return {gaussian_linear(prefix + ".W1", in, hidden, rng), zeros(prefix + ".b1", {hidden}),
          gaussian_linear(prefix + ".W2", hidden, out, rng), zeros(prefix + ".b2", {out})};
}

void Mlp::collect(std::vector<Parameter*>& out) {
  for (Parameter* p : {&W1, &b1, &W2, &b2}) out.push_back(p);
}

void CatoBlock::collect(std::vector<Parameter*>& out) {
  ln1.collect(out);
  attn.collect(out);
  local.collect(out);
  ln2.collect(out);
  mlp.collect(out);
}

void Readout::collect(std::vector<Parameter*>& out) {
  for (Parameter* p : {&w_u, &b_u, &W_q, &b_q}) out.push_back(p);
}

ModelState ModelState::create(const CatoConfig& config, std::uint64_t seed) {
  config.validate();
  CounterRng root(seed);
  ModelState ms;
  ms.config = config;
  const std::size_t c = config.embed_dim;
  if (config.variant == ModelVariant::Cato) {
    CounterRng rng = root.fork(1);
    ms.chart = ChartNet::create(config.chart_hidden, rng);
  }
  {
    CounterRng rng = root.fork(2);
    ms.lift = Mlp::create(2 + config.feature_dim, config.lift_width(), c, rng, "lift");
  }
  if (config.variant == ModelVariant::Cato) {
    for (std::size_t l = 0; l < config.layers; ++l) {
      CounterRng rng = root.fork(100 + l);
      const std::string p = "blocks." + std::to_string(l);
      CatoBlock b{LayerNormParams::create(c, p + ".ln1"),
                  AxialAttentionLayer::create(c, config.heads, config.rope_theta, config.rope_scale, rng, p + ".attn"),
                  LocalStencil::create(c, config.kernel, rng, p + ".local"),
                  LayerNormParams::create(c, p + ".ln2"),
                  Mlp::create(c, config.mlp_ratio * c, c, rng, p + ".mlp")};
      ms.blocks.push_back(std::move(b));
    }
  }
  ms.final_ln = LayerNormParams::create(c, "final_ln");
  ms.readout = {zeros("readout.w_u", {c, 1}), zeros("readout.b_u", {1}), zeros("readout.W_q", {c, 2}),
                zeros("readout.b_q", {2})};
  return ms;
}

std::vector<Parameter*> ModelState::parameters() {
  std::vector<Parameter*> out;
  if (config.variant == ModelVariant::Cato) chart.collect(out);
  lift.collect(out);
  for (auto& b : blocks) b.collect(out);
  final_ln.collect(out);
  readout.collect(out);
  std::unordered_set<std::string> names;
  for (const Parameter* p : out) {
    if (!names.insert(p->name).second) throw ConfigError("duplicate parameter name '" + p->name + "'");
  }
  return out;
}

std::size_t ModelState::parameter_count() {
  std::size_t n = 0;
  for (const Parameter* p : parameters()) n += p->value.numel();
  return n;
}

Var layer_norm(Tape& tape, LayerNormParams& ln, const Var& h, const CatoConfig& cfg) {
  if (cfg.core) return h;
  return ops::layer_norm(h, tape.param(ln.gamma), tape.param(ln.beta), cfg.ln_eps);
}

Var mlp_forward(Tape& tape, Mlp& mlp, const Var& x) {
  Var hid = ops::gelu(ops::add(ops::matmul(x, tape.param(mlp.W1)), tape.param(mlp.b1)));
  return ops::add(ops::matmul(hid, tape.param(mlp.W2)), tape.param(mlp.b2));
}

Var lift(Tape& tape, ModelState& ms, const Var& coords, const Var* feats) {
  const std::size_t df = ms.config.feature_dim;
  if (coords.value().rank() != 2 || coords.dim(1) != 2) {
    throw ShapeError("lift expects [N, 2] coordinates, got " + shape_str(coords.shape()));
  }
  Var in = coords;
  if (df > 0) {
    if (!feats || feats->value().rank() != 2 || feats->dim(0) != coords.dim(0) || feats->dim(1) != df) {
      throw ShapeError("lift expects [N, " + std::to_string(df) + "] features" +
                       (feats ? ", got " + shape_str(feats->shape()) : std::string(", got none")));
    }
    in = ops::concat({coords, *feats});
  } else if (feats && feats->numel() != 0) {
    throw ShapeError("model has feature_dim 0 but features were supplied");
  }
  return mlp_forward(tape, ms.lift, in);
}

Var block_forward(Tape& tape, CatoBlock& block, const CatoConfig& cfg, const Var& h, const Var& zeta, GridShape grid,
                  const ForwardOptions& opts) {
  Var normed = layer_norm(tape, block.ln1, h, cfg);
  Var attn = axial_forward(tape, block.attn, normed, zeta, grid, opts.trace);
  if (opts.training && cfg.dropout > 0.0) {
    if (!opts.dropout_rng) throw ConfigError("dropout requires an rng");
    Tensor mask(attn.shape());
    const double keep = 1.0 - cfg.dropout;
    for (double& m : mask.data()) m = opts.dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
    attn = ops::mul(attn, tape.constant(std::move(mask)));
  }
  Var mixed = ops::add(h, attn);
  if (!cfg.core) mixed = ops::add(mixed, local_forward(tape, block.local, normed, grid));
  return ops::add(mixed, mlp_forward(tape, block.mlp, layer_norm(tape, block.ln2, mixed, cfg)));
}

ForwardOutput model_forward(Tape& tape, ModelState& ms, const Tensor& coords, const Tensor& feats, GridShape grid,
                            const ForwardOptions& opts) {
  const CatoConfig& cfg = ms.config;
  if (coords.rank() != 2 || coords.dim(0) != grid.nodes() || coords.dim(1) != 2) {
    throw ShapeError("coordinates " + shape_str(coords.shape()) + " do not match grid");
  }
  ForwardOutput out;
  Var x = tape.constant(coords);
  Var f;
  if (cfg.feature_dim > 0) f = tape.constant(feats);
  Var h = lift(tape, ms, x, cfg.feature_dim > 0 ? &f : nullptr);
  if (cfg.variant == ModelVariant::Cato) {
    if (opts.zeta) {
      if (opts.zeta->shape() != Shape{grid.nodes(), 2}) throw ShapeError("chart override must be [N, 2]");
      out.zeta = tape.constant(*opts.zeta);
    } else {
      out.zeta = chart_forward(tape, ms.chart, x);
    }
    ForwardOptions o = opts;
    for (auto& block : ms.blocks) {
      h = block_forward(tape, block, cfg, h, out.zeta, grid, o);
      o.trace = nullptr;
    }
  }
  h = layer_norm(tape, ms.final_ln, h, cfg);
  out.hidden = h;
  out.u_hat = ops::add(ops::matmul(h, tape.param(ms.readout.w_u)), tape.param(ms.readout.b_u));
  out.q_hat = ops::add(ops::matmul(h, tape.param(ms.readout.W_q)), tape.param(ms.readout.b_q));
  return out;
}

Prediction predict(ModelState& ms, std::span<const Mesh> meshes, std::span<const Tensor> feats) {
  if (meshes.size() != feats.size() || meshes.empty()) throw ShapeError("predict needs one feature tensor per mesh");
  const std::size_t n = meshes.front().nodes();
  Prediction p{Tensor({meshes.size(), n, 1}), Tensor({meshes.size(), n, 2})};
  for (std::size_t b = 0; b < meshes.size(); ++b) {
    if (meshes[b].nodes() != n) throw ShapeError("batched prediction needs equal node counts");
    Tape tape;
    ForwardOutput o = model_forward(tape, ms, meshes[b].coords(), feats[b], meshes[b].grid);
    std::copy_n(o.u_hat.value().data().data(), n, p.u_hat.data().data() + b * n);
    std::copy_n(o.q_hat.value().data().data(), 2 * n, p.q_hat.data().data() + b * 2 * n);
  }
  return p;
}

std::uint64_t estimate_forward_macs(const CatoConfig& cfg, GridShape grid) {
  const std::uint64_t n = grid.nodes();
  const std::uint64_t c = cfg.embed_dim;
  const std::uint64_t k = cfg.kernel;
  std::uint64_t per_token = (2 + cfg.feature_dim) * cfg.lift_width() + cfg.lift_width() * c;  // lift
  per_token += 3 * c;                                                                      // readouts
  std::uint64_t total = n * per_token;
  if (cfg.variant == ModelVariant::Cato) {
    total += n * (2 * cfg.chart_hidden + cfg.chart_hidden * 2);
    const std::uint64_t proj = 5 * c * c;
    const std::uint64_t attention = 2 * (grid.cols + grid.rows) * c;  // scores + mixing, both axes
    const std::uint64_t local = cfg.core ? 0 : k * k * c + c * c;
    const std::uint64_t mlp = 2 * cfg.mlp_ratio * c * c;
    total += cfg.layers * n * (proj + attention + local + mlp);
  }
  return total;
}

}  // namespace cato
