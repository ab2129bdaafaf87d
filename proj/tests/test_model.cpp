#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "cato/error.hpp"
#include "cato/flops.hpp"
#include "cato/model.hpp"
#include "cato/ops.hpp"
#include "support/oracles.hpp"

using namespace cato;

namespace {

CatoConfig tiny() {
  CatoConfig c;
  c.layers = 1;
  c.embed_dim = 8;
  c.heads = 2;
  c.chart_hidden = 6;
  return c;
}

// Gives every zero-initialised tensor random values so no path is trivially zero.
void randomize(ModelState& ms, std::uint64_t seed) {
  CounterRng rng(seed);
  for (Parameter* p : ms.parameters())
    for (double& v : p->value.data()) v += 0.3 * rng.normal();
}

Tensor feats_for(const Mesh& mesh, std::size_t df, CounterRng& rng) {
  return oracle::random_tensor({mesh.nodes(), df}, rng, 1.0, 3.0);
}

double max_diff(const Tensor& t, const oracle::Mat& m) {
  double d = 0.0;
  for (std::size_t i = 0; i < t.numel(); ++i) d = std::max(d, std::abs(t[i] - m.v[i]));
  return d;
}

}  // namespace

TEST_CASE("configuration validation") {
  CatoConfig c = tiny();
  CHECK_NOTHROW(c.validate());
  c.layers = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK_THROWS_AS(ModelState::create(c, 1), ConfigError);
  c = tiny();
  c.heads = 3;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.heads = 8;  // head dim 1 is odd
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.kernel = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = tiny();
  c.dropout = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);

  CatoConfig d = CatoConfig::darcy_reference();
  CHECK(d.layers == 8);
  CHECK(d.embed_dim == 96);
  CHECK(d.heads == 8);
  CHECK(CatoConfig::desk().layers == 2);
  CHECK(CatoConfig::desk().embed_dim == 32);
  CHECK(model_variant_from_string(to_string(ModelVariant::LiftReadout)) == ModelVariant::LiftReadout);
  CHECK_THROWS_AS(model_variant_from_string("fno"), ConfigError);
}

TEST_CASE("parameter names are unique and creation is deterministic") {
  auto a = ModelState::create(CatoConfig::desk(), 5);
  auto b = ModelState::create(CatoConfig::desk(), 5);
  auto c = ModelState::create(CatoConfig::desk(), 6);
  std::set<std::string> names;
  auto pa = a.parameters(), pb = b.parameters(), pc = c.parameters();
  bool differs = false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    names.insert(pa[i]->name);
    CHECK(max_abs_diff(pa[i]->value, pb[i]->value) == 0.0);
    differs = differs || max_abs_diff(pa[i]->value, pc[i]->value) > 0.0;
  }
  CHECK(names.size() == pa.size());
  CHECK(differs);
}

TEST_CASE("lift examples") {
  CounterRng rng(1);
  CatoConfig cfg = tiny();
  auto ms = ModelState::create(cfg, 1);
  for (Parameter* p : {&ms.lift.W1, &ms.lift.W2}) p->value.fill(0.0);
  ms.lift.b2.value = oracle::random_tensor({8}, rng);
  Mesh mesh = Mesh::regular(2, 3);
  Tape t;
  Var f = t.constant(feats_for(mesh, 1, rng));
  Var h = lift(t, ms, t.constant(mesh.coords()), &f);
  for (std::size_t i = 0; i < 6; ++i)
    for (std::size_t c = 0; c < 8; ++c) CHECK(h.value().at(i, c) == ms.lift.b2.value[c]);

  cfg.feature_dim = 0;
  auto ms0 = ModelState::create(cfg, 1);
  CHECK(ms0.lift.W1.value.dim(0) == 2);
  Var h0 = lift(t, ms0, t.constant(mesh.coords()), nullptr);
  CHECK(h0.shape() == Shape{6, 8});
  CHECK_THROWS_AS(lift(t, ms, t.constant(mesh.coords()), nullptr), ShapeError);
}

TEST_CASE("lift hand evaluation on one point") {
  CounterRng rng(2);
  CatoConfig cfg = tiny();
  cfg.lift_hidden = 1;
  cfg.embed_dim = 2;
  cfg.heads = 1;
  auto ms = ModelState::create(cfg, 3);
  randomize(ms, 4);
  Tape t;
  const double x = 0.25, y = 0.75, a = 2.0;
  Var f = t.constant(Tensor({1, 1}, {a}));
  Var h = lift(t, ms, t.constant(Tensor({1, 2}, {x, y})), &f);
  const auto& W1 = ms.lift.W1.value;
  const double z = x * W1[0] + y * W1[1] + a * W1[2] + ms.lift.b1.value[0];
  const double g = 0.5 * z * (1.0 + std::erf(z / std::sqrt(2.0)));
  for (std::size_t c = 0; c < 2; ++c) CHECK(h.value()[c] == doctest::Approx(g * ms.lift.W2.value[c] + ms.lift.b2.value[c]).epsilon(1e-14));
}

TEST_CASE("block with zero weights keeps the residual") {
  CounterRng rng(3);
  CatoConfig cfg = tiny();
  auto ms = ModelState::create(cfg, 3);
  CatoBlock& b = ms.blocks[0];
  std::vector<Parameter*> ps;
  b.collect(ps);
  for (Parameter* p : ps) p->value.fill(0.0);
  b.local.pw_bias.value = oracle::random_tensor({8}, rng);
  b.mlp.b2.value = oracle::random_tensor({8}, rng);
  const GridShape grid{3, 3};
  Tensor h = oracle::random_tensor({9, 8}, rng);
  Tape t;
  Var out = block_forward(t, b, cfg, t.constant(h), t.constant(oracle::random_tensor({9, 2}, rng)), grid);
  for (std::size_t i = 0; i < 9; ++i)
    for (std::size_t c = 0; c < 8; ++c)
      CHECK(std::abs(out.value().at(i, c) - (h.at(i, c) + b.local.pw_bias.value[c] + b.mlp.b2.value[c])) < 1e-15);
}

TEST_CASE("block equals its manual composition") {
  CounterRng rng(4);
  CatoConfig cfg = tiny();
  auto ms = ModelState::create(cfg, 4);
  randomize(ms, 5);
  CatoBlock& b = ms.blocks[0];
  const GridShape grid{3, 4};
  Tensor h = oracle::random_tensor({12, 8}, rng), z = oracle::random_tensor({12, 2}, rng);
  Tape t;
  Var hv = t.constant(h), zv = t.constant(z);
  Var out = block_forward(t, b, cfg, hv, zv, grid);
  Var n1 = layer_norm(t, b.ln1, hv, cfg);
  Var mixed = ops::add(ops::add(hv, axial_forward(t, b.attn, n1, zv, grid)), local_forward(t, b.local, n1, grid));
  Var manual = ops::add(mixed, mlp_forward(t, b.mlp, layer_norm(t, b.ln2, mixed, cfg)));
  CHECK(max_abs_diff(out.value(), manual.value()) == 0.0);
}

TEST_CASE("block gradient with respect to its input") {
  CounterRng rng(5);
  CatoConfig cfg = tiny();
  auto ms = ModelState::create(cfg, 5);
  randomize(ms, 6);
  const GridShape grid{3, 3};
  Parameter h("h", oracle::random_tensor({9, 8}, rng));
  Parameter z("z", oracle::random_tensor({9, 2}, rng));
  Tensor r = oracle::random_tensor({9, 8}, rng);
  auto loss = [&](Tape& t) {
    return ops::sum(ops::mul(block_forward(t, ms.blocks[0], cfg, t.param(h), t.param(z), grid), t.constant(r)));
  };
  CHECK(oracle::fd_check({&h, &z}, loss) < 1e-6);
}

TEST_CASE("dropout is active only in training") {
  CounterRng rng(6);
  CatoConfig cfg = tiny();
  cfg.dropout = 0.5;
  auto ms = ModelState::create(cfg, 6);
  randomize(ms, 7);
  Mesh mesh = Mesh::regular(3, 3);
  Tensor f = feats_for(mesh, 1, rng);
  Tape t;
  auto eval1 = model_forward(t, ms, mesh.coords(), f, mesh.grid);
  auto eval2 = model_forward(t, ms, mesh.coords(), f, mesh.grid);
  CHECK(max_abs_diff(eval1.u_hat.value(), eval2.u_hat.value()) == 0.0);
  CounterRng drop(1);
  ForwardOptions o;
  o.training = true;
  o.dropout_rng = &drop;
  auto train = model_forward(t, ms, mesh.coords(), f, mesh.grid, o);
  CHECK(max_abs_diff(eval1.u_hat.value(), train.u_hat.value()) > 0.0);
  o.dropout_rng = nullptr;
  CHECK_THROWS_AS(model_forward(t, ms, mesh.coords(), f, mesh.grid, o), ConfigError);
}

TEST_CASE("batched prediction shapes") {
  CounterRng rng(7);
  auto ms = ModelState::create(tiny(), 7);
  std::vector<Mesh> meshes{Mesh::regular(4, 4), Mesh::regular(4, 4), Mesh::regular(4, 4)};
  std::vector<Tensor> feats;
  for (auto& m : meshes) feats.push_back(feats_for(m, 1, rng));
  auto p = predict(ms, meshes, feats);
  CHECK(p.u_hat.shape() == Shape{3, 16, 1});
  CHECK(p.q_hat.shape() == Shape{3, 16, 2});
}

TEST_CASE("tiny model matches the straight-line reimplementation") {
  CounterRng rng(8);
  for (int variant = 0; variant < 3; ++variant) {
    CatoConfig cfg = tiny();
    if (variant == 1) cfg.core = true;
    if (variant == 2) {
      cfg.layers = 2;
      cfg.feature_dim = 2;
      cfg.kernel = 5;
    }
    auto ms = ModelState::create(cfg, 9);
    randomize(ms, 10 + variant);
    Mesh mesh = Mesh::regular(4, 4);
    Tensor f = feats_for(mesh, cfg.feature_dim, rng);
    Tape t;
    auto out = model_forward(t, ms, mesh.coords(), f, mesh.grid);
    auto ref = oracle::straight_line_model(ms, mesh.coords(), f, mesh.grid);
    CHECK(max_diff(out.u_hat.value(), ref.u_hat) < 1e-10);
    CHECK(max_diff(out.q_hat.value(), ref.q_hat) < 1e-10);
    CHECK(max_diff(out.zeta.value(), ref.zeta) < 1e-12);
  }
}

TEST_CASE("baseline variant matches the straight-line reimplementation") {
  CounterRng rng(9);
  CatoConfig cfg = tiny();
  cfg.variant = ModelVariant::LiftReadout;
  auto ms = ModelState::create(cfg, 11);
  randomize(ms, 12);
  CHECK(ms.blocks.empty());
  Mesh mesh = Mesh::regular(3, 5);
  Tensor f = feats_for(mesh, 1, rng);
  Tape t;
  auto out = model_forward(t, ms, mesh.coords(), f, mesh.grid);
  auto ref = oracle::straight_line_model(ms, mesh.coords(), f, mesh.grid);
  CHECK(max_diff(out.u_hat.value(), ref.u_hat) < 1e-12);
}

TEST_CASE("chart override replaces the learned chart") {
  CounterRng rng(10);
  auto ms = ModelState::create(tiny(), 13);
  Mesh mesh = Mesh::regular(3, 3);
  Tensor f = feats_for(mesh, 1, rng), z = oracle::random_tensor({9, 2}, rng);
  ForwardOptions o;
  o.zeta = &z;
  Tape t;
  auto out = model_forward(t, ms, mesh.coords(), f, mesh.grid, o);
  CHECK(max_abs_diff(out.zeta.value(), z) == 0.0);
  Tensor bad({8, 2});
  o.zeta = &bad;
  CHECK_THROWS_AS(model_forward(t, ms, mesh.coords(), f, mesh.grid, o), ShapeError);
}

TEST_CASE("full tiny model gradient check") {
  CounterRng rng(11);
  CatoConfig cfg = tiny();
  auto ms = ModelState::create(cfg, 14);
  randomize(ms, 15);
  Mesh mesh = Mesh::regular(4, 4);
  Tensor f = feats_for(mesh, 1, rng), ru = oracle::random_tensor({16, 1}, rng), rq = oracle::random_tensor({16, 2}, rng);
  auto loss = [&](Tape& t) {
    auto o = model_forward(t, ms, mesh.coords(), f, mesh.grid);
    return ops::add(ops::sum(ops::mul(o.u_hat, t.constant(ru))), ops::sum(ops::mul(o.q_hat, t.constant(rq))));
  };
  CHECK(oracle::fd_check(ms.parameters(), loss) < 1e-5);
}

TEST_CASE("flop estimate agrees with the matmul counter") {
  CounterRng rng(12);
  CatoConfig cfg = tiny();
  auto ms = ModelState::create(cfg, 16);
  Mesh mesh = Mesh::regular(5, 6);
  Tensor f = feats_for(mesh, 1, rng);
  Tape t;
  flops::Scope scope;
  model_forward(t, ms, mesh.coords(), f, mesh.grid);
  // the depthwise stencil is not a matmul, so the counter misses exactly k^2 C per node and layer
  const std::uint64_t stencil = mesh.nodes() * cfg.layers * cfg.kernel * cfg.kernel * cfg.embed_dim;
  CHECK(estimate_forward_macs(cfg, mesh.grid) == scope.elapsed() + stencil);
}
