#include "cato/physics_loss.hpp"

#include <cmath>
#include <cstdio>

#include "cato/error.hpp"
#include "cato/ops.hpp"

namespace cato {

void LossWeights::validate() const {
  if (!(lambda_g >= 0.0 && lambda_f >= 0.0 && lambda_c >= 0.0)) throw ConfigError("loss weights must be non-negative");
  if (!(eps > 0.0)) throw ConfigError("loss eps must be positive");
}

LossWeights LossWeights::darcy() { return {0.2, 0.2, 0.05, 1e-8}; }

std::string LossReport::to_json_line() const {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "{\"total\":%.17g,\"val\":%.17g,\"grad\":%.17g,\"flux\":%.17g,\"cons\":%.17g,\"valid_nodes\":%zu}",
                total, val, grad, flux, cons, valid_nodes);
  return buf;
}

LossReport LossTerms::report() const {
  return {total.value().item(), val.value().item(), grad.value().item(), flux.value().item(),
          cons.value().item(), valid_nodes};
}

namespace {

Var column(const Var& v) {
  if (v.value().rank() == 1) return ops::reshape(v, {v.dim(0), 1});
  if (v.value().rank() == 2 && v.dim(1) == 1) return v;
  throw ShapeError("expected a scalar field [N] or [N, 1], got " + shape_str(v.shape()));
}

void check_sample(const LossSample& s) {
  if (!s.u || !s.op) throw ShapeError("loss sample is missing its target or mesh");
  const std::size_t n = s.op->grid().nodes();
  if (s.u->numel() != n) throw ShapeError("target has " + std::to_string(s.u->numel()) + " nodes, mesh has " +
                                          std::to_string(n));
  if (s.u_hat.valid() && s.u_hat.numel() != n) {
    throw ShapeError("prediction shape " + shape_str(s.u_hat.shape()) + " does not match target");
  }
  if (s.q_hat.valid() && (s.q_hat.value().rank() != 2 || s.q_hat.dim(0) != n || s.q_hat.dim(1) != 2)) {
    throw ShapeError("flux prediction must be [" + std::to_string(n) + ", 2], got " + shape_str(s.q_hat.shape()));
  }
}

Tape& tape_of(std::span<const LossSample> batch) {
  if (batch.empty()) throw ShapeError("loss needs a non-empty batch");
  return *batch.front().u_hat.tape();
}

std::size_t total_valid(std::span<const LossSample> batch) {
  std::size_t nv = 0;
  for (const auto& s : batch) nv += s.op->valid_count();
  return nv;
}

// Sum over samples of sum of squares, divided by the batch valid count.
template <class F>
Var masked_mse(std::span<const LossSample> batch, F&& diff) {
  const std::size_t nv = total_valid(batch);
  Var acc;
  for (const auto& s : batch) {
    check_sample(s);
    Var ss = ops::sum(ops::square(diff(s)));
    acc = acc.valid() ? ops::add(acc, ss) : ss;
  }
  if (nv == 0) return ops::scale(acc, 0.0);
  return ops::scale(acc, 1.0 / static_cast<double>(nv));
}

Var target_grad(Tape& tape, const LossSample& s) {
  return tape.constant(s.op->apply(tape.constant(s.u->reshaped({s.u->numel(), 1}))).value());
}

}  // namespace

Var loss_val(Tape& tape, std::span<const LossSample> batch, double eps) {
  (void)tape_of(batch);
  Var acc;
  for (const auto& s : batch) {
    check_sample(s);
    Tensor u = s.u->reshaped({s.u->numel(), 1});
    const double unorm = l2_norm(u.data());
    Var diff = ops::sub(column(s.u_hat), tape.constant(std::move(u)));
    Var ratio = ops::scale(ops::sqrt(ops::sum(ops::square(diff))), 1.0 / (unorm + eps));
    acc = acc.valid() ? ops::add(acc, ratio) : ratio;
  }
  return ops::scale(acc, 1.0 / static_cast<double>(batch.size()));
}

Var loss_grad(Tape& tape, std::span<const LossSample> batch) {
  (void)tape_of(batch);
  return masked_mse(batch, [&](const LossSample& s) {
    return ops::sub(s.op->apply(column(s.u_hat)), target_grad(tape, s));
  });
}

Var loss_flux(Tape& tape, std::span<const LossSample> batch) {
  (void)tape_of(batch);
  return masked_mse(batch, [&](const LossSample& s) {
    Var q = ops::mul(s.q_hat, tape.constant(s.op->mask2()));
    return ops::sub(q, target_grad(tape, s));
  });
}

Var loss_cons(Tape& tape, std::span<const LossSample> batch) {
  (void)tape_of(batch);
  return masked_mse(batch, [&](const LossSample& s) {
    Var q = ops::mul(s.q_hat, tape.constant(s.op->mask2()));
    return ops::sub(q, s.op->apply(column(s.u_hat)));
  });
}

LossTerms total_loss(Tape& tape, std::span<const LossSample> batch, const LossWeights& w) {
  w.validate();
  LossTerms t;
  t.valid_nodes = total_valid(batch);
  t.val = loss_val(tape, batch, w.eps);
  t.grad = loss_grad(tape, batch);
  t.flux = loss_flux(tape, batch);
  t.cons = loss_cons(tape, batch);
  t.total = ops::add(ops::add(t.val, ops::scale(t.grad, w.lambda_g)),
                     ops::add(ops::scale(t.flux, w.lambda_f), ops::scale(t.cons, w.lambda_c)));
  return t;
}

namespace {

LossSample single(Tape& tape, const Tensor& u_hat, const Tensor* q_hat, const Tensor& u,
                  const MeshGradientOperator& op) {
  LossSample s;
  s.u_hat = tape.constant(u_hat.reshaped({u_hat.numel(), 1}));
  if (q_hat) s.q_hat = tape.constant(*q_hat);
  s.u = &u;
  s.op = &op;
  return s;
}

}  // namespace

double loss_val(const Tensor& u_hat, const Tensor& u, double eps) {
  if (u_hat.numel() != u.numel()) {
    throw ShapeError("shape mismatch " + shape_str(u_hat.shape()) + " vs " + shape_str(u.shape()));
  }
  const double num = [&] {
    double s = 0.0;
    for (std::size_t k = 0; k < u.numel(); ++k) s += (u_hat[k] - u[k]) * (u_hat[k] - u[k]);
    return std::sqrt(s);
  }();
  return num / (l2_norm(u.data()) + eps);
}

double loss_grad(const Tensor& u_hat, const Tensor& u, const Mesh& mesh) {
  Tape tape;
  MeshGradientOperator op(mesh);
  LossSample s = single(tape, u_hat, nullptr, u, op);
  return loss_grad(tape, std::span(&s, 1)).value().item();
}

double loss_flux(const Tensor& q_hat, const Tensor& u, const Mesh& mesh) {
  Tape tape;
  MeshGradientOperator op(mesh);
  LossSample s = single(tape, u, &q_hat, u, op);
  return loss_flux(tape, std::span(&s, 1)).value().item();
}

double loss_cons(const Tensor& q_hat, const Tensor& u_hat, const Mesh& mesh) {
  Tape tape;
  MeshGradientOperator op(mesh);
  LossSample s = single(tape, u_hat, &q_hat, u_hat, op);
  return loss_cons(tape, std::span(&s, 1)).value().item();
}

LossReport total_loss(const Tensor& u_hat, const Tensor& q_hat, const Tensor& u, const Mesh& mesh,
                      const LossWeights& w) {
  Tape tape;
  MeshGradientOperator op(mesh);
  LossSample s = single(tape, u_hat, &q_hat, u, op);
  return total_loss(tape, std::span(&s, 1), w).report();
}

double relative_l2(std::span<const double> u_hat, std::span<const double> u) {
  if (u_hat.size() != u.size()) throw ShapeError("relative_l2 size mismatch");
  double num = 0.0;
  double den = 0.0;
  for (std::size_t k = 0; k < u.size(); ++k) {
    num += (u_hat[k] - u[k]) * (u_hat[k] - u[k]);
    den += u[k] * u[k];
  }
  if (den == 0.0) throw NumericError("relative_l2 undefined for a zero reference");
  return std::sqrt(num / den);
}

}  // namespace cato
