#include "cato/autodiff.hpp"

#include "cato/error.hpp"

namespace cato {

const Tensor& Var::value() const {
  if (!tape_) throw ShapeError("use of an unbound Var");
  return tape_->value_of(id_);
}

bool Var::requires_grad() const { return tape_ && tape_->requires_grad_of(id_); }

void Tape::check_owner(const Var& v) const {
  if (v.tape_ != this || v.id_ >= nodes_.size()) {
    throw ShapeError("Var does not belong to this tape");
  }
}

Var Tape::constant(Tensor value) {
  if (!value.all_finite()) throw NumericError("non-finite constant placed on tape");
  nodes_.push_back(Node{std::move(value), {}, false, nullptr, {}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::param(Parameter& p) {
  if (auto it = param_nodes_.find(&p); it != param_nodes_.end()) return Var(this, it->second);
  if (!p.value.all_finite()) throw NumericError("parameter '" + p.name + "' holds non-finite values");
  nodes_.push_back(Node{p.value, {}, true, &p, {}});
  param_nodes_.emplace(&p, nodes_.size() - 1);
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, std::initializer_list<Var> parents, BackwardFn fn) {
  bool needs = false;
  for (const Var& v : parents) {
    check_owner(v);
    needs = needs || nodes_[v.id_].requires_grad;
  }
  if (!value.all_finite()) throw NumericError(std::string("non-finite output from ") + op);
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(fn) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Var Tape::record(const char* op, Tensor value, const std::vector<Var>& parents, BackwardFn fn) {
  bool needs = false;
  for (const Var& v : parents) {
    check_owner(v);
    needs = needs || nodes_[v.id_].requires_grad;
  }
  if (!value.all_finite()) throw NumericError(std::string("non-finite output from ") + op);
  nodes_.push_back(Node{std::move(value), {}, needs, nullptr, needs ? std::move(fn) : BackwardFn{}});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::grad_buffer(const Var& v) {
  check_owner(v);
  Node& n = nodes_[v.id_];
  if (n.grad.numel() != n.value.numel()) n.grad = Tensor(n.value.shape(), 0.0);
  return n.grad;
}

ParamGrads Tape::gradients(const Var& loss) {
  check_owner(loss);
  if (loss.value().numel() != 1) {
    throw ShapeError("backward requires a scalar loss, got shape " + shape_str(loss.shape()));
  }
  for (Node& n : nodes_) n.grad = Tensor();
  grad_buffer(loss)[0] = 1.0;
  for (std::size_t id = loss.id_ + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.numel() == 0 || !n.backward) continue;
    n.backward(n.grad);
  }
  ParamGrads out;
  out.reserve(param_nodes_.size());
  for (Node& n : nodes_) {
    if (!n.param) continue;
    Tensor g = n.grad.numel() ? std::move(n.grad) : Tensor(n.value.shape(), 0.0);
    out.emplace_back(n.param, std::move(g));
  }
  return out;
}

void Tape::clear() {
  nodes_.clear();
  param_nodes_.clear();
}

void backward(const Var& loss) {
  Tape* tape = loss.tape();
  if (!tape) throw ShapeError("loss is not on a tape");
  for (auto& [p, g] : tape->gradients(loss)) {
    if (p->grad.numel() != p->value.numel()) p->grad = Tensor(p->value.shape(), 0.0);
    p->grad += g;
  }
  tape->clear();
}

void zero_grads(const std::vector<Parameter*>& params) {
  for (Parameter* p : params) p->zero_grad();
}

}  // namespace cato
