#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "cato/tensor.hpp"

namespace cato {

/// Named learnable tensor. `grad` is empty until the first backward pass.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter() = default;
  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() { grad = Tensor(value.shape(), 0.0); }
};

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives
/// and has not been cleared.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  std::size_t dim(std::size_t axis) const { return value().dim(axis); }
  std::size_t numel() const { return value().numel(); }
  bool requires_grad() const;
  bool valid() const { return tape_ != nullptr; }

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Gradient of a scalar loss with respect to every parameter leaf it reached.
using ParamGrads = std::vector<std::pair<Parameter*, Tensor>>;

/// Linear record of primitive applications for reverse-mode differentiation.
///
/// Nodes are appended in evaluation order, so a reverse sweep over the node list
/// is a valid topological order. Each primitive registers a closure that reads the
/// node's accumulated output gradient and pushes contributions into its parents.
class Tape {
 public:
  using BackwardFn = std::function<void(const Tensor& out_grad)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(Tensor value);
  /// Leaf bound to a parameter; repeated calls for the same parameter share a node.
  Var param(Parameter& p);

  /// Records a primitive output. `fn` is dropped when no parent requires a gradient.
  Var record(const char* op, Tensor value, std::initializer_list<Var> parents, BackwardFn fn);
  Var record(const char* op, Tensor value, const std::vector<Var>& parents, BackwardFn fn);

  /// Gradient buffer of `v`, zero-initialised on first access.
  Tensor& grad_buffer(const Var& v);

  /// Reverse sweep from a scalar loss. Does not modify Parameter::grad.
  ParamGrads gradients(const Var& loss);

  void clear();
  std::size_t size() const { return nodes_.size(); }

  const Tensor& value_of(std::size_t id) const { return nodes_[id].value; }
  bool requires_grad_of(std::size_t id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    Parameter* param = nullptr;
    BackwardFn backward;
  };

  void check_owner(const Var& v) const;

  std::deque<Node> nodes_;
  std::unordered_map<Parameter*, std::size_t> param_nodes_;
};

/// Adds d(loss)/d(param) into every reachable Parameter::grad, then clears the tape.
void backward(const Var& loss);

/// Sets every parameter's grad to zeros of matching shape.
void zero_grads(const std::vector<Parameter*>& params);

}  // namespace cato
