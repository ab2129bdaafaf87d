#pragma once

#include <cstddef>
#include <vector>

#include "cato/autodiff.hpp"

// Differentiable primitive catalogue. Every function records its output on the
// tape of its inputs; all inputs must share one tape.
namespace cato::ops {

// Linear algebra
Var matmul(const Var& a, const Var& b);  // [m,k] x [k,n]
Var bmm(const Var& a, const Var& b);     // [b,m,k] x [b,k,n]

// Elementwise binary. `b` may have the shape of a trailing suffix of `a`'s
// shape, in which case it is broadcast over the leading axes.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);

Var scale(const Var& x, double s);
Var add_scalar(const Var& x, double s);

// Elementwise unary
Var tanh(const Var& x);
Var silu(const Var& x);
Var gelu(const Var& x);  // exact erf form
Var sin(const Var& x);
Var cos(const Var& x);
Var square(const Var& x);
Var sqrt(const Var& x);

/// Softmax over the last axis.
Var softmax(const Var& x);
/// Normalises over the last axis, then applies per-channel scale and shift.
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps);

// Shape manipulation
Var reshape(const Var& x, Shape shape);
Var permute(const Var& x, const std::vector<std::size_t>& axes);
Var transpose(const Var& x);  // rank-2
/// Selects entries along `axis`; index -1 yields zeros (used for padding).
Var index_select(const Var& x, std::size_t axis, const std::vector<long>& index);
/// Concatenates along the last axis; leading shapes must agree.
Var concat(const std::vector<Var>& parts);

// Reductions
Var sum(const Var& x);
Var mean(const Var& x);
/// Maximum over axis 1 of a rank-3 tensor; ties route the gradient to the first.
Var max_axis1(const Var& x);

}  // namespace cato::ops
