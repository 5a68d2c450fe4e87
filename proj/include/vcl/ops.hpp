#pragma once

#include <cstddef>
#include <vector>

#include "vcl/tensor.hpp"

namespace vcl::ops {

// Differentiable tensor operations. Every op takes an optional tape: pass a
// tape to record the backward rule, or nullptr for a plain forward pass (used
// by the momentum-updated key branch and by finite-difference probes). An
// output requires grad iff a tape is given and some input requires grad.

// [m,k] x [k,n] -> [m,n]
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);

// Elementwise max(0, x); subgradient at 0 is 0.
Tensor relu(Tape* tape, const Tensor& a);

// v / ||v||2 for 1-D v; zero vector is a degenerate input.
Tensor l2_normalize(Tape* tape, const Tensor& v);

// Numerically stable log-softmax of a 1-D vector (max subtraction).
Tensor log_softmax(Tape* tape, const Tensor& v);

// Elementwise arithmetic on same-shape tensors.
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);

// x * c and x + c with a compile-time constant c (no gradient for c).
Tensor scale(Tape* tape, const Tensor& a, double c);
Tensor add_scalar(Tape* tape, const Tensor& a, double c);

Tensor exp(Tape* tape, const Tensor& a);
Tensor square(Tape* tape, const Tensor& a);

// Elementwise clamp to [lo, hi]; gradient passes where lo <= x <= hi.
Tensor clamp(Tape* tape, const Tensor& a, double lo, double hi);

// Reductions to scalar.
Tensor sum(Tape* tape, const Tensor& a);
Tensor mean(Tape* tape, const Tensor& a);

// Inner product of two 1-D vectors -> scalar.
Tensor dot(Tape* tape, const Tensor& a, const Tensor& b);

// M[j,:] . x for every row j; gradient flows to x only (M is held constant).
Tensor matvec_nograd(Tape* tape, const Tensor& m, const Tensor& x);

// Concatenation of 1-D tensors (zero-length parts are skipped).
Tensor concat(Tape* tape, const std::vector<Tensor>& parts);

// v[index] -> scalar.
Tensor pick(Tape* tape, const Tensor& v, std::size_t index);

// Same data, new shape (copies; no aliasing).
Tensor reshape(Tape* tape, const Tensor& a, std::vector<std::size_t> shape);

// y = W x + b with W [m,n], x [n], b [m].
Tensor affine(Tape* tape, const Tensor& w, const Tensor& x, const Tensor& b);

// x[c,t,n] + b[c], broadcast over (t, n).
Tensor add_channel_bias(Tape* tape, const Tensor& x, const Tensor& b);

// 1-D convolution along the time axis of a [C_in,T,N] tensor with weights
// [C_out,C_in,k] and per-channel bias, "same" zero padding, given stride.
// Output time extent is ceil(T / stride).
Tensor temporal_conv(Tape* tape, const Tensor& x, const Tensor& w,
                     const Tensor& b, std::size_t stride);

// Mean over (t, n): [C,T,N] -> [C].
Tensor global_avg_pool(Tape* tape, const Tensor& x);

// (x - mean) / sqrt(var + eps) over all elements.
Tensor standardize(Tape* tape, const Tensor& x, double eps = 1e-8);

// Per-channel standardization of a [C,T,N] tensor over its (T,N) plane.
// Instance-wise, so it is deterministic per sample (no batch coupling).
Tensor channel_norm(Tape* tape, const Tensor& x, double eps = 1e-8);

}  // namespace vcl::ops
