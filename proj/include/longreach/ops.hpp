#pragma once

#include <span>

#include "longreach/rng.hpp"
#include "longreach/tensor.hpp"

namespace longreach {

// Elementwise arithmetic with numpy-style trailing-dimension broadcasting
// (ranks 1 and 2). div raises Error on a zero divisor element.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

// [m,k] x [k,n] -> [m,n], cblas-backed.
Tensor matmul(const Tensor& a, const Tensor& b);

// Concatenate along axis 0 or 1. All other dimensions must match.
Tensor concat(std::span<const Tensor> parts, int axis);

Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, float negative_slope);
Tensor exp(const Tensor& x);

// x * scale + shift with float constants (not differentiable w.r.t. them).
Tensor scalar_affine(const Tensor& x, float scale, float shift);

// Reductions accumulate in 64-bit; full reductions keep the double readout.
Tensor sum(const Tensor& x);
Tensor sum(const Tensor& x, int axis, bool keepdim = false);
Tensor mean(const Tensor& x);
Tensor mean(const Tensor& x, int axis, bool keepdim = false);

// Max-subtracted softmax along the given axis of a rank-2 tensor
// (or the only axis of a rank-1 tensor).
Tensor softmax(const Tensor& x, int axis);

// Row lookup: table [V,E], ids in [0,V) -> [len(ids), E].
Tensor embedding(const Tensor& table, std::span<const int> ids);

// Select one row per step: steps are S tensors [B,H]; out[b] =
// steps[index[b]][b]. Used to pick each sequence's last valid state.
Tensor gather_steps(std::span<const Tensor> steps, std::span<const int> index);

// Weighted-mean token-level cross entropy from logits [B,V]; weight 0
// drops a row (padding). Keeps a 64-bit readout.
Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const float> weights);

// Attention-weighted sum of S value vectors: values are S tensors [B,H],
// alpha is [B,S]; out = sum_s alpha[:,s] * values[s].
Tensor glimpse(std::span<const Tensor> values, const Tensor& alpha);

// Differentiable elementwise map defined by f and its derivative.
Tensor unary_map(const Tensor& x, const char* name, float (*f)(float),
                 float (*df)(float));

// Inverted-dropout mask: entries are 1/(1-rate) with probability 1-rate,
// else 0. rate in [0,1). All ones when training is false (the rng is left
// untouched). Constant (no gradient path).
Tensor dropout_mask(std::vector<int> shape, float rate, Rng& rng,
                    bool training = true);

}  // namespace longreach
