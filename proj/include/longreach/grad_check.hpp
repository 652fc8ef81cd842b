#pragma once

#include <functional>
#include <vector>

#include "longreach/tensor.hpp"

namespace longreach {

// Builds a scalar output from the given inputs (which require grad).
using GraphFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Double-precision reference of the same function, for low-noise checks.
using RefFn = std::function<double(const std::vector<std::vector<double>>&)>;

// Compares analytic gradients of f against central differences and returns
// max over entries of |analytic - numeric| / max(1, |analytic|).
// eps must lie in [1e-5, 1e-3]. f must produce a scalar.
//
// The two-argument form differentiates the graph itself numerically,
// reading the scalar through its 64-bit accumulator. The three-argument
// form perturbs a double-precision reference instead, which removes the
// float32 evaluation noise from the numeric side.
double grad_check(const GraphFn& f, std::vector<Tensor> inputs, double eps);
double grad_check(const GraphFn& f, const RefFn& ref,
                  std::vector<Tensor> inputs, double eps);

}  // namespace longreach
