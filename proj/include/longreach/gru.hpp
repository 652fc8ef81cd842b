#pragma once

#include "longreach/ops.hpp"
#include "longreach/tensor.hpp"

namespace longreach {

// Gated recurrent unit, gate convention:
//   z = sigmoid(x W_z + h U_z + b_z)
//   r = sigmoid(x W_r + h U_r + b_r)
//   c = tanh(x W_h + (r * h) U_h + b_h)
//   h' = (1 - z) * h + z * c
struct GruParams {
  Tensor w_z, u_z, b_z;
  Tensor w_r, u_r, b_r;
  Tensor w_h, u_h, b_h;

  int input_dim() const { return w_z.dim(0); }
  int hidden_dim() const { return w_z.dim(1); }
};

// x: [B, input_dim], h: [B, hidden_dim] -> [B, hidden_dim].
Tensor gru_cell(const Tensor& x, const Tensor& h, const GruParams& p);

}  // namespace longreach
