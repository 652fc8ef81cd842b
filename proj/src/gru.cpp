#include "longreach/gru.hpp"

namespace longreach {

Tensor gru_cell(const Tensor& x, const Tensor& h, const GruParams& p) {
  if (x.ndim() != 2 || h.ndim() != 2 || x.dim(0) != h.dim(0))
    throw ShapeError("gru_cell", x.shape(), h.shape());
  if (x.dim(1) != p.input_dim() || h.dim(1) != p.hidden_dim())
    throw ShapeError("gru_cell", x.shape(), p.w_z.shape());

  Tensor z = sigmoid(add(add(matmul(x, p.w_z), matmul(h, p.u_z)), p.b_z));
  Tensor r = sigmoid(add(add(matmul(x, p.w_r), matmul(h, p.u_r)), p.b_r));
  Tensor c = tanh(add(add(matmul(x, p.w_h), matmul(mul(r, h), p.u_h)), p.b_h));
  Tensor keep = scalar_affine(z, -1.0f, 1.0f);  // 1 - z
  return add(mul(keep, h), mul(z, c));
}

}  // namespace longreach
