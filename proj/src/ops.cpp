#include "longreach/ops.hpp"

#include <cblas.h>

#include <cmath>
#include <cstring>

namespace longreach {

namespace {

// Shapes normalized to rank 2 with leading 1s for the broadcast loops.
struct Bcast {
  int rows, cols;          // output extent
  int out_rank;            // rank of the result (max of operand ranks)
  int a_rs, a_cs;          // operand strides in the output coordinate frame
  int b_rs, b_cs;
};

void normalize2(std::span<const int> s, int& r, int& c) {
  if (s.size() == 1) {
    r = 1;
    c = s[0];
  } else {
    r = s[0];
    c = s[1];
  }
}

Bcast broadcast(const char* op, const Tensor& a, const Tensor& b) {
  int ar, ac, br, bc;
  normalize2(a.shape(), ar, ac);
  normalize2(b.shape(), br, bc);
  bool rows_ok = ar == br || ar == 1 || br == 1;
  bool cols_ok = ac == bc || ac == 1 || bc == 1;
  if (!rows_ok || !cols_ok) throw ShapeError(op, a.shape(), b.shape());
  Bcast z;
  z.rows = std::max(ar, br);
  z.cols = std::max(ac, bc);
  z.out_rank = std::max(a.ndim(), b.ndim());
  z.a_rs = ar == 1 ? 0 : ac;
  z.a_cs = ac == 1 ? 0 : 1;
  z.b_rs = br == 1 ? 0 : bc;
  z.b_cs = bc == 1 ? 0 : 1;
  return z;
}

std::vector<int> bcast_shape(const Bcast& z) {
  if (z.out_rank == 1) return {z.cols};
  return {z.rows, z.cols};
}

// f(a,b) -> out; dfda/dfdb(a,b) -> local derivative factors.
template <class F, class DA, class DB>
Tensor binary_op(const char* name, const Tensor& a, const Tensor& b, F f,
                 DA dfda, DB dfdb) {
  Bcast z = broadcast(name, a, b);
  std::vector<float> out(static_cast<size_t>(z.rows) * z.cols);
  auto ad = a.data();
  auto bd = b.data();
  size_t idx = 0;
  for (int i = 0; i < z.rows; ++i)
    for (int j = 0; j < z.cols; ++j, ++idx)
      out[idx] = f(ad[static_cast<size_t>(i) * z.a_rs + j * z.a_cs],
                   bd[static_cast<size_t>(i) * z.b_rs + j * z.b_cs]);
  return op_result(
      bcast_shape(z), std::move(out), {a, b},
      [a, b, z, dfda, dfdb](TensorImpl& self) {
        auto ad = a.data();
        auto bd = b.data();
        size_t idx = 0;
        for (int i = 0; i < z.rows; ++i)
          for (int j = 0; j < z.cols; ++j, ++idx) {
            float g = self.grad[idx];
            if (g == 0.0f) continue;
            size_t ai = static_cast<size_t>(i) * z.a_rs + j * z.a_cs;
            size_t bi = static_cast<size_t>(i) * z.b_rs + j * z.b_cs;
            if (a.requires_grad())
              a.impl()->grad[ai] += g * dfda(ad[ai], bd[bi]);
            if (b.requires_grad())
              b.impl()->grad[bi] += g * dfdb(ad[ai], bd[bi]);
          }
      });
}

template <class F, class DF>
Tensor unary_op(const char* name, const Tensor& x, F f, DF df) {
  (void)name;
  auto xd = x.data();
  std::vector<float> out(xd.size());
  for (size_t i = 0; i < xd.size(); ++i) out[i] = f(xd[i]);
  return op_result(x.shape(), std::move(out), {x},
                   [x, df](TensorImpl& self) {
                     if (!x.requires_grad()) return;
                     auto xd = x.data();
                     auto xg = x.impl()->grad.data();
                     for (size_t i = 0; i < xd.size(); ++i)
                       xg[i] += self.grad[i] * df(xd[i], self.data[i]);
                   });
}

float stable_sigmoid(float v) {
  if (v >= 0.0f) {
    float e = std::exp(-v);
    return 1.0f / (1.0f + e);
  }
  float e = std::exp(v);
  return e / (1.0f + e);
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](float x, float y) { return x + y; },
      [](float, float) { return 1.0f; }, [](float, float) { return 1.0f; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](float x, float y) { return x - y; },
      [](float, float) { return 1.0f; }, [](float, float) { return -1.0f; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](float x, float y) { return x * y; },
      [](float, float y) { return y; }, [](float x, float) { return x; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  for (float v : b.data())
    if (v == 0.0f) throw Error("div: zero divisor element");
  return binary_op(
      "div", a, b, [](float x, float y) { return x / y; },
      [](float, float y) { return 1.0f / y; },
      [](float x, float y) { return -x / (y * y); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
    throw ShapeError("matmul", a.shape(), b.shape());
  int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<float> out(static_cast<size_t>(m) * n, 0.0f);
  if (m && n && k)
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, m, n, k, 1.0f,
                a.data().data(), k, b.data().data(), n, 0.0f, out.data(), n);
  return op_result(
      {m, n}, std::move(out), {a, b}, [a, b, m, k, n](TensorImpl& self) {
        if (!(m && n && k)) return;
        if (a.requires_grad())
          cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, m, k, n, 1.0f,
                      self.grad.data(), n, b.data().data(), n, 1.0f,
                      a.impl()->grad.data(), k);
        if (b.requires_grad())
          cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, k, n, m, 1.0f,
                      a.data().data(), k, self.grad.data(), n, 1.0f,
                      b.impl()->grad.data(), n);
      });
}

Tensor concat(std::span<const Tensor> parts, int axis) {
  if (parts.empty()) throw Error("concat: no operands");
  int rank = parts[0].ndim();
  if (axis < 0 || axis >= rank)
    throw Error("concat: axis " + std::to_string(axis) + " out of range for rank " +
                std::to_string(rank));
  for (const Tensor& p : parts) {
    if (p.ndim() != rank)
      throw ShapeError("concat", parts[0].shape(), p.shape());
    for (int d = 0; d < rank; ++d)
      if (d != axis && p.dim(d) != parts[0].dim(d))
        throw ShapeError("concat", parts[0].shape(), p.shape());
  }

  std::vector<int> shape = parts[0].shape();
  int total = 0;
  for (const Tensor& p : parts) total += p.dim(axis);
  shape[axis] = total;

  std::vector<float> out(shape_numel(shape));
  std::vector<Tensor> parents(parts.begin(), parts.end());

  if (rank == 1 || axis == 0) {
    size_t off = 0;
    for (const Tensor& p : parts) {
      auto d = p.data();
      std::memcpy(out.data() + off, d.data(), d.size() * sizeof(float));
      off += d.size();
    }
    return op_result(shape, std::move(out), parents,
                     [parents](TensorImpl& self) {
                       size_t off = 0;
                       for (const Tensor& p : parents) {
                         size_t n = p.numel();
                         if (p.requires_grad()) {
                           auto g = p.impl()->grad.data();
                           for (size_t i = 0; i < n; ++i)
                             g[i] += self.grad[off + i];
                         }
                         off += n;
                       }
                     });
  }

  // rank 2, axis 1
  int rows = shape[0], cols = shape[1];
  int col0 = 0;
  for (const Tensor& p : parts) {
    int pc = p.dim(1);
    auto d = p.data();
    for (int i = 0; i < rows; ++i)
      std::memcpy(out.data() + static_cast<size_t>(i) * cols + col0,
                  d.data() + static_cast<size_t>(i) * pc, pc * sizeof(float));
    col0 += pc;
  }
  return op_result({rows, cols}, std::move(out), parents,
                   [parents, rows, cols](TensorImpl& self) {
                     int col0 = 0;
                     for (const Tensor& p : parents) {
                       int pc = p.dim(1);
                       if (p.requires_grad()) {
                         auto g = p.impl()->grad.data();
                         for (int i = 0; i < rows; ++i)
                           for (int j = 0; j < pc; ++j)
                             g[static_cast<size_t>(i) * pc + j] +=
                                 self.grad[static_cast<size_t>(i) * cols + col0 + j];
                       }
                       col0 += pc;
                     }
                   });
}

Tensor tanh(const Tensor& x) {
  return unary_op(
      "tanh", x, [](float v) { return std::tanh(v); },
      [](float, float y) { return 1.0f - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary_op(
      "sigmoid", x, stable_sigmoid,
      [](float, float y) { return y * (1.0f - y); });
}

Tensor relu(const Tensor& x) {
  return unary_op(
      "relu", x, [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor leaky_relu(const Tensor& x, float negative_slope) {
  return unary_op(
      "leaky_relu", x,
      [negative_slope](float v) { return v > 0.0f ? v : negative_slope * v; },
      [negative_slope](float v, float) {
        return v > 0.0f ? 1.0f : negative_slope;
      });
}

Tensor exp(const Tensor& x) {
  return unary_op(
      "exp", x, [](float v) { return std::exp(v); },
      [](float, float y) { return y; });
}

Tensor scalar_affine(const Tensor& x, float scale, float shift) {
  return unary_op(
      "scalar_affine", x,
      [scale, shift](float v) { return v * scale + shift; },
      [scale](float, float) { return scale; });
}

Tensor unary_map(const Tensor& x, const char* name, float (*f)(float),
                 float (*df)(float)) {
  return unary_op(name, x, f, [df](float v, float) { return df(v); });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  Tensor out = op_result({1}, {static_cast<float>(acc)}, {x},
                         [x](TensorImpl& self) {
                           if (!x.requires_grad()) return;
                           float g = self.grad[0];
                           for (float& v : x.impl()->grad) v += g;
                         });
  out.impl()->scalar_f64 = acc;
  return out;
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw Error("mean: empty tensor");
  double inv = 1.0 / static_cast<double>(x.numel());
  double acc = 0.0;
  for (float v : x.data()) acc += v;
  acc *= inv;
  float finv = static_cast<float>(inv);
  Tensor out = op_result({1}, {static_cast<float>(acc)}, {x},
                         [x, finv](TensorImpl& self) {
                           if (!x.requires_grad()) return;
                           float g = self.grad[0] * finv;
                           for (float& v : x.impl()->grad) v += g;
                         });
  out.impl()->scalar_f64 = acc;
  return out;
}

namespace {

Tensor axis_reduce(const char* name, const Tensor& x, int axis, bool keepdim,
                   bool take_mean) {
  if (x.ndim() == 1) {
    if (axis != 0)
      throw Error(std::string(name) + ": axis out of range for rank 1");
    return take_mean ? mean(x) : sum(x);
  }
  if (axis != 0 && axis != 1)
    throw Error(std::string(name) + ": axis out of range for rank 2");
  int rows = x.dim(0), cols = x.dim(1);
  int out_n = axis == 0 ? cols : rows;
  int count = axis == 0 ? rows : cols;
  if (take_mean && count == 0)
    throw Error(std::string(name) + ": empty reduction axis");
  float scale = take_mean ? 1.0f / static_cast<float>(count) : 1.0f;

  auto xd = x.data();
  std::vector<float> out(static_cast<size_t>(out_n));
  for (int o = 0; o < out_n; ++o) {
    double acc = 0.0;
    if (axis == 0)
      for (int i = 0; i < rows; ++i) acc += xd[static_cast<size_t>(i) * cols + o];
    else
      for (int j = 0; j < cols; ++j) acc += xd[static_cast<size_t>(o) * cols + j];
    out[static_cast<size_t>(o)] = static_cast<float>(acc * scale);
  }

  std::vector<int> shape;
  if (keepdim)
    shape = axis == 0 ? std::vector<int>{1, cols} : std::vector<int>{rows, 1};
  else
    shape = {out_n};

  return op_result(std::move(shape), std::move(out), {x},
                   [x, axis, rows, cols, scale](TensorImpl& self) {
                     if (!x.requires_grad()) return;
                     auto xg = x.impl()->grad.data();
                     for (int i = 0; i < rows; ++i)
                       for (int j = 0; j < cols; ++j)
                         xg[static_cast<size_t>(i) * cols + j] +=
                             scale * self.grad[axis == 0 ? j : i];
                   });
}

}  // namespace

Tensor sum(const Tensor& x, int axis, bool keepdim) {
  return axis_reduce("sum", x, axis, keepdim, false);
}

Tensor mean(const Tensor& x, int axis, bool keepdim) {
  return axis_reduce("mean", x, axis, keepdim, true);
}

Tensor softmax(const Tensor& x, int axis) {
  int rows, cols;
  bool rank1 = x.ndim() == 1;
  if (rank1) {
    if (axis != 0) throw Error("softmax: axis out of range for rank 1");
    rows = 1;
    cols = x.dim(0);
  } else {
    if (axis != 0 && axis != 1) throw Error("softmax: axis out of range for rank 2");
    rows = x.dim(0);
    cols = x.dim(1);
  }
  if (cols == 0 || rows == 0) throw Error("softmax: empty axis");

  // Work on rows; for axis 0 of rank 2, transpose index roles.
  bool along_cols = rank1 || axis == 1;
  int groups = along_cols ? rows : cols;
  int extent = along_cols ? cols : rows;
  auto at_idx = [along_cols, cols](int g, int e) -> size_t {
    return along_cols ? static_cast<size_t>(g) * cols + e
                      : static_cast<size_t>(e) * cols + g;
  };

  auto xd = x.data();
  std::vector<float> out(xd.size());
  for (int g = 0; g < groups; ++g) {
    float mx = xd[at_idx(g, 0)];
    for (int e = 1; e < extent; ++e) mx = std::max(mx, xd[at_idx(g, e)]);
    double denom = 0.0;
    for (int e = 0; e < extent; ++e) {
      float v = std::exp(xd[at_idx(g, e)] - mx);
      out[at_idx(g, e)] = v;
      denom += v;
    }
    float inv = static_cast<float>(1.0 / denom);
    for (int e = 0; e < extent; ++e) out[at_idx(g, e)] *= inv;
  }

  return op_result(
      x.shape(), std::move(out), {x},
      [x, groups, extent, at_idx](TensorImpl& self) {
        if (!x.requires_grad()) return;
        auto xg = x.impl()->grad.data();
        for (int g = 0; g < groups; ++g) {
          double dot = 0.0;
          for (int e = 0; e < extent; ++e) {
            size_t i = at_idx(g, e);
            dot += static_cast<double>(self.grad[i]) * self.data[i];
          }
          for (int e = 0; e < extent; ++e) {
            size_t i = at_idx(g, e);
            xg[i] += self.data[i] * (self.grad[i] - static_cast<float>(dot));
          }
        }
      });
}

Tensor embedding(const Tensor& table, std::span<const int> ids) {
  if (table.ndim() != 2)
    throw ShapeError("embedding", table.shape(), "table must be rank 2");
  int v = table.dim(0), e = table.dim(1);
  for (int id : ids)
    if (id < 0 || id >= v)
      throw Error("embedding: id " + std::to_string(id) + " out of range [0," +
                  std::to_string(v) + ")");
  int n = static_cast<int>(ids.size());
  std::vector<float> out(static_cast<size_t>(n) * e);
  auto td = table.data();
  for (int i = 0; i < n; ++i)
    std::memcpy(out.data() + static_cast<size_t>(i) * e,
                td.data() + static_cast<size_t>(ids[i]) * e, e * sizeof(float));
  std::vector<int> ids_copy(ids.begin(), ids.end());
  return op_result({n, e}, std::move(out), {table},
                   [table, ids_copy, e](TensorImpl& self) {
                     if (!table.requires_grad()) return;
                     auto tg = table.impl()->grad.data();
                     for (size_t i = 0; i < ids_copy.size(); ++i)
                       for (int j = 0; j < e; ++j)
                         tg[static_cast<size_t>(ids_copy[i]) * e + j] +=
                             self.grad[i * e + j];
                   });
}

Tensor gather_steps(std::span<const Tensor> steps, std::span<const int> index) {
  if (steps.empty()) throw Error("gather_steps: no steps");
  int b = steps[0].dim(0), h = steps[0].dim(1);
  for (const Tensor& s : steps)
    if (s.ndim() != 2 || s.dim(0) != b || s.dim(1) != h)
      throw ShapeError("gather_steps", steps[0].shape(), s.shape());
  if (static_cast<int>(index.size()) != b)
    throw Error("gather_steps: index length " + std::to_string(index.size()) +
                " != batch " + std::to_string(b));
  for (int s : index)
    if (s < 0 || s >= static_cast<int>(steps.size()))
      throw Error("gather_steps: step index out of range");

  std::vector<float> out(static_cast<size_t>(b) * h);
  for (int i = 0; i < b; ++i)
    std::memcpy(out.data() + static_cast<size_t>(i) * h,
                steps[index[i]].data().data() + static_cast<size_t>(i) * h,
                h * sizeof(float));
  std::vector<Tensor> parents(steps.begin(), steps.end());
  std::vector<int> idx(index.begin(), index.end());
  return op_result({b, h}, std::move(out), parents,
                   [parents, idx, h](TensorImpl& self) {
                     for (size_t i = 0; i < idx.size(); ++i) {
                       const Tensor& src = parents[static_cast<size_t>(idx[i])];
                       if (!src.requires_grad()) continue;
                       auto g = src.impl()->grad.data();
                       for (int j = 0; j < h; ++j)
                         g[i * h + j] += self.grad[i * h + j];
                     }
                   });
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> targets,
                     std::span<const float> weights) {
  if (logits.ndim() != 2)
    throw ShapeError("cross_entropy", logits.shape(), "logits must be rank 2");
  int b = logits.dim(0), v = logits.dim(1);
  if (static_cast<int>(targets.size()) != b ||
      static_cast<int>(weights.size()) != b)
    throw Error("cross_entropy: batch size mismatch");
  for (int t : targets)
    if (t < 0 || t >= v) throw Error("cross_entropy: target out of range");

  auto ld = logits.data();
  double wsum = 0.0, loss = 0.0;
  for (int i = 0; i < b; ++i) {
    float w = weights[i];
    if (w == 0.0f) continue;
    const float* row = ld.data() + static_cast<size_t>(i) * v;
    float mx = row[0];
    for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < v; ++j) denom += std::exp(static_cast<double>(row[j] - mx));
    double lse = mx + std::log(denom);
    loss += w * (lse - row[targets[i]]);
    wsum += w;
  }
  if (wsum == 0.0) throw Error("cross_entropy: all weights are zero");
  loss /= wsum;

  std::vector<int> t_copy(targets.begin(), targets.end());
  std::vector<float> w_copy(weights.begin(), weights.end());
  Tensor out = op_result(
      {1}, {static_cast<float>(loss)}, {logits},
      [logits, t_copy, w_copy, b, v, wsum](TensorImpl& self) {
        if (!logits.requires_grad()) return;
        float g = self.grad[0];
        auto ld = logits.data();
        auto lg = logits.impl()->grad.data();
        for (int i = 0; i < b; ++i) {
          float w = w_copy[i];
          if (w == 0.0f) continue;
          const float* row = ld.data() + static_cast<size_t>(i) * v;
          float* grow = lg + static_cast<size_t>(i) * v;
          float mx = row[0];
          for (int j = 1; j < v; ++j) mx = std::max(mx, row[j]);
          double denom = 0.0;
          for (int j = 0; j < v; ++j)
            denom += std::exp(static_cast<double>(row[j] - mx));
          float scale = static_cast<float>(g * w / wsum);
          for (int j = 0; j < v; ++j) {
            float p = static_cast<float>(std::exp(row[j] - mx) / denom);
            grow[j] += scale * (p - (j == t_copy[i] ? 1.0f : 0.0f));
          }
        }
      });
  out.impl()->scalar_f64 = loss;
  return out;
}

Tensor glimpse(std::span<const Tensor> values, const Tensor& alpha) {
  if (values.empty()) throw Error("glimpse: no values");
  int b = values[0].dim(0), h = values[0].dim(1);
  int s = static_cast<int>(values.size());
  for (const Tensor& v : values)
    if (v.ndim() != 2 || v.dim(0) != b || v.dim(1) != h)
      throw ShapeError("glimpse", values[0].shape(), v.shape());
  if (alpha.ndim() != 2 || alpha.dim(0) != b || alpha.dim(1) != s)
    throw ShapeError("glimpse", alpha.shape(), values[0].shape());

  auto ad = alpha.data();
  std::vector<float> out(static_cast<size_t>(b) * h, 0.0f);
  for (int k = 0; k < s; ++k) {
    auto vd = values[k].data();
    for (int i = 0; i < b; ++i) {
      float a = ad[static_cast<size_t>(i) * s + k];
      if (a == 0.0f) continue;
      const float* src = vd.data() + static_cast<size_t>(i) * h;
      float* dst = out.data() + static_cast<size_t>(i) * h;
      for (int j = 0; j < h; ++j) dst[j] += a * src[j];
    }
  }
  std::vector<Tensor> parents(values.begin(), values.end());
  parents.push_back(alpha);
  return op_result(
      {b, h}, std::move(out), parents, [parents, b, h, s](TensorImpl& self) {
        const Tensor& alpha = parents.back();
        auto ad = alpha.data();
        for (int k = 0; k < s; ++k) {
          const Tensor& val = parents[static_cast<size_t>(k)];
          auto vd = val.data();
          for (int i = 0; i < b; ++i) {
            const float* g = self.grad.data() + static_cast<size_t>(i) * h;
            if (val.requires_grad()) {
              float a = ad[static_cast<size_t>(i) * s + k];
              float* vg = val.impl()->grad.data() + static_cast<size_t>(i) * h;
              for (int j = 0; j < h; ++j) vg[j] += a * g[j];
            }
            if (alpha.requires_grad()) {
              const float* src = vd.data() + static_cast<size_t>(i) * h;
              double dot = 0.0;
              for (int j = 0; j < h; ++j)
                dot += static_cast<double>(g[j]) * src[j];
              alpha.impl()->grad[static_cast<size_t>(i) * s + k] +=
                  static_cast<float>(dot);
            }
          }
        }
      });
}

Tensor dropout_mask(std::vector<int> shape, float rate, Rng& rng,
                    bool training) {
  if (!(rate >= 0.0f && rate < 1.0f))
    throw Error("dropout_mask: rate must be in [0,1), got " +
                std::to_string(rate));
  size_t n = shape_numel(shape);
  std::vector<float> out(n, 1.0f);
  if (training) {
    float scale = 1.0f / (1.0f - rate);
    for (size_t i = 0; i < n; ++i)
      out[i] = rng.uniform() < rate ? 0.0f : scale;
  }
  return Tensor(std::move(shape), std::move(out));
}

}  // namespace longreach
