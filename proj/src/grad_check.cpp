#include "longreach/grad_check.hpp"

#include <cmath>

namespace longreach {

namespace {

void validate(const std::vector<Tensor>& inputs, double eps) {
  if (!(eps >= 1e-5 && eps <= 1e-3))
    throw Error("grad_check: eps " + std::to_string(eps) +
                " outside [1e-5, 1e-3]");
  for (const Tensor& t : inputs)
    if (!t.requires_grad())
      throw Error("grad_check: all inputs must require grad");
}

std::vector<std::vector<float>> analytic_grads(const GraphFn& f,
                                               std::vector<Tensor>& inputs) {
  for (Tensor& t : inputs) t.zero_grad();
  Tensor out = f(inputs);
  if (out.numel() != 1)
    throw Error("grad_check: function output must be scalar, got shape " +
                shape_str(out.shape()));
  out.backward();
  std::vector<std::vector<float>> grads;
  grads.reserve(inputs.size());
  for (Tensor& t : inputs) {
    auto g = t.grad();
    grads.emplace_back(g.begin(), g.end());
  }
  return grads;
}

double relative_error(double analytic, double numeric) {
  return std::fabs(analytic - numeric) /
         std::max(1.0, std::fabs(analytic));
}

}  // namespace

double grad_check(const GraphFn& f, std::vector<Tensor> inputs, double eps) {
  validate(inputs, eps);
  auto grads = analytic_grads(f, inputs);

  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    auto d = inputs[i].data();
    for (size_t j = 0; j < d.size(); ++j) {
      float saved = d[j];
      float hi = static_cast<float>(static_cast<double>(saved) + eps);
      float lo = static_cast<float>(static_cast<double>(saved) - eps);

      d[j] = hi;
      double y_hi = f(inputs).value_f64();
      d[j] = lo;
      double y_lo = f(inputs).value_f64();
      d[j] = saved;

      // Use the realized float step so eps rounding does not bias the slope.
      double h = static_cast<double>(hi) - static_cast<double>(lo);
      double numeric = (y_hi - y_lo) / h;
      worst = std::max(worst, relative_error(grads[i][j], numeric));
    }
  }
  return worst;
}

double grad_check(const GraphFn& f, const RefFn& ref,
                  std::vector<Tensor> inputs, double eps) {
  validate(inputs, eps);
  auto grads = analytic_grads(f, inputs);

  std::vector<std::vector<double>> x64;
  x64.reserve(inputs.size());
  for (const Tensor& t : inputs) {
    auto d = t.data();
    x64.emplace_back(d.begin(), d.end());
  }

  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (size_t j = 0; j < x64[i].size(); ++j) {
      double saved = x64[i][j];
      x64[i][j] = saved + eps;
      double y_hi = ref(x64);
      x64[i][j] = saved - eps;
      double y_lo = ref(x64);
      x64[i][j] = saved;
      double numeric = (y_hi - y_lo) / (2.0 * eps);
      worst = std::max(worst, relative_error(grads[i][j], numeric));
    }
  }
  return worst;
}

}  // namespace longreach
