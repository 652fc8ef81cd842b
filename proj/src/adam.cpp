#include "longreach/adam.hpp"

#include <cmath>

namespace longreach {

void Adam::step(std::vector<Tensor>& params) {
  if (state_.empty()) {
    state_.resize(params.size());
    for (size_t i = 0; i < params.size(); ++i) {
      state_[i].m.assign(params[i].numel(), 0.0f);
      state_[i].v.assign(params[i].numel(), 0.0f);
    }
  }
  if (state_.size() != params.size())
    throw Error("adam: parameter list changed between steps");

  ++t_;
  double c1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
  double c2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));

  for (size_t i = 0; i < params.size(); ++i) {
    auto d = params[i].data();
    auto g = params[i].grad();
    AdamState& st = state_[i];
    if (st.m.size() != d.size())
      throw Error("adam: parameter size changed between steps");
    for (size_t j = 0; j < d.size(); ++j) {
      float gj = g[j];
      if (!std::isfinite(gj)) throw Error("adam: non-finite gradient");
      st.m[j] = cfg_.beta1 * st.m[j] + (1.0f - cfg_.beta1) * gj;
      st.v[j] = cfg_.beta2 * st.v[j] + (1.0f - cfg_.beta2) * gj * gj;
      float mhat = st.m[j] / static_cast<float>(c1);
      float vhat = st.v[j] / static_cast<float>(c2);
      d[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.epsilon);
    }
  }
}

void Adam::zero_grad(std::vector<Tensor>& params) {
  for (Tensor& p : params) p.zero_grad();
}

}  // namespace longreach
