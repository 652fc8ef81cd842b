#pragma once

#include <cstdint>
#include <vector>

#include "longreach/tensor.hpp"

namespace longreach {

struct AdamConfig {
  float lr = 1e-3f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

// First/second moment state for one parameter.
struct AdamState {
  std::vector<float> m;
  std::vector<float> v;
};

// Adam with bias correction. Parameter identity is positional: step must
// be called with the same parameter list every time.
class Adam {
 public:
  explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

  const AdamConfig& config() const { return cfg_; }
  int64_t steps_taken() const { return t_; }

  // Applies one update from the accumulated gradients.
  // Throws Error on a non-finite gradient.
  void step(std::vector<Tensor>& params);
  void zero_grad(std::vector<Tensor>& params);

 private:
  AdamConfig cfg_;
  int64_t t_ = 0;
  std::vector<AdamState> state_;
};

}  // namespace longreach
