#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace longreach {

struct GradSuiteResult {
  std::string name;
  double worst;  // max relative error over all checked entries
  double tol;

  bool pass() const { return worst <= tol; }
};

// Reference gradient checks covering the numeric primitives, the GRU cell,
// the full location attender at d=8, n_s=4, and the end-to-end loss at
// scaled-down dims. Randomization derives from the seed.
std::vector<GradSuiteResult> reference_grad_suite(uint64_t seed);

}  // namespace longreach
