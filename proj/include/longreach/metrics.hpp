#pragma once

#include <span>
#include <string>
#include <vector>

namespace longreach {

// Exact match including the <eos> position. target must end with eos;
// pred carries eos only if the decoder emitted one.
bool seq_acc(std::span<const int> pred, std::span<const int> target, int eos);

// Match ignoring <eos> placement: the tokens each side produced before
// its first <eos> must agree, with an overlong prediction judged on the
// target's pre-<eos> length only.
bool seq_acc_be(std::span<const int> pred, std::span<const int> target,
                int eos);

// Mean squared distance between the attention's expected source position
// sum_s alpha[t][s] * s and the reference index, over the steps strictly
// before <eos>. alpha must hold one simplex row per target token.
double attn_loss(const std::vector<std::vector<float>>& alpha,
                 std::span<const int> gold);

// Per-dimension bounding box of a set of vectors.
struct HullBounds {
  std::vector<float> lo, hi;
  size_t fitted = 0;

  void fit(std::span<const float> row);
  // Number of coordinates of row outside [lo, hi].
  int outside_count(std::span<const float> row) const;
};

struct HullReport {
  // Fraction of coordinates (resp. whole vectors) outside the box.
  double feature_fraction_outside = 0.0;
  double state_fraction_outside = 0.0;
};

class HullCounter {
 public:
  explicit HullCounter(const HullBounds& bounds) : bounds_(&bounds) {}
  void add(std::span<const float> row);
  HullReport report() const;

 private:
  const HullBounds* bounds_;
  size_t vectors_ = 0, vectors_outside_ = 0;
  size_t features_ = 0, features_outside_ = 0;
};

struct EvalReport {
  std::string split;
  double seq_acc = 0.0;
  double seq_acc_be = 0.0;
  double attn_loss = 0.0;
  size_t n_examples = 0;
  HullReport hull;

  std::string to_json() const;
};

}  // namespace longreach
