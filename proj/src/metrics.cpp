#include "longreach/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>

#include "longreach/tensor.hpp"

namespace longreach {

namespace {

// Tokens strictly before the first eos (everything, if none).
std::span<const int> before_eos(std::span<const int> seq, int eos) {
  for (size_t i = 0; i < seq.size(); ++i)
    if (seq[i] == eos) return seq.subspan(0, i);
  return seq;
}

void check_target(std::span<const int> target, int eos) {
  if (target.empty() || target.back() != eos)
    throw Error("metrics: target must end with <eos>");
}

}  // namespace

bool seq_acc(std::span<const int> pred, std::span<const int> target, int eos) {
  check_target(target, eos);
  return pred.size() == target.size() &&
         std::equal(pred.begin(), pred.end(), target.begin());
}

bool seq_acc_be(std::span<const int> pred, std::span<const int> target,
                int eos) {
  check_target(target, eos);
  std::span<const int> p = before_eos(pred, eos);
  std::span<const int> t = before_eos(target, eos);
  size_t n = std::min(p.size(), t.size());
  return std::equal(p.begin(), p.begin() + static_cast<long>(n), t.begin());
}

double attn_loss(const std::vector<std::vector<float>>& alpha,
                 std::span<const int> gold) {
  if (alpha.size() != gold.size())
    throw Error("attn_loss: " + std::to_string(alpha.size()) +
                " attention rows for " + std::to_string(gold.size()) +
                " reference entries");
  if (gold.empty()) throw Error("attn_loss: empty reference");

  size_t steps = gold.size() - 1;  // exclude the <eos> step
  if (steps == 0) return 0.0;
  double total = 0.0;
  for (size_t t = 0; t < steps; ++t) {
    const auto& row = alpha[t];
    if (row.empty()) throw Error("attn_loss: empty attention row");
    double expected = 0.0;
    for (size_t s = 0; s < row.size(); ++s)
      expected += static_cast<double>(row[s]) * static_cast<double>(s);
    double diff = expected - gold[t];
    total += diff * diff;
  }
  return total / static_cast<double>(steps);
}

void HullBounds::fit(std::span<const float> row) {
  if (fitted == 0) {
    lo.assign(row.begin(), row.end());
    hi.assign(row.begin(), row.end());
  } else {
    if (row.size() != lo.size())
      throw Error("hull: dimension mismatch: " + std::to_string(row.size()) +
                  " vs " + std::to_string(lo.size()));
    for (size_t i = 0; i < row.size(); ++i) {
      lo[i] = std::min(lo[i], row[i]);
      hi[i] = std::max(hi[i], row[i]);
    }
  }
  ++fitted;
}

int HullBounds::outside_count(std::span<const float> row) const {
  if (fitted == 0) throw Error("hull: no fitted points");
  if (row.size() != lo.size())
    throw Error("hull: dimension mismatch: " + std::to_string(row.size()) +
                " vs " + std::to_string(lo.size()));
  int outside = 0;
  for (size_t i = 0; i < row.size(); ++i)
    if (row[i] < lo[i] || row[i] > hi[i]) ++outside;
  return outside;
}

void HullCounter::add(std::span<const float> row) {
  int outside = bounds_->outside_count(row);
  vectors_ += 1;
  features_ += row.size();
  features_outside_ += static_cast<size_t>(outside);
  if (outside > 0) vectors_outside_ += 1;
}

HullReport HullCounter::report() const {
  HullReport r;
  if (features_)
    r.feature_fraction_outside =
        static_cast<double>(features_outside_) / static_cast<double>(features_);
  if (vectors_)
    r.state_fraction_outside =
        static_cast<double>(vectors_outside_) / static_cast<double>(vectors_);
  return r;
}

std::string EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["split"] = split;
  j["seq_acc"] = seq_acc;
  j["seq_acc_be"] = seq_acc_be;
  j["attn_loss"] = attn_loss;
  j["n_examples"] = n_examples;
  j["hull"] = {{"feature_fraction_outside", hull.feature_fraction_outside},
               {"state_fraction_outside", hull.state_fraction_outside}};
  return j.dump(2) + "\n";
}

}  // namespace longreach
