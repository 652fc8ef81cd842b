#pragma once

#include <span>
#include <string>
#include <vector>

#include "longreach/checkpoint.hpp"
#include "longreach/gru.hpp"
#include "longreach/ops.hpp"

namespace longreach {

enum class ContentScorerKind { Additive, Multiplicative, ScaledDot };
enum class PositionalScorerKind { Transformer, TransformerXL };

enum class AttentionKind {
  Additive,
  Multiplicative,
  ScaledDot,
  Transformer,
  TransformerXL,
  Location,
  Mix,
};

std::string to_string(AttentionKind kind);
AttentionKind attention_kind_from_string(const std::string& name);

// Interleaved sin/cos encoding; position may be negative (relative offsets).
// dim must be even.
std::vector<float> sinusoidal_encoding(double position, int dim);

// Soft step function: floor(x) + sigmoid(20 * (x - 0.5 - floor(x))).
// Near-identity on integers, monotone, differentiable.
float soft_staircase(float x);
float soft_staircase_dx(float x);
Tensor soft_staircase(const Tensor& x);

// Leaky two-sided clamp to [0,1]: identity inside, slope 0.01 outside.
float leaky_clamp(float x);
float leaky_clamp_dx(float x);
Tensor leaky_clamp(const Tensor& x);

inline constexpr float kLeakySlope = 0.01f;

// Padded batch of source sequences plus the constants the attenders need.
// rel_index holds s/(n_s-1) per valid position (0 when n_s == 1),
// mask_bias is 0 on valid positions and -1e9 on padding.
struct SourceBatch {
  int batch = 0;
  int max_len = 0;
  std::vector<int> lengths;
  Tensor rel_index;  // [B,S]
  Tensor mask_bias;  // [B,S]
  Tensor step_size;  // [B,1]: 1/(n_s-1), 0 when n_s == 1
  Tensor inv_len;    // [B,1]: 1/n_s
};

SourceBatch make_source_batch(const std::vector<int>& lengths);

// Rows of raw scores -> rows on the simplex.
Tensor attention_from_scores(const Tensor& scores);
// Same, with padding masked out first.
Tensor masked_attention(const Tensor& scores, const SourceBatch& src);

class ContentScorer {
 public:
  ContentScorer() = default;
  // Additive:       u^T tanh(W [k;q])
  // Multiplicative: k^T (W q)
  // ScaledDot:      k^T q / sqrt(d)
  ContentScorer(ContentScorerKind kind, int dim, ParameterStore& store,
                const std::string& prefix, Rng& rng);

  ContentScorerKind kind() const { return kind_; }
  // query [B,d], keys: S tensors [B,d] -> raw scores [B,S].
  Tensor scores(const Tensor& query, std::span<const Tensor> keys) const;

 private:
  ContentScorerKind kind_ = ContentScorerKind::ScaledDot;
  int dim_ = 0;
  Tensor w_;
  Tensor u_;
};

class PositionalScorer {
 public:
  PositionalScorer() = default;
  // Transformer:    (k_s + p_s)^T (q + p_t) / sqrt(d)
  // TransformerXL:  (W_k k_s + W_p p_{s-t})^T (W_q q + b) / sqrt(d)
  PositionalScorer(PositionalScorerKind kind, int dim, ParameterStore& store,
                   const std::string& prefix, Rng& rng);

  PositionalScorerKind kind() const { return kind_; }
  Tensor scores(const Tensor& query, int target_pos,
                std::span<const Tensor> keys) const;

 private:
  PositionalScorerKind kind_ = PositionalScorerKind::Transformer;
  int dim_ = 0;
  Tensor w_k_, w_p_, w_q_, b_;
};

// Recurrent state of the location attender. prev_mean is the mean relative
// position attended at the previous step; both reset per target sequence.
struct LocationState {
  Tensor omega;      // [B, weighter hidden]
  Tensor prev_mean;  // [B,1]
};

struct LocationReadout {
  Tensor lambda;  // [B,S]
  Tensor mu;      // [B,1]
  Tensor sigma;   // [B,1]
  // Weights over the building blocks {prev_mean, 1/(n_s-1), 1}.
  Tensor rho_prev, rho_step, rho_bias;  // [B,1]
};

// Predicts a Gaussian over relative source positions from a query
// history, with no access to source content.
class LocationAttender {
 public:
  static constexpr float kMinSigma = 0.27f;

  LocationAttender() = default;
  LocationAttender(int query_dim, int resize_dim, int weighter_dim,
                   ParameterStore& store, const std::string& prefix, Rng& rng);

  LocationState initial_state(int batch) const;

  // Advances omega and returns the location weights for this step.
  // prev_mean is left untouched; the caller decides which final weights
  // feed it (see update_state_mean).
  LocationReadout attend(const Tensor& query, const SourceBatch& src,
                         LocationState& state) const;

  // prev_mean <- sum_s alpha[:,s] * rel_index[:,s].
  static void update_state_mean(LocationState& state, const Tensor& alpha,
                                const SourceBatch& src);

  int weighter_dim() const { return weighter_dim_; }

 private:
  int query_dim_ = 0, resize_dim_ = 0, weighter_dim_ = 0;
  Tensor w_resize_;
  GruParams weighter_;
  Tensor w_sigma_, w_rho_prev_, w_rho_step_, w_rho_bias_;
};

// Normalized Gaussian weights over relative positions, computed as a
// masked softmax of -(r_s - mu)^2 / (2 sigma^2); identical to evaluating
// the Gaussian density and normalizing, but immune to underflow.
Tensor gaussian_location_weights(const Tensor& mu, const Tensor& sigma,
                                 const SourceBatch& src);

struct MixReadout {
  Tensor alpha;    // [B,S] mixed weights
  Tensor gamma;    // [B,S] content weights
  Tensor percent;  // [B,1] location share
  LocationReadout loc;
};

// Convex combination of a content attender and the location attender,
// gated per step by percent = sigmoid(W q).
class MixAttender {
 public:
  MixAttender() = default;
  MixAttender(ContentScorerKind content_kind, int query_dim, int resize_dim,
              int weighter_dim, ParameterStore& store,
              const std::string& prefix, Rng& rng);

  LocationState initial_state(int batch) const;

  // mean_from_mixed: feed prev_mean from the mixed weights (default)
  // rather than from the location weights alone.
  MixReadout attend(const Tensor& query, std::span<const Tensor> keys,
                    const SourceBatch& src, LocationState& state,
                    bool mean_from_mixed) const;

 private:
  ContentScorer content_;
  LocationAttender location_;
  Tensor w_mix_;
};

// percent * lambda + (1 - percent) * gamma, rowwise.
Tensor convex_mix(const Tensor& percent, const Tensor& lambda,
                  const Tensor& gamma);

}  // namespace longreach
