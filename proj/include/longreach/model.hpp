#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "longreach/attention.hpp"
#include "longreach/checkpoint.hpp"
#include "longreach/gru.hpp"
#include "longreach/vocab.hpp"

namespace longreach {

struct ModelConfig {
  int embedding_dim = 64;
  int hidden_dim = 128;
  float bottleneck_dropout = 0.5f;
  AttentionKind attention = AttentionKind::Location;
  // Content half of the mix attender.
  ContentScorerKind mix_content = ContentScorerKind::ScaledDot;
  // Feed the location attender's running mean from the mixed weights
  // rather than from its own Gaussian.
  bool mean_from_mixed = true;
  uint64_t seed = 0;
};

std::string to_json_string(const ModelConfig& cfg);
ModelConfig model_config_from_json(const std::string& text);

// Token-id batch. Sources end with the query marker; targets end with <eos>.
struct EncodedBatch {
  std::vector<std::vector<int>> src;
  std::vector<std::vector<int>> tgt;
};

struct EncoderOutput {
  std::vector<Tensor> states;  // S tensors [B,H]: GRU state + projected embedding
  Tensor final_hidden;         // [B,H] at each sequence's last position
  SourceBatch src;
};

// Detached per-step view of the attention, for traces and alignment metrics.
struct StepDiagnostics {
  std::vector<float> alpha;
  std::optional<std::vector<float>> gamma;
  std::optional<std::vector<float>> lambda;
  std::optional<float> mu, sigma, percent;
  std::optional<std::array<float, 3>> rho;  // {prev-mean, step, bias} weights
};

struct GreedyResult {
  std::vector<int> tokens;  // emitted tokens, <sos>/<eos> excluded
  bool emitted_eos = false;
  std::vector<StepDiagnostics> steps;
};

struct TeacherForcedResult {
  Tensor loss;         // mean token cross-entropy over real (unpadded) tokens
  double token_count;  // number of real target tokens
  // attention[b][t][s]: weights over the b-th source at target step t,
  // trimmed to true lengths.
  std::vector<std::vector<std::vector<float>>> attention;
};

// GRU encoder/decoder with a configurable attention path between them.
// The decoder state is the attention query; logits come from the decoder
// state concatenated with the glimpse.
class Seq2SeqModel {
 public:
  Seq2SeqModel(const ModelConfig& cfg, const Vocab& vocab);

  struct DecoderState {
    Tensor hidden;  // [B,H]
    LocationState location;
    int step = 0;
  };

  struct StepOutput {
    Tensor logits;  // [B,V]
    Tensor alpha;   // [B,S]
    // Defined only for the kinds that produce them.
    Tensor gamma, lambda, mu, sigma, rho_prev, rho_step, rho_bias, percent;
  };

  EncoderOutput encode(const std::vector<std::vector<int>>& src, bool training,
                       Rng* dropout_rng);
  DecoderState initial_decoder_state(const EncoderOutput& enc) const;
  StepOutput decode_step(std::span<const int> prev_tokens, DecoderState& state,
                         const EncoderOutput& enc);

  TeacherForcedResult teacher_forced_forward(const EncodedBatch& batch,
                                             bool training, Rng* dropout_rng);
  GreedyResult greedy_decode(const std::vector<int>& src, int max_len);

  const ModelConfig& config() const { return cfg_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }

  void save(const std::filesystem::path& dir) const;
  static Seq2SeqModel load(const std::filesystem::path& dir,
                           const Vocab& vocab);

 private:
  ModelConfig cfg_;
  int vocab_size_, pad_, sos_, eos_;
  ParameterStore store_;

  Tensor embedding_;  // [V,E], shared by encoder and decoder
  GruParams enc_gru_, dec_gru_;
  Tensor resid_w_;  // [E,H]
  Tensor out_w_;    // [2H,V]
  Tensor out_b_;    // [V]

  ContentScorer content_;
  PositionalScorer positional_;
  LocationAttender location_;
  MixAttender mix_;
};

// Argmax with ties broken toward the lower index.
int argmax_lowest(std::span<const float> row);

}  // namespace longreach
