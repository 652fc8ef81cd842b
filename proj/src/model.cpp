#include "longreach/model.hpp"

#include <cmath>

#include <json.hpp>

#include <fstream>

namespace longreach {

namespace {

std::string content_kind_name(ContentScorerKind kind) {
  switch (kind) {
    case ContentScorerKind::Additive: return "additive";
    case ContentScorerKind::Multiplicative: return "multiplicative";
    case ContentScorerKind::ScaledDot: return "scaled_dot";
  }
  throw Error("model: bad content kind");
}

ContentScorerKind content_kind_from_name(const std::string& name) {
  for (ContentScorerKind k :
       {ContentScorerKind::Additive, ContentScorerKind::Multiplicative,
        ContentScorerKind::ScaledDot})
    if (content_kind_name(k) == name) return k;
  throw Error("model: unknown content kind '" + name + "'");
}

GruParams add_gru(ParameterStore& store, const std::string& prefix, int in,
                  int hidden, Rng& rng) {
  GruParams p;
  p.w_z = store.add_matrix(prefix + ".w_z", in, hidden, rng);
  p.u_z = store.add_matrix(prefix + ".u_z", hidden, hidden, rng);
  p.b_z = store.add_bias(prefix + ".b_z", hidden);
  p.w_r = store.add_matrix(prefix + ".w_r", in, hidden, rng);
  p.u_r = store.add_matrix(prefix + ".u_r", hidden, hidden, rng);
  p.b_r = store.add_bias(prefix + ".b_r", hidden);
  p.w_h = store.add_matrix(prefix + ".w_h", in, hidden, rng);
  p.u_h = store.add_matrix(prefix + ".u_h", hidden, hidden, rng);
  p.b_h = store.add_bias(prefix + ".b_h", hidden);
  return p;
}

}  // namespace

std::string to_json_string(const ModelConfig& cfg) {
  nlohmann::ordered_json j;
  j["embedding_dim"] = cfg.embedding_dim;
  j["hidden_dim"] = cfg.hidden_dim;
  j["bottleneck_dropout"] = cfg.bottleneck_dropout;
  j["attention"] = to_string(cfg.attention);
  j["mix_content"] = content_kind_name(cfg.mix_content);
  j["mean_from_mixed"] = cfg.mean_from_mixed;
  j["seed"] = cfg.seed;
  return j.dump(2) + "\n";
}

ModelConfig model_config_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
    ModelConfig cfg;
    cfg.embedding_dim = j.at("embedding_dim").get<int>();
    cfg.hidden_dim = j.at("hidden_dim").get<int>();
    cfg.bottleneck_dropout = j.at("bottleneck_dropout").get<float>();
    cfg.attention = attention_kind_from_string(j.at("attention").get<std::string>());
    cfg.mix_content = content_kind_from_name(j.at("mix_content").get<std::string>());
    cfg.mean_from_mixed = j.at("mean_from_mixed").get<bool>();
    cfg.seed = j.at("seed").get<uint64_t>();
    return cfg;
  } catch (const nlohmann::json::exception& e) {
    throw Error("model: bad config json: " + std::string(e.what()));
  }
}

Seq2SeqModel::Seq2SeqModel(const ModelConfig& cfg, const Vocab& vocab)
    : cfg_(cfg),
      vocab_size_(vocab.size()),
      pad_(vocab.pad()),
      sos_(vocab.sos()),
      eos_(vocab.eos()) {
  if (cfg_.embedding_dim <= 0 || cfg_.hidden_dim <= 0)
    throw Error("model: dimensions must be positive");
  Rng init = Rng(cfg_.seed).substream("init");

  int e = cfg_.embedding_dim, h = cfg_.hidden_dim;
  // Unit-variance rows: the embedding is a lookup, so fan-in scaling
  // does not apply, and undersized rows starve the encoder residual of
  // token identity (training then collapses onto the recurrent summary).
  embedding_ = store_.add_matrix("embed", vocab_size_, e, init,
                                 std::sqrt(3.0f));
  enc_gru_ = add_gru(store_, "encoder.gru", e, h, init);
  resid_w_ = store_.add_matrix("encoder.residual", e, h, init);

  switch (cfg_.attention) {
    case AttentionKind::Additive:
      content_ = ContentScorer(ContentScorerKind::Additive, h, store_,
                               "attention.content", init);
      break;
    case AttentionKind::Multiplicative:
      content_ = ContentScorer(ContentScorerKind::Multiplicative, h, store_,
                               "attention.content", init);
      break;
    case AttentionKind::ScaledDot:
      content_ = ContentScorer(ContentScorerKind::ScaledDot, h, store_,
                               "attention.content", init);
      break;
    case AttentionKind::Transformer:
      positional_ = PositionalScorer(PositionalScorerKind::Transformer, h,
                                     store_, "attention.positional", init);
      break;
    case AttentionKind::TransformerXL:
      positional_ = PositionalScorer(PositionalScorerKind::TransformerXL, h,
                                     store_, "attention.positional", init);
      break;
    case AttentionKind::Location:
      location_ = LocationAttender(h, e, e, store_, "attention.location", init);
      break;
    case AttentionKind::Mix:
      mix_ = MixAttender(cfg_.mix_content, h, e, e, store_, "attention.mix",
                         init);
      break;
  }

  dec_gru_ = add_gru(store_, "decoder.gru", e, h, init);
  out_w_ = store_.add_matrix("output.w", 2 * h, vocab_size_, init);
  out_b_ = store_.add_bias("output.b", vocab_size_);
}

EncoderOutput Seq2SeqModel::encode(const std::vector<std::vector<int>>& src,
                                   bool training, Rng* dropout_rng) {
  if (src.empty()) throw Error("encode: empty batch");
  int b = static_cast<int>(src.size());
  std::vector<int> lengths(static_cast<size_t>(b));
  int max_len = 0;
  for (int i = 0; i < b; ++i) {
    if (src[static_cast<size_t>(i)].empty())
      throw Error("encode: empty source sequence");
    lengths[static_cast<size_t>(i)] =
        static_cast<int>(src[static_cast<size_t>(i)].size());
    max_len = std::max(max_len, lengths[static_cast<size_t>(i)]);
  }

  EncoderOutput out;
  out.src = make_source_batch(lengths);

  Tensor h = Tensor::zeros({b, cfg_.hidden_dim});
  std::vector<Tensor> gru_states;
  std::vector<int> ids(static_cast<size_t>(b));
  for (int s = 0; s < max_len; ++s) {
    for (int i = 0; i < b; ++i) {
      const auto& seq = src[static_cast<size_t>(i)];
      ids[static_cast<size_t>(i)] =
          s < static_cast<int>(seq.size()) ? seq[static_cast<size_t>(s)] : pad_;
    }
    Tensor x = embedding(embedding_, ids);
    h = gru_cell(x, h, enc_gru_);
    gru_states.push_back(h);
    out.states.push_back(add(h, matmul(x, resid_w_)));
  }

  std::vector<int> last(static_cast<size_t>(b));
  for (int i = 0; i < b; ++i)
    last[static_cast<size_t>(i)] = lengths[static_cast<size_t>(i)] - 1;
  out.final_hidden = gather_steps(gru_states, last);

  if (training && cfg_.bottleneck_dropout > 0.0f) {
    if (!dropout_rng) throw Error("encode: training pass needs a dropout rng");
    out.final_hidden =
        mul(out.final_hidden,
            dropout_mask({b, cfg_.hidden_dim}, cfg_.bottleneck_dropout,
                         *dropout_rng));
  }
  return out;
}

Seq2SeqModel::DecoderState Seq2SeqModel::initial_decoder_state(
    const EncoderOutput& enc) const {
  DecoderState st;
  st.hidden = enc.final_hidden;
  if (cfg_.attention == AttentionKind::Location)
    st.location = location_.initial_state(enc.src.batch);
  else if (cfg_.attention == AttentionKind::Mix)
    st.location = mix_.initial_state(enc.src.batch);
  return st;
}

Seq2SeqModel::StepOutput Seq2SeqModel::decode_step(
    std::span<const int> prev_tokens, DecoderState& state,
    const EncoderOutput& enc) {
  Tensor x = embedding(embedding_, prev_tokens);
  Tensor h = gru_cell(x, state.hidden, dec_gru_);

  StepOutput out;
  switch (cfg_.attention) {
    case AttentionKind::Additive:
    case AttentionKind::Multiplicative:
    case AttentionKind::ScaledDot:
      out.alpha = masked_attention(content_.scores(h, enc.states), enc.src);
      out.gamma = out.alpha;
      break;
    case AttentionKind::Transformer:
    case AttentionKind::TransformerXL:
      out.alpha = masked_attention(
          positional_.scores(h, state.step, enc.states), enc.src);
      break;
    case AttentionKind::Location: {
      LocationReadout ro = location_.attend(h, enc.src, state.location);
      out.alpha = ro.lambda;
      LocationAttender::update_state_mean(state.location, out.alpha, enc.src);
      out.lambda = ro.lambda;
      out.mu = ro.mu;
      out.sigma = ro.sigma;
      out.rho_prev = ro.rho_prev;
      out.rho_step = ro.rho_step;
      out.rho_bias = ro.rho_bias;
      break;
    }
    case AttentionKind::Mix: {
      MixReadout ro = mix_.attend(h, enc.states, enc.src, state.location,
                                  cfg_.mean_from_mixed);
      out.alpha = ro.alpha;
      out.gamma = ro.gamma;
      out.percent = ro.percent;
      out.lambda = ro.loc.lambda;
      out.mu = ro.loc.mu;
      out.sigma = ro.loc.sigma;
      out.rho_prev = ro.loc.rho_prev;
      out.rho_step = ro.loc.rho_step;
      out.rho_bias = ro.loc.rho_bias;
      break;
    }
  }

  Tensor g = glimpse(enc.states, out.alpha);
  out.logits = add(matmul(concat(std::vector<Tensor>{h, g}, 1), out_w_), out_b_);
  state.hidden = h;
  state.step += 1;
  return out;
}

TeacherForcedResult Seq2SeqModel::teacher_forced_forward(
    const EncodedBatch& batch, bool training, Rng* dropout_rng) {
  if (batch.src.size() != batch.tgt.size())
    throw Error("teacher_forced: src/tgt batch size mismatch");
  int b = static_cast<int>(batch.src.size());
  int max_t = 0;
  for (const auto& t : batch.tgt) {
    if (t.empty() || t.back() != eos_)
      throw Error("teacher_forced: target must end with <eos>");
    max_t = std::max(max_t, static_cast<int>(t.size()));
  }

  EncoderOutput enc = encode(batch.src, training, dropout_rng);
  DecoderState state = initial_decoder_state(enc);

  TeacherForcedResult res;
  res.attention.resize(static_cast<size_t>(b));
  res.token_count = 0;

  std::vector<Tensor> logit_rows;
  std::vector<int> targets;
  std::vector<float> weights;
  targets.reserve(static_cast<size_t>(b) * max_t);
  weights.reserve(static_cast<size_t>(b) * max_t);

  std::vector<int> prev(static_cast<size_t>(b));
  for (int t = 0; t < max_t; ++t) {
    for (int i = 0; i < b; ++i) {
      const auto& tgt = batch.tgt[static_cast<size_t>(i)];
      if (t == 0)
        prev[static_cast<size_t>(i)] = sos_;
      else
        prev[static_cast<size_t>(i)] =
            t - 1 < static_cast<int>(tgt.size()) ? tgt[static_cast<size_t>(t - 1)] : pad_;
    }
    StepOutput step = decode_step(prev, state, enc);
    logit_rows.push_back(step.logits);

    auto alpha = step.alpha.data();
    int s_max = enc.src.max_len;
    for (int i = 0; i < b; ++i) {
      const auto& tgt = batch.tgt[static_cast<size_t>(i)];
      bool valid = t < static_cast<int>(tgt.size());
      targets.push_back(valid ? tgt[static_cast<size_t>(t)] : pad_);
      weights.push_back(valid ? 1.0f : 0.0f);
      if (valid) {
        res.token_count += 1;
        int n_s = enc.src.lengths[static_cast<size_t>(i)];
        const float* row = alpha.data() + static_cast<size_t>(i) * s_max;
        res.attention[static_cast<size_t>(i)].emplace_back(row, row + n_s);
      }
    }
  }

  res.loss = cross_entropy(concat(logit_rows, 0), targets, weights);
  return res;
}

int argmax_lowest(std::span<const float> row) {
  if (row.empty()) throw Error("argmax: empty row");
  int best = 0;
  for (int i = 1; i < static_cast<int>(row.size()); ++i)
    if (row[static_cast<size_t>(i)] > row[static_cast<size_t>(best)]) best = i;
  return best;
}

GreedyResult Seq2SeqModel::greedy_decode(const std::vector<int>& src,
                                         int max_len) {
  NoGradGuard guard;
  EncoderOutput enc = encode({src}, false, nullptr);
  DecoderState state = initial_decoder_state(enc);

  GreedyResult res;
  int prev = sos_;
  for (int t = 0; t < max_len; ++t) {
    StepOutput step = decode_step({&prev, 1}, state, enc);

    StepDiagnostics diag;
    int n_s = enc.src.lengths[0];
    auto take_row = [n_s](const Tensor& t) {
      auto d = t.data();
      return std::vector<float>(d.begin(), d.begin() + n_s);
    };
    diag.alpha = take_row(step.alpha);
    if (step.gamma.defined()) diag.gamma = take_row(step.gamma);
    if (step.lambda.defined()) diag.lambda = take_row(step.lambda);
    if (step.mu.defined()) diag.mu = step.mu.value();
    if (step.sigma.defined()) diag.sigma = step.sigma.value();
    if (step.percent.defined()) diag.percent = step.percent.value();
    if (step.rho_prev.defined())
      diag.rho = std::array<float, 3>{step.rho_prev.value(),
                                      step.rho_step.value(),
                                      step.rho_bias.value()};
    res.steps.push_back(std::move(diag));

    int tok = argmax_lowest(step.logits.data());
    if (tok == eos_) {
      res.emitted_eos = true;
      break;
    }
    res.tokens.push_back(tok);
    prev = tok;
  }
  return res;
}

void Seq2SeqModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  std::ofstream cf(dir / "config.json");
  if (!cf) throw Error("model: cannot write config.json");
  cf << to_json_string(cfg_);
  store_.save(dir);
}

Seq2SeqModel Seq2SeqModel::load(const std::filesystem::path& dir,
                                const Vocab& vocab) {
  std::ifstream cf(dir / "config.json");
  if (!cf) throw Error("model: missing config.json in " + dir.string());
  std::string text((std::istreambuf_iterator<char>(cf)),
                   std::istreambuf_iterator<char>());
  Seq2SeqModel model(model_config_from_json(text), vocab);
  model.store_.load(dir);
  return model;
}

}  // namespace longreach
