#include "longreach/attention.hpp"

#include <cmath>

namespace longreach {

std::string to_string(AttentionKind kind) {
  switch (kind) {
    case AttentionKind::Additive: return "additive";
    case AttentionKind::Multiplicative: return "multiplicative";
    case AttentionKind::ScaledDot: return "scaled_dot";
    case AttentionKind::Transformer: return "transformer";
    case AttentionKind::TransformerXL: return "transformer_xl";
    case AttentionKind::Location: return "location";
    case AttentionKind::Mix: return "mix";
  }
  throw Error("attention: bad kind");
}

AttentionKind attention_kind_from_string(const std::string& name) {
  for (AttentionKind k :
       {AttentionKind::Additive, AttentionKind::Multiplicative,
        AttentionKind::ScaledDot, AttentionKind::Transformer,
        AttentionKind::TransformerXL, AttentionKind::Location,
        AttentionKind::Mix})
    if (to_string(k) == name) return k;
  throw Error("attention: unknown kind '" + name + "'");
}

std::vector<float> sinusoidal_encoding(double position, int dim) {
  if (dim <= 0 || dim % 2 != 0)
    throw Error("sinusoidal_encoding: dim must be positive and even, got " +
                std::to_string(dim));
  std::vector<float> enc(static_cast<size_t>(dim));
  for (int i = 0; i < dim / 2; ++i) {
    double freq = std::pow(10000.0, -2.0 * i / dim);
    enc[static_cast<size_t>(2 * i)] = static_cast<float>(std::sin(position * freq));
    enc[static_cast<size_t>(2 * i + 1)] = static_cast<float>(std::cos(position * freq));
  }
  return enc;
}

namespace {
float sigmoid1(float x) {
  if (x >= 0.0f) return 1.0f / (1.0f + std::exp(-x));
  float e = std::exp(x);
  return e / (1.0f + e);
}
constexpr float kStairSharpness = 20.0f;
}  // namespace

float soft_staircase(float x) {
  float fl = std::floor(x);
  return fl + sigmoid1(kStairSharpness * (x - 0.5f - fl));
}

float soft_staircase_dx(float x) {
  float fl = std::floor(x);
  float s = sigmoid1(kStairSharpness * (x - 0.5f - fl));
  return kStairSharpness * s * (1.0f - s);
}

Tensor soft_staircase(const Tensor& x) {
  return unary_map(x, "soft_staircase", soft_staircase, soft_staircase_dx);
}

float leaky_clamp(float x) {
  auto lrelu = [](float v) { return v > 0.0f ? v : kLeakySlope * v; };
  return 1.0f - lrelu(1.0f - lrelu(x));
}

float leaky_clamp_dx(float x) {
  float inner = x > 0.0f ? 1.0f : kLeakySlope;
  float lx = x > 0.0f ? x : kLeakySlope * x;
  float outer = (1.0f - lx) > 0.0f ? 1.0f : kLeakySlope;
  return inner * outer;
}

Tensor leaky_clamp(const Tensor& x) {
  return unary_map(x, "leaky_clamp", leaky_clamp, leaky_clamp_dx);
}

SourceBatch make_source_batch(const std::vector<int>& lengths) {
  if (lengths.empty()) throw Error("source_batch: empty batch");
  SourceBatch src;
  src.batch = static_cast<int>(lengths.size());
  src.lengths = lengths;
  for (int n : lengths) {
    if (n <= 0) throw Error("source_batch: sequence length must be positive");
    src.max_len = std::max(src.max_len, n);
  }

  int b = src.batch, s = src.max_len;
  std::vector<float> rel(static_cast<size_t>(b) * s, 0.0f);
  std::vector<float> mask(static_cast<size_t>(b) * s, 0.0f);
  std::vector<float> step(static_cast<size_t>(b), 0.0f);
  std::vector<float> inv(static_cast<size_t>(b), 0.0f);
  for (int i = 0; i < b; ++i) {
    int n = lengths[i];
    float denom = n > 1 ? static_cast<float>(n - 1) : 1.0f;
    for (int j = 0; j < s; ++j) {
      size_t idx = static_cast<size_t>(i) * s + j;
      if (j < n) {
        rel[idx] = static_cast<float>(j) / denom;
      } else {
        mask[idx] = -1e9f;
      }
    }
    step[static_cast<size_t>(i)] = n > 1 ? 1.0f / static_cast<float>(n - 1) : 0.0f;
    inv[static_cast<size_t>(i)] = 1.0f / static_cast<float>(n);
  }
  src.rel_index = Tensor({b, s}, std::move(rel));
  src.mask_bias = Tensor({b, s}, std::move(mask));
  src.step_size = Tensor({b, 1}, std::move(step));
  src.inv_len = Tensor({b, 1}, std::move(inv));
  return src;
}

Tensor attention_from_scores(const Tensor& scores) {
  if (scores.numel() == 0) throw Error("attention_from_scores: empty scores");
  return softmax(scores, scores.ndim() == 1 ? 0 : 1);
}

Tensor masked_attention(const Tensor& scores, const SourceBatch& src) {
  return softmax(add(scores, src.mask_bias), 1);
}

namespace {

// rowwise dot: [B,d] x [B,d] -> [B,1]
Tensor row_dot(const Tensor& a, const Tensor& b) {
  return sum(mul(a, b), 1, /*keepdim=*/true);
}

}  // namespace

ContentScorer::ContentScorer(ContentScorerKind kind, int dim,
                             ParameterStore& store, const std::string& prefix,
                             Rng& rng)
    : kind_(kind), dim_(dim) {
  switch (kind_) {
    case ContentScorerKind::Additive:
      w_ = store.add_matrix(prefix + ".w", 2 * dim, dim, rng);
      u_ = store.add_matrix(prefix + ".u", dim, 1, rng);
      break;
    case ContentScorerKind::Multiplicative:
      w_ = store.add_matrix(prefix + ".w", dim, dim, rng);
      break;
    case ContentScorerKind::ScaledDot:
      break;
  }
}

Tensor ContentScorer::scores(const Tensor& query,
                             std::span<const Tensor> keys) const {
  if (keys.empty()) throw Error("content_score: no keys");
  if (query.ndim() != 2 || query.dim(1) != dim_)
    throw ShapeError("content_score", query.shape(), "query dim mismatch");

  std::vector<Tensor> cols;
  cols.reserve(keys.size());
  switch (kind_) {
    case ContentScorerKind::Additive: {
      for (const Tensor& k : keys) {
        Tensor both = concat(std::vector<Tensor>{k, query}, 1);
        cols.push_back(matmul(tanh(matmul(both, w_)), u_));
      }
      break;
    }
    case ContentScorerKind::Multiplicative: {
      Tensor wq = matmul(query, w_);
      for (const Tensor& k : keys) cols.push_back(row_dot(k, wq));
      break;
    }
    case ContentScorerKind::ScaledDot: {
      float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dim_));
      for (const Tensor& k : keys)
        cols.push_back(scalar_affine(row_dot(k, query), inv_sqrt, 0.0f));
      break;
    }
  }
  return concat(cols, 1);
}

PositionalScorer::PositionalScorer(PositionalScorerKind kind, int dim,
                                   ParameterStore& store,
                                   const std::string& prefix, Rng& rng)
    : kind_(kind), dim_(dim) {
  if (dim % 2 != 0)
    throw Error("positional_score: dim must be even for sinusoids");
  if (kind_ == PositionalScorerKind::TransformerXL) {
    w_k_ = store.add_matrix(prefix + ".w_k", dim, dim, rng);
    w_p_ = store.add_matrix(prefix + ".w_p", dim, dim, rng);
    w_q_ = store.add_matrix(prefix + ".w_q", dim, dim, rng);
    b_ = store.add_bias(prefix + ".b", dim);
  }
}

Tensor PositionalScorer::scores(const Tensor& query, int target_pos,
                                std::span<const Tensor> keys) const {
  if (keys.empty()) throw Error("positional_score: no keys");
  if (query.ndim() != 2 || query.dim(1) != dim_)
    throw ShapeError("positional_score", query.shape(), "query dim mismatch");

  float inv_sqrt = 1.0f / std::sqrt(static_cast<float>(dim_));
  std::vector<Tensor> cols;
  cols.reserve(keys.size());

  if (kind_ == PositionalScorerKind::Transformer) {
    Tensor q_pos = add(query, Tensor::row(sinusoidal_encoding(target_pos, dim_)));
    for (size_t s = 0; s < keys.size(); ++s) {
      Tensor k_pos =
          add(keys[s], Tensor::row(sinusoidal_encoding(static_cast<double>(s), dim_)));
      cols.push_back(scalar_affine(row_dot(k_pos, q_pos), inv_sqrt, 0.0f));
    }
  } else {
    Tensor right = add(matmul(query, w_q_), b_);
    for (size_t s = 0; s < keys.size(); ++s) {
      double rel = static_cast<double>(s) - target_pos;
      Tensor p = matmul(Tensor::row(sinusoidal_encoding(rel, dim_)), w_p_);
      Tensor left = add(matmul(keys[s], w_k_), p);
      cols.push_back(scalar_affine(row_dot(left, right), inv_sqrt, 0.0f));
    }
  }
  return concat(cols, 1);
}

LocationAttender::LocationAttender(int query_dim, int resize_dim,
                                   int weighter_dim, ParameterStore& store,
                                   const std::string& prefix, Rng& rng)
    : query_dim_(query_dim),
      resize_dim_(resize_dim),
      weighter_dim_(weighter_dim) {
  w_resize_ = store.add_matrix(prefix + ".resize", query_dim, resize_dim, rng);
  weighter_.w_z = store.add_matrix(prefix + ".gru.w_z", resize_dim, weighter_dim, rng);
  weighter_.u_z = store.add_matrix(prefix + ".gru.u_z", weighter_dim, weighter_dim, rng);
  weighter_.b_z = store.add_bias(prefix + ".gru.b_z", weighter_dim);
  weighter_.w_r = store.add_matrix(prefix + ".gru.w_r", resize_dim, weighter_dim, rng);
  weighter_.u_r = store.add_matrix(prefix + ".gru.u_r", weighter_dim, weighter_dim, rng);
  weighter_.b_r = store.add_bias(prefix + ".gru.b_r", weighter_dim);
  weighter_.w_h = store.add_matrix(prefix + ".gru.w_h", resize_dim, weighter_dim, rng);
  weighter_.u_h = store.add_matrix(prefix + ".gru.u_h", weighter_dim, weighter_dim, rng);
  weighter_.b_h = store.add_bias(prefix + ".gru.b_h", weighter_dim);
  w_sigma_ = store.add_matrix(prefix + ".sigma", weighter_dim, 1, rng);
  w_rho_prev_ = store.add_matrix(prefix + ".rho_prev", weighter_dim, 1, rng);
  w_rho_step_ = store.add_matrix(prefix + ".rho_step", weighter_dim, 1, rng);
  w_rho_bias_ = store.add_matrix(prefix + ".rho_bias", weighter_dim, 1, rng);
}

LocationState LocationAttender::initial_state(int batch) const {
  LocationState st;
  st.omega = Tensor::zeros({batch, weighter_dim_});
  st.prev_mean = Tensor::zeros({batch, 1});
  return st;
}

LocationReadout LocationAttender::attend(const Tensor& query,
                                         const SourceBatch& src,
                                         LocationState& state) const {
  if (query.ndim() != 2 || query.dim(1) != query_dim_)
    throw ShapeError("location_attend", query.shape(), "query dim mismatch");
  if (query.dim(0) != src.batch)
    throw ShapeError("location_attend", query.shape(), src.mask_bias.shape());

  Tensor resized = relu(matmul(query, w_resize_));
  Tensor omega = gru_cell(resized, state.omega, weighter_);

  LocationReadout out;
  // Sigma is predicted at sequence scale and divided by n_s, with a floor
  // keeping the Gaussian wider than the index spacing.
  out.sigma = mul(scalar_affine(relu(matmul(omega, w_sigma_)), 1.0f, kMinSigma),
                  src.inv_len);
  out.rho_prev = sigmoid(matmul(omega, w_rho_prev_));
  out.rho_step = soft_staircase(matmul(omega, w_rho_step_));
  out.rho_bias = sigmoid(matmul(omega, w_rho_bias_));

  // mu = clamp(rho . {prev_mean, 1/(n_s-1), 1})
  Tensor mu_raw = add(add(mul(out.rho_prev, state.prev_mean),
                          mul(out.rho_step, src.step_size)),
                      out.rho_bias);
  out.mu = leaky_clamp(mu_raw);
  out.lambda = gaussian_location_weights(out.mu, out.sigma, src);

  state.omega = omega;
  return out;
}

void LocationAttender::update_state_mean(LocationState& state,
                                         const Tensor& alpha,
                                         const SourceBatch& src) {
  state.prev_mean = sum(mul(alpha, src.rel_index), 1, /*keepdim=*/true);
}

Tensor gaussian_location_weights(const Tensor& mu, const Tensor& sigma,
                                 const SourceBatch& src) {
  for (float s : sigma.data())
    if (!(s > 0.0f)) throw Error("location weights: sigma must be positive");
  Tensor diff = sub(src.rel_index, mu);
  Tensor logits = scalar_affine(
      div(mul(diff, diff), scalar_affine(mul(sigma, sigma), 2.0f, 0.0f)),
      -1.0f, 0.0f);
  return masked_attention(logits, src);
}

MixAttender::MixAttender(ContentScorerKind content_kind, int query_dim,
                         int resize_dim, int weighter_dim,
                         ParameterStore& store, const std::string& prefix,
                         Rng& rng)
    : content_(content_kind, query_dim, store, prefix + ".content", rng),
      location_(query_dim, resize_dim, weighter_dim, store,
                prefix + ".location", rng) {
  w_mix_ = store.add_matrix(prefix + ".gate", query_dim, 1, rng);
}

LocationState MixAttender::initial_state(int batch) const {
  return location_.initial_state(batch);
}

MixReadout MixAttender::attend(const Tensor& query,
                               std::span<const Tensor> keys,
                               const SourceBatch& src, LocationState& state,
                               bool mean_from_mixed) const {
  MixReadout out;
  out.gamma = masked_attention(content_.scores(query, keys), src);
  out.loc = location_.attend(query, src, state);
  out.percent = sigmoid(matmul(query, w_mix_));
  out.alpha = convex_mix(out.percent, out.loc.lambda, out.gamma);
  LocationAttender::update_state_mean(
      state, mean_from_mixed ? out.alpha : out.loc.lambda, src);
  return out;
}

Tensor convex_mix(const Tensor& percent, const Tensor& lambda,
                  const Tensor& gamma) {
  Tensor complement = scalar_affine(percent, -1.0f, 1.0f);
  return add(mul(percent, lambda), mul(complement, gamma));
}

}  // namespace longreach
