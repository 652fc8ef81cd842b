#include "longreach/grad_suite.hpp"

#include "longreach/grad_check.hpp"
#include "longreach/model.hpp"

namespace longreach {

std::vector<GradSuiteResult> reference_grad_suite(uint64_t seed) {
  Rng rng(seed);
  auto fill = [&rng](std::vector<int> shape) {
    size_t n = shape_numel(shape);
    std::vector<float> v(n);
    for (float& x : v) x = rng.uniform(-1.5f, 1.5f);
    return Tensor(std::move(shape), std::move(v), true);
  };

  std::vector<GradSuiteResult> checks;

  {
    GraphFn f = [](const std::vector<Tensor>& in) {
      return mean(mul(sigmoid(add(in[0], in[1])), tanh(sub(in[0], in[1]))));
    };
    checks.push_back(
        {"elementwise", grad_check(f, {fill({3, 4}), fill({3, 4})}, 1e-3),
         1e-3});
  }
  {
    GraphFn f = [](const std::vector<Tensor>& in) {
      Tensor prod = matmul(in[0], in[1]);
      return mean(softmax(concat(std::vector<Tensor>{prod, in[2]}, 1), 1));
    };
    checks.push_back(
        {"matmul+softmax",
         grad_check(f, {fill({3, 5}), fill({5, 4}), fill({3, 2})}, 1e-3),
         1e-3});
  }
  {
    GraphFn f = [](const std::vector<Tensor>& in) {
      GruParams p{in[2], in[3], in[4], in[5], in[6], in[7], in[8], in[9],
                  in[10]};
      return mean(gru_cell(in[0], in[1], p));
    };
    std::vector<Tensor> inputs = {fill({2, 3}), fill({2, 4})};
    for (int gate = 0; gate < 3; ++gate) {
      inputs.push_back(fill({3, 4}));
      inputs.push_back(fill({4, 4}));
      inputs.push_back(fill({4}));
    }
    checks.push_back({"gru_cell", grad_check(f, inputs, 1e-3), 1e-3});
  }
  {
    // Gaussian weighting chain over a padded two-row batch.
    SourceBatch src = make_source_batch({4, 3});
    GraphFn f = [src](const std::vector<Tensor>& in) {
      Tensor mu1 = leaky_clamp(in[0]);
      Tensor sig = scalar_affine(sigmoid(in[1]), 0.5f, 0.05f);
      Tensor lam1 = gaussian_location_weights(mu1, sig, src);
      Tensor mean_pos = sum(mul(lam1, src.rel_index), 1, true);
      Tensor mu2 = leaky_clamp(
          add(mul(soft_staircase(in[2]), src.step_size), mean_pos));
      Tensor lam2 = gaussian_location_weights(mu2, sig, src);
      return mean(lam2);
    };
    checks.push_back(
        {"location-weights",
         grad_check(f, {fill({2, 1}), fill({2, 1}), fill({2, 1})}, 1e-3),
         1e-3});
  }
  {
    // The full attender, two chained steps so the weighter GRU recurrence
    // and the running-mean feedback both carry gradient.
    ParameterStore store;
    Rng init = rng.substream("loc-attender");
    LocationAttender loc(8, 6, 6, store, "loc", init);
    SourceBatch src = make_source_batch({4});

    std::vector<Tensor> inputs = store.tensors();
    inputs.push_back(fill({1, 8}));
    inputs.push_back(fill({1, 8}));

    Rng readout_rng = rng.substream("loc-readout");
    auto readout = [&readout_rng] {
      std::vector<float> v(4);
      for (float& x : v) x = readout_rng.uniform(0.0f, 1.0f);
      return Tensor({1, 4}, std::move(v));
    };
    Tensor c1 = readout(), c2 = readout();

    GraphFn f = [&loc, &src, &c1, &c2](const std::vector<Tensor>& in) {
      LocationState st = loc.initial_state(1);
      LocationReadout o1 = loc.attend(in[in.size() - 2], src, st);
      LocationAttender::update_state_mean(st, o1.lambda, src);
      LocationReadout o2 = loc.attend(in.back(), src, st);
      return sum(add(mul(o1.lambda, c1), mul(o2.lambda, c2)));
    };
    checks.push_back({"location-attender", grad_check(f, inputs, 1e-3), 1e-3});
  }
  {
    Vocab vocab;
    ModelConfig cfg;
    cfg.embedding_dim = 4;
    cfg.hidden_dim = 6;
    cfg.bottleneck_dropout = 0.0f;
    cfg.attention = AttentionKind::Mix;
    cfg.seed = seed;
    Seq2SeqModel model(cfg, vocab);
    EncodedBatch batch;
    batch.src = {vocab.encode(std::vector<std::string>{"000", "t1", "."}),
                 vocab.encode(std::vector<std::string>{"101", "t2", "t3",
                                                       "."})};
    batch.tgt = {vocab.encode(std::vector<std::string>{"000", "110", "<eos>"}),
                 vocab.encode(std::vector<std::string>{"101", "001", "010",
                                                       "<eos>"})};
    GraphFn f = [&model, &batch](const std::vector<Tensor>&) {
      return model.teacher_forced_forward(batch, false, nullptr).loss;
    };
    checks.push_back(
        {"seq2seq-loss", grad_check(f, model.params().tensors(), 1e-3), 1e-3});
  }

  return checks;
}

}  // namespace longreach
