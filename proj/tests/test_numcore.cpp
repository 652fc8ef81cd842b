#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <vector>

#include "longreach/adam.hpp"
#include "longreach/checkpoint.hpp"
#include "longreach/grad_check.hpp"
#include "longreach/gru.hpp"
#include "longreach/ops.hpp"
#include "longreach/rng.hpp"
#include "longreach/tensor.hpp"

using namespace longreach;

namespace {

std::vector<float> vec(const Tensor& t) { return t.to_vector(); }

GruParams zero_gru(int in, int hid) {
  GruParams p;
  p.w_z = Tensor::zeros({in, hid});
  p.u_z = Tensor::zeros({hid, hid});
  p.b_z = Tensor::zeros({hid});
  p.w_r = Tensor::zeros({in, hid});
  p.u_r = Tensor::zeros({hid, hid});
  p.b_r = Tensor::zeros({hid});
  p.w_h = Tensor::zeros({in, hid});
  p.u_h = Tensor::zeros({hid, hid});
  p.b_h = Tensor::zeros({hid});
  return p;
}

}  // namespace

TEST_CASE("rng is deterministic per seed and substream") {
  Rng a(42), b(42), c(43);
  CHECK(a.next_u64() == b.next_u64());
  CHECK(a.next_u64() == b.next_u64());
  CHECK(Rng(42).next_u64() != c.next_u64());

  // Substreams depend only on (seed, name), not on draws already made.
  Rng base(7);
  Rng s1 = base.substream("init");
  base.next_u64();
  base.next_u64();
  Rng s2 = Rng(7).substream("init");
  CHECK(s1.next_u64() == s2.next_u64());
  CHECK(Rng(7).substream("init").next_u64() !=
        Rng(7).substream("dropout").next_u64());
}

TEST_CASE("rng uniform stays in [0,1) and below(n) stays in range") {
  Rng rng(3);
  for (int i = 0; i < 10000; ++i) {
    float u = rng.uniform();
    CHECK(u >= 0.0f);
    CHECK(u < 1.0f);
  }
  for (int i = 0; i < 10000; ++i) CHECK(rng.below(7) < 7);

  // below() covers every residue for small n.
  std::set<uint64_t> seen;
  Rng r2(5);
  for (int i = 0; i < 200; ++i) seen.insert(r2.below(5));
  CHECK(seen.size() == 5);
}

TEST_CASE("rng shuffle is a deterministic permutation") {
  std::vector<int> v1{0, 1, 2, 3, 4, 5, 6, 7};
  std::vector<int> v2 = v1;
  Rng a(11), b(11);
  a.shuffle(v1);
  b.shuffle(v2);
  CHECK(v1 == v2);
  std::set<int> s(v1.begin(), v1.end());
  CHECK(s.size() == 8);
}

TEST_CASE("tensor construction validates shape against data length") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), Error);
  Tensor t({2, 3}, std::vector<float>(6, 1.0f));
  CHECK(t.numel() == 6);
  CHECK(t.at(1, 2) == 1.0f);
}

TEST_CASE("elementwise add/sub/mul/div with broadcasting") {
  Tensor a = Tensor::vector({1, 2});
  Tensor b = Tensor::vector({3, 4});
  CHECK(vec(add(a, b)) == std::vector<float>{4, 6});
  CHECK(vec(sub(b, a)) == std::vector<float>{2, 2});
  CHECK(vec(mul(a, b)) == std::vector<float>{3, 8});
  CHECK(vec(div(b, a)) == std::vector<float>{3, 2});

  // Row and column broadcasts against a [2,2] matrix.
  Tensor m({2, 2}, {1, 2, 3, 4});
  CHECK(vec(add(m, Tensor::row({10, 20}))) ==
        std::vector<float>{11, 22, 13, 24});
  CHECK(vec(mul(m, Tensor::column({2, 3}))) == std::vector<float>{2, 4, 9, 12});
}

TEST_CASE("shape errors name the operation and both shapes") {
  Tensor a({2, 3}, std::vector<float>(6));
  Tensor b({2, 2}, std::vector<float>(4));
  try {
    add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(e.op == "add");
    std::string msg = e.what();
    CHECK(msg.find("[2,3]") != std::string::npos);
    CHECK(msg.find("[2,2]") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(a, a), ShapeError);
}

TEST_CASE("division by an exact zero element is an error") {
  CHECK_THROWS_AS(div(Tensor::vector({1, 2}), Tensor::vector({1, 0})), Error);
}

TEST_CASE("matmul values") {
  Tensor ones23 = Tensor::full({2, 3}, 1.0f);
  Tensor ones32 = Tensor::full({3, 2}, 1.0f);
  CHECK(vec(matmul(ones23, ones32)) == std::vector<float>{3, 3, 3, 3});

  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({2, 2}, {5, 6, 7, 8});
  CHECK(vec(matmul(a, b)) == std::vector<float>{19, 22, 43, 50});
}

TEST_CASE("unary op values") {
  CHECK(sigmoid(Tensor::scalar(0)).value() == 0.5f);
  CHECK(vec(tanh(Tensor::zeros({3}))) == std::vector<float>{0, 0, 0});
  CHECK(relu(Tensor::scalar(-2)).value() == 0.0f);
  CHECK(relu(Tensor::scalar(3)).value() == 3.0f);
  CHECK(leaky_relu(Tensor::scalar(-2), 0.01f).value() ==
        doctest::Approx(-0.02).epsilon(1e-6));
  CHECK(exp(Tensor::scalar(1)).value() ==
        doctest::Approx(std::exp(1.0)).epsilon(1e-6));
}

TEST_CASE("concat along both axes") {
  Tensor a({2, 2}, {1, 2, 3, 4});
  Tensor b({1, 2}, {5, 6});
  CHECK(vec(concat(std::vector<Tensor>{a, b}, 0)) ==
        std::vector<float>{1, 2, 3, 4, 5, 6});
  Tensor c({2, 1}, {7, 8});
  CHECK(vec(concat(std::vector<Tensor>{a, c}, 1)) ==
        std::vector<float>{1, 2, 7, 3, 4, 8});
  CHECK_THROWS_AS(concat(std::vector<Tensor>{a, b}, 1), ShapeError);
}

TEST_CASE("reductions") {
  Tensor m({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(sum(m).value() == 21.0f);
  CHECK(mean(m).value() == doctest::Approx(3.5));
  CHECK(vec(sum(m, 0)) == std::vector<float>{5, 7, 9});
  CHECK(vec(sum(m, 1)) == std::vector<float>{6, 15});
  CHECK(vec(mean(m, 1)) == std::vector<float>{2, 5});
  CHECK(sum(m, 1, /*keepdim=*/true).shape() == std::vector<int>{2, 1});
}

TEST_CASE("softmax frozen values and stability") {
  CHECK(vec(softmax(Tensor::vector({0, 0}), 0)) ==
        std::vector<float>{0.5f, 0.5f});

  Tensor big = softmax(Tensor::vector({1000, 0}), 0);
  CHECK(big.at(0) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(big.at(1) == doctest::Approx(0.0).epsilon(1e-12));

  Tensor s = softmax(Tensor::vector({1, 2, 3}), 0);
  CHECK(s.at(0) == doctest::Approx(0.09003).epsilon(1e-5));
  CHECK(s.at(1) == doctest::Approx(0.24473).epsilon(1e-5));
  CHECK(s.at(2) == doctest::Approx(0.66524).epsilon(1e-5));

  // No overflow for logits up to 1e4 in magnitude; output stays a simplex.
  Tensor wide = softmax(Tensor::vector({1e4f, -1e4f, 0.0f}), 0);
  double total = 0;
  for (float v : vec(wide)) {
    CHECK(std::isfinite(v));
    CHECK(v >= 0.0f);
    total += v;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("softmax simplex property on random logits") {
  Rng rng(99);
  for (int it = 0; it < 200; ++it) {
    int n = 1 + static_cast<int>(rng.below(8));
    std::vector<float> logits(static_cast<size_t>(n));
    for (auto& v : logits) v = rng.uniform(-50.0f, 50.0f);
    Tensor s = softmax(Tensor::vector(logits), 0);
    double total = 0;
    for (float v : vec(s)) {
      CHECK(v >= 0.0f);
      total += v;
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("softmax is shift invariant") {
  Tensor a = softmax(Tensor::vector({1, 2, 3}), 0);
  Tensor b = softmax(Tensor::vector({101, 102, 103}), 0);
  for (int i = 0; i < 3; ++i)
    CHECK(a.at(i) == doctest::Approx(b.at(i)).epsilon(1e-6));
}

TEST_CASE("embedding selects rows") {
  Tensor table({3, 2}, {1, 2, 3, 4, 5, 6});
  std::vector<int> ids{2, 0};
  CHECK(vec(embedding(table, ids)) == std::vector<float>{5, 6, 1, 2});
  std::vector<int> bad{3};
  CHECK_THROWS_AS(embedding(table, bad), Error);
}

TEST_CASE("cross entropy of uniform logits is log of class count") {
  Tensor logits = Tensor::zeros({1, 4});
  std::vector<int> target{2};
  std::vector<float> w{1.0f};
  CHECK(cross_entropy(logits, target, w).value_f64() ==
        doctest::Approx(std::log(4.0)).epsilon(1e-6));
}

TEST_CASE("cross entropy ignores zero-weight rows") {
  Tensor logits({2, 3}, {0, 0, 10, 0, 0, 0});
  std::vector<int> t{2, 0};
  std::vector<float> keep{1.0f, 1.0f}, drop{1.0f, 0.0f};
  double with_pad = cross_entropy(logits, t, keep).value_f64();
  double without = cross_entropy(logits, t, drop).value_f64();
  CHECK(without < with_pad);
  CHECK(without == doctest::Approx(2 * std::exp(-10.0)).epsilon(1e-4));
}

TEST_CASE("gru cell closed forms") {
  // All-zero weights: z = 0.5 and the candidate is 0, so h' = 0.5 h.
  GruParams p = zero_gru(2, 3);
  Tensor x({1, 2}, {1, -1});
  Tensor h({1, 3}, {2, -4, 6});
  CHECK(vec(gru_cell(x, h, p)) == std::vector<float>{1, -2, 3});

  // x = 0, h = 0 is a fixed point whatever the weights (biases zero).
  Rng rng(1);
  GruParams q;
  ParameterStore store;
  q.w_z = store.add_matrix("w_z", 2, 3, rng);
  q.u_z = store.add_matrix("u_z", 3, 3, rng);
  q.b_z = store.add_bias("b_z", 3);
  q.w_r = store.add_matrix("w_r", 2, 3, rng);
  q.u_r = store.add_matrix("u_r", 3, 3, rng);
  q.b_r = store.add_bias("b_r", 3);
  q.w_h = store.add_matrix("w_h", 2, 3, rng);
  q.u_h = store.add_matrix("u_h", 3, 3, rng);
  q.b_h = store.add_bias("b_h", 3);
  CHECK(vec(gru_cell(Tensor::zeros({1, 2}), Tensor::zeros({1, 3}), q)) ==
        std::vector<float>{0, 0, 0});
}

TEST_CASE("dropout mask statistics and eval mode") {
  Rng rng(5);
  CHECK(vec(dropout_mask({4}, 0.0f, rng)) == std::vector<float>{1, 1, 1, 1});

  Tensor m = dropout_mask({1000, 1000}, 0.5f, rng);
  double total = 0;
  size_t zeros = 0;
  for (float v : m.data()) {
    total += v;
    if (v == 0.0f) ++zeros;
    CHECK((v == 0.0f || v == 2.0f));
  }
  CHECK(total / 1e6 == doctest::Approx(1.0).epsilon(0.01));
  CHECK(static_cast<double>(zeros) / 1e6 == doctest::Approx(0.5).epsilon(0.01));

  // Evaluation mode is the identity mask regardless of rate.
  Tensor eval = dropout_mask({5}, 0.5f, rng, /*training=*/false);
  CHECK(vec(eval) == std::vector<float>{1, 1, 1, 1, 1});

  CHECK_THROWS_AS(dropout_mask({2}, 1.0f, rng), Error);
  CHECK_THROWS_AS(dropout_mask({2}, -0.1f, rng), Error);
}

TEST_CASE("adam zero gradient is the identity") {
  Tensor p({2}, {1.5f, -2.5f}, /*requires_grad=*/true);
  p.zero_grad();
  std::vector<Tensor> params{p};
  Adam opt;
  opt.step(params);
  CHECK(vec(p) == std::vector<float>{1.5f, -2.5f});
}

TEST_CASE("adam first step moves by about minus lr") {
  Tensor p({1}, {0.0f}, /*requires_grad=*/true);
  p.zero_grad();
  p.grad()[0] = 1.0f;
  std::vector<Tensor> params{p};
  Adam opt;
  opt.step(params);
  CHECK(p.value() == doctest::Approx(-1e-3).epsilon(1e-6));
}

TEST_CASE("adam rejects non-finite gradients") {
  Tensor p({1}, {0.0f}, /*requires_grad=*/true);
  p.zero_grad();
  p.grad()[0] = std::nanf("");
  std::vector<Tensor> params{p};
  Adam opt;
  CHECK_THROWS_AS(opt.step(params), Error);
}

TEST_CASE("adam is deterministic across identical runs") {
  auto run = [] {
    Rng rng(9);
    ParameterStore store;
    Tensor w = store.add_matrix("w", 3, 3, rng);
    Adam opt;
    std::vector<Tensor> params{w};
    for (int i = 0; i < 10; ++i) {
      opt.zero_grad(params);
      Tensor loss = sum(mul(w, w));
      loss.backward();
      opt.step(params);
    }
    return w.to_vector();
  };
  CHECK(run() == run());
}

TEST_CASE("backward requires a scalar and composes through a graph") {
  Tensor x({2}, {3, 4}, /*requires_grad=*/true);
  CHECK_THROWS_AS(mul(x, x).backward(), Error);

  // d/dx sum((2x)^2) = 8x.
  x.zero_grad();
  Tensor y = scalar_affine(x, 2.0f, 0.0f);
  Tensor loss = sum(mul(y, y));
  loss.backward();
  CHECK(x.grad()[0] == doctest::Approx(24.0));
  CHECK(x.grad()[1] == doctest::Approx(32.0));
}

TEST_CASE("no-grad guard suppresses graph recording") {
  Tensor x({2}, {1, 2}, /*requires_grad=*/true);
  NoGradGuard guard;
  Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
  CHECK(y.impl()->parents.empty());
}

TEST_CASE("grad_check frozen tolerances") {
  Rng rng(17);
  std::vector<float> vals(6);
  for (auto& v : vals) v = rng.uniform(-2.0f, 2.0f);
  Tensor x({2, 3}, vals, /*requires_grad=*/true);

  GraphFn sum_sq = [](const std::vector<Tensor>& in) {
    return sum(mul(in[0], in[0]));
  };
  RefFn sum_sq_ref = [](const std::vector<std::vector<double>>& in) {
    double acc = 0;
    for (double v : in[0]) acc += v * v;
    return acc;
  };
  CHECK(grad_check(sum_sq, sum_sq_ref, {x}, 1e-4) < 1e-6);

  Tensor logits({1, 3}, {0.3f, -0.7f, 1.1f}, /*requires_grad=*/true);
  GraphFn ce = [](const std::vector<Tensor>& in) {
    std::vector<int> t{1};
    std::vector<float> w{1.0f};
    return cross_entropy(in[0], t, w);
  };
  RefFn ce_ref = [](const std::vector<std::vector<double>>& in) {
    double mx = std::max({in[0][0], in[0][1], in[0][2]});
    double z = 0;
    for (double v : in[0]) z += std::exp(v - mx);
    return -(in[0][1] - mx - std::log(z));
  };
  CHECK(grad_check(ce, ce_ref, {logits}, 1e-4) < 1e-5);
}

TEST_CASE("grad_check validates its own preconditions") {
  Tensor x({2}, {1, 2}, /*requires_grad=*/true);
  GraphFn vector_valued = [](const std::vector<Tensor>& in) {
    return mul(in[0], in[0]);
  };
  CHECK_THROWS_AS(grad_check(vector_valued, {x}, 1e-4), Error);

  GraphFn ok = [](const std::vector<Tensor>& in) { return sum(in[0]); };
  CHECK_THROWS_AS(grad_check(ok, {x}, 1e-6), Error);
  CHECK_THROWS_AS(grad_check(ok, {x}, 1e-2), Error);
}

TEST_CASE("checkpoint round trip is bit exact") {
  namespace fs = std::filesystem;
  fs::path dir = fs::temp_directory_path() / "longreach_ckpt_test";
  fs::remove_all(dir);

  Rng rng(23);
  ParameterStore store;
  store.add_matrix("encoder.w", 4, 5, rng);
  store.add_bias("encoder.b", 5);
  store.add_matrix("decoder.w", 2, 2, rng);
  store.save(dir);

  ParameterStore loaded;
  Rng rng2(24);
  loaded.add_matrix("encoder.w", 4, 5, rng2);
  loaded.add_bias("encoder.b", 5);
  loaded.add_matrix("decoder.w", 2, 2, rng2);
  loaded.load(dir);

  for (size_t i = 0; i < store.all().size(); ++i) {
    CHECK(store.all()[i].name == loaded.all()[i].name);
    CHECK(store.all()[i].tensor.to_vector() ==
          loaded.all()[i].tensor.to_vector());
  }

  // A missing parameter or a mismatched shape is a load-time error.
  ParameterStore wrong;
  Rng rng3(25);
  wrong.add_matrix("encoder.w", 4, 4, rng3);
  CHECK_THROWS_AS(wrong.load(dir), Error);
  fs::remove_all(dir);
}

TEST_CASE("duplicate parameter names are rejected") {
  Rng rng(1);
  ParameterStore store;
  store.add_matrix("w", 2, 2, rng);
  CHECK_THROWS_AS(store.add_matrix("w", 2, 2, rng), Error);
}

TEST_CASE("matrix init is uniform within +-1/sqrt(fan_in)") {
  Rng rng(31);
  ParameterStore store;
  Tensor w = store.add_matrix("w", 64, 32, rng);
  float bound = 1.0f / 8.0f;
  float lo = 0, hi = 0;
  for (float v : w.data()) {
    CHECK(std::fabs(v) <= bound);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  // The draw actually spans the interval rather than collapsing.
  CHECK(lo < -0.9f * bound);
  CHECK(hi > 0.9f * bound);
  CHECK(vec(store.add_bias("b", 8)) == std::vector<float>(8, 0.0f));
}
