#include <doctest.h>

#include <cmath>
#include <vector>

#include "pets/ops.hpp"
#include "pets/train.hpp"
#include "oracles.hpp"

using namespace pets;
using oracle::gradcheck;
using oracle::random_tensor;

namespace {

Tensor target_like(const Tensor& t, Rng& rng) {
  Tensor tgt = random_tensor(t.shape(), rng, 1.0, false);
  return tgt;
}

}  // namespace

TEST_CASE("matmul hand example") {
  Tensor a = Tensor::from({2, 2}, {1, 2, 3, 4});
  Tensor b = Tensor::from({2, 1}, {5, 6});
  Tensor c = matmul(nullptr, a, b);
  CHECK(c.data() == std::vector<double>{17, 39});
}

TEST_CASE("shape mismatches carry both shapes in the message") {
  Tensor a = Tensor::from({2, 3}, std::vector<double>(6, 1.0));
  Tensor b = Tensor::from({2, 2}, std::vector<double>(4, 1.0));
  try {
    matmul(nullptr, a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2, 3]") != std::string::npos);
    CHECK(msg.find("[2, 2]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(nullptr, a, b), ShapeError);
}

TEST_CASE("mean and mse gradients have their closed forms") {
  Rng rng(1);
  Tensor x = random_tensor({3, 4}, rng);
  Tape tape;
  Tensor loss = mean_all(&tape, x);
  tape.backward(loss);
  for (double g : x.grad()) CHECK(g == doctest::Approx(1.0 / 12));

  Tensor y = random_tensor({6}, rng);
  Tensor zero = Tensor::from({6}, std::vector<double>(6, 0.0));
  Tape tape2;
  Tensor loss2 = mse_loss(&tape2, y, zero);
  tape2.backward(loss2);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(y.grad()[i] == doctest::Approx(2.0 * y.data()[i] / 6.0));
  }
}

TEST_CASE("elementwise and linear primitives pass finite differences") {
  Rng rng(2);
  Tensor a = random_tensor({2, 5}, rng);
  Tensor b = random_tensor({2, 5}, rng);
  CHECK(gradcheck({a, b}, [&](Tape* t) {
          return mean_all(t, mul(t, add(t, a, b), scale(t, a, 0.7)));
        }) < 1e-4);

  Tensor m1 = random_tensor({3, 4}, rng);
  Tensor m2 = random_tensor({4, 2}, rng);
  CHECK(gradcheck({m1, m2}, [&](Tape* t) {
          return mean_all(t, matmul(t, m1, m2));
        }) < 1e-4);

  Tensor x = random_tensor({2, 3, 4}, rng);
  Tensor W = random_tensor({4, 6}, rng);
  Tensor bias = random_tensor({6}, rng);
  Tensor tgt = target_like(linear(nullptr, x, W, bias), rng);
  CHECK(gradcheck({x, W, bias}, [&](Tape* t) {
          return mse_loss(t, linear(t, x, W, bias), tgt);
        }) < 1e-4);

  Tensor nb = linear(nullptr, x, W, Tensor());
  CHECK(nb.shape() == std::vector<std::int64_t>{2, 3, 6});
  CHECK(gradcheck({x, W}, [&](Tape* t) {
          return mean_all(t, linear(t, x, W, Tensor()));
        }) < 1e-4);
}

TEST_CASE("conv1d identity kernel and finite differences") {
  Rng rng(3);
  Tensor x = random_tensor({2, 6, 3}, rng);

  ConvParams ident;
  std::vector<double> w(3 * 3 * 3, 0.0);
  for (int o = 0; o < 3; ++o) w[static_cast<std::size_t>((o * 3 + o) * 3 + 1)] = 1.0;
  ident.W = Tensor::from({3, 3, 3}, w);
  ident.b = Tensor::from({3}, {0, 0, 0});
  Tensor y = conv1d(nullptr, x, ident);
  for (std::size_t i = 0; i < x.data().size(); ++i) {
    CHECK(y.data()[i] == doctest::Approx(x.data()[i]));
  }

  ConvParams p;
  p.W = random_tensor({4, 3, 3}, rng);
  p.b = random_tensor({4}, rng);
  Tensor tgt = target_like(conv1d(nullptr, x, p), rng);
  CHECK(gradcheck({x, p.W, p.b}, [&](Tape* t) {
          return mse_loss(t, conv1d(t, x, p), tgt);
        }) < 1e-4);
}

TEST_CASE("self attention: shape, stochastic rows, finite differences") {
  Rng rng(4);
  Tensor x = random_tensor({2, 5, 8}, rng);
  AttnParams p;
  p.Wq = random_tensor({8, 8}, rng, 0.5);
  p.Wk = random_tensor({8, 8}, rng, 0.5);
  p.Wv = random_tensor({8, 8}, rng, 0.5);
  p.Wo = random_tensor({8, 8}, rng, 0.5);

  AttnRecord rec;
  Tensor y = self_attention(nullptr, x, p, &rec);
  CHECK(y.shape() == std::vector<std::int64_t>{2, 5, 8});
  REQUIRE(rec.shape == std::vector<std::int64_t>{2, 5, 5});
  for (int r = 0; r < 2; ++r) {
    for (int i = 0; i < 5; ++i) {
      double s = 0.0;
      for (int j = 0; j < 5; ++j) {
        s += rec.weights[static_cast<std::size_t>((r * 5 + i) * 5 + j)];
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }

  Tensor small = random_tensor({1, 3, 4}, rng);
  AttnParams ps;
  ps.Wq = random_tensor({4, 4}, rng, 0.5);
  ps.Wk = random_tensor({4, 4}, rng, 0.5);
  ps.Wv = random_tensor({4, 4}, rng, 0.5);
  ps.Wo = random_tensor({4, 4}, rng, 0.5);
  Tensor tgt = target_like(self_attention(nullptr, small, ps), rng);
  CHECK(gradcheck({small, ps.Wq, ps.Wk, ps.Wv, ps.Wo}, [&](Tape* t) {
          return mse_loss(t, self_attention(t, small, ps), tgt);
        }) < 1e-4);
}

TEST_CASE("feed forward, layer norm, gelu, softmax finite differences") {
  Rng rng(5);
  Tensor x = random_tensor({2, 3, 4}, rng);

  FfnParams ffn;
  ffn.l1.W = random_tensor({4, 8}, rng, 0.5);
  ffn.l1.b = random_tensor({8}, rng, 0.5);
  ffn.l2.W = random_tensor({8, 4}, rng, 0.5);
  ffn.l2.b = random_tensor({4}, rng, 0.5);
  Tensor tgt = target_like(x, rng);
  CHECK(gradcheck({x, ffn.l1.W, ffn.l1.b, ffn.l2.W, ffn.l2.b},
                  [&](Tape* t) {
                    return mse_loss(t, feed_forward(t, x, ffn), tgt);
                  }) < 1e-4);

  LnParams ln;
  ln.gamma = random_tensor({4}, rng, 0.5);
  ln.beta = random_tensor({4}, rng, 0.5);
  for (auto& g : ln.gamma.data()) g += 1.0;
  CHECK(gradcheck({x, ln.gamma, ln.beta}, [&](Tape* t) {
          return mse_loss(t, layer_norm(t, x, ln), tgt);
        }) < 1e-4);

  CHECK(gradcheck({x}, [&](Tape* t) {
          return mean_all(t, gelu(t, x));
        }) < 1e-4);

  Tensor logits = random_tensor({3, 5}, rng);
  Tensor stgt = target_like(softmax(nullptr, logits), rng);
  CHECK(gradcheck({logits}, [&](Tape* t) {
          return mse_loss(t, softmax(t, logits), stgt);
        }) < 1e-4);

  Tensor sm = softmax(nullptr, logits);
  for (int r = 0; r < 3; ++r) {
    double s = 0.0;
    for (int c = 0; c < 5; ++c) {
      s += sm.data()[static_cast<std::size_t>(r * 5 + c)];
    }
    CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("structural ops pass finite differences") {
  Rng rng(6);
  Tensor x = random_tensor({2, 6, 3}, rng);
  CHECK(gradcheck({x}, [&](Tape* t) {
          return mean_all(t, avg_pool_groups(t, x, 2));
        }) < 1e-4);
  CHECK(gradcheck({x}, [&](Tape* t) {
          Tensor f = flatten(t, x);
          return mean_all(t, mul(t, f, f));
        }) < 1e-4);

  Tensor a = random_tensor({2, 2, 3}, rng);
  Tensor b = random_tensor({2, 4, 3}, rng);
  CHECK(gradcheck({a, b}, [&](Tape* t) {
          Tensor c = concat_tokens(t, {a, b});
          auto parts = split_tokens(t, c, {3, 3});
          return mean_all(t, mul(t, parts[0], parts[1]));
        }) < 1e-4);

  Tensor table = random_tensor({6, 3}, rng);
  CHECK(gradcheck({x, table}, [&](Tape* t) {
          Tensor y = add_rows(t, x, table);
          return mean_all(t, mul(t, y, y));
        }) < 1e-4);

  Tensor rows = random_tensor({6, 4}, rng);
  CHECK(gradcheck({rows}, [&](Tape* t) {
          Tensor g = mean_rowgroups(t, rows, 3);
          return mean_all(t, mul(t, g, g));
        }) < 1e-4);
}

TEST_CASE("loss primitives pass finite differences") {
  Rng rng(7);
  Tensor pred = random_tensor({3, 4}, rng);
  Tensor tgt = random_tensor({3, 4}, rng, 1.0, false);
  CHECK(gradcheck({pred}, [&](Tape* t) {
          return mse_loss(t, pred, tgt);
        }) < 1e-4);

  std::vector<double> mv(12, 0.0);
  for (std::size_t i = 0; i < mv.size(); i += 2) mv[i] = 1.0;
  Tensor mask = Tensor::from({3, 4}, mv);
  CHECK(gradcheck({pred}, [&](Tape* t) {
          return masked_mse_loss(t, pred, tgt, mask);
        }) < 1e-4);

  Tensor all_zero_mask = Tensor::from({3, 4}, std::vector<double>(12, 0.0));
  CHECK_THROWS_AS(masked_mse_loss(nullptr, pred, tgt, all_zero_mask),
                  InvalidInput);

  Tensor logits = random_tensor({4, 3}, rng);
  const std::vector<int> labels{0, 2, 1, 2};
  CHECK(gradcheck({logits}, [&](Tape* t) {
          return cross_entropy_loss(t, logits, labels);
        }) < 1e-4);
}

TEST_CASE("zero-initialized pointwise conv is silent but trainable") {
  Rng rng(8);
  ParamStore store;
  ConvParams gate = zero_init_conv1x1(store, "gate", 3);
  for (double w : gate.W.data()) CHECK(w == 0.0);
  for (double b : gate.b.data()) CHECK(b == 0.0);

  Tensor x = random_tensor({2, 4, 3}, rng, 1.0, false);
  Tensor y = conv1d(nullptr, x, gate);
  for (double v : y.data()) CHECK(v == 0.0);

  Tape tape;
  Tensor tgt = random_tensor({2, 4, 3}, rng, 1.0, false);
  Tensor loss = mse_loss(&tape, conv1d(&tape, x, gate), tgt);
  tape.backward(loss);
  CHECK(grad_abs_sum(gate.W) > 0.0);
}

TEST_CASE("dropout modes") {
  Rng rng(9);
  Tensor x = random_tensor({4, 5}, rng, 1.0, false);

  Rng r1(42);
  Tensor eval_out = dropout(nullptr, x, 0.5, false, r1);
  CHECK(eval_out.data() == x.data());

  Rng r2(42), r3(42);
  Tensor d1 = dropout(nullptr, x, 0.5, true, r2);
  Tensor d2 = dropout(nullptr, x, 0.5, true, r3);
  CHECK(d1.data() == d2.data());

  bool saw_zero = false, saw_scaled = false;
  for (std::size_t i = 0; i < d1.data().size(); ++i) {
    if (d1.data()[i] == 0.0) {
      saw_zero = true;
    } else {
      CHECK(d1.data()[i] == doctest::Approx(2.0 * x.data()[i]));
      saw_scaled = true;
    }
  }
  CHECK(saw_zero);
  CHECK(saw_scaled);
}

TEST_CASE("backward error contracts") {
  Rng rng(10);
  Tensor x = random_tensor({2, 3}, rng);
  Tape tape;
  Tensor y = add(&tape, x, x);
  CHECK_THROWS_AS(tape.backward(y), InvalidInput);

  Tensor detached = random_tensor({1}, rng, 1.0, false);
  Tape t2;
  CHECK_THROWS_AS(t2.backward(detached), StateError);
}

TEST_CASE("gradients accumulate until cleared") {
  Rng rng(11);
  Tensor x = random_tensor({4}, rng);
  Tape tape;
  Tensor loss = mean_all(&tape, x);
  tape.backward(loss);
  const auto once = x.grad();
  tape.backward(loss);
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(x.grad()[i] == doctest::Approx(2.0 * once[i]));
  }
  x.zero_grad();
  for (double g : x.grad()) CHECK(g == 0.0);
}

TEST_CASE("adam first step and state behavior") {
  Rng rng(12);
  ParamStore store;
  Tensor p = store.add_const("p", {1}, 5.0);

  AdamConfig cfg;
  cfg.lr = 0.1;
  Adam opt(cfg);
  p.grad()[0] = 1.0;
  opt.step(store);
  CHECK(p.data()[0] == doctest::Approx(5.0 - 0.1).epsilon(1e-9));

  const double before = p.data()[0];
  p.zero_grad();
  opt.step(store);
  CHECK(p.data()[0] < before);
  CHECK(p.data()[0] > before - 0.1);

  ParamStore fresh;
  Tensor q = fresh.add_const("q", {1}, 5.0);
  Adam idle(cfg);
  q.grad()[0] = 0.0;
  idle.step(fresh);
  CHECK(q.data()[0] == 5.0);
}

TEST_CASE("adam is deterministic across identical runs") {
  auto run = [] {
    Rng rng(77);
    ParamStore store;
    Tensor w = store.add_xavier("w", {4, 4}, 4, 4, rng);
    Adam opt(AdamConfig{});
    Tensor x = oracle::random_tensor({2, 4}, rng, 1.0, false);
    for (int step = 0; step < 5; ++step) {
      store.zero_grads();
      Tape tape;
      Tensor y = matmul(&tape, x, w);
      Tensor loss = mean_all(&tape, mul(&tape, y, y));
      tape.backward(loss);
      opt.step(store);
    }
    return w.data();
  };
  CHECK(run() == run());
}
