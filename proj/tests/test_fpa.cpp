#include <doctest.h>

#include <cmath>
#include <vector>

#include "pets/fpa.hpp"
#include "pets/model.hpp"
#include "oracles.hpp"

using namespace pets;

namespace {

std::vector<Tensor> random_patterns(int K, int R, int P_L, int P_d,
                                    Rng& rng, bool req = false) {
  std::vector<Tensor> E;
  for (int k = 0; k < K; ++k) {
    E.push_back(oracle::random_tensor({R, P_L, P_d}, rng, 1.0, req));
  }
  return E;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    m = std::max(m, std::fabs(a.data()[i] - b.data()[i]));
  }
  return m;
}

}  // namespace

TEST_CASE("focus schedule cycles through the patterns") {
  const int K = 3;
  CHECK(focus_pattern(1, K) == 1);
  CHECK(focus_pattern(2, K) == 2);
  CHECK(focus_pattern(3, K) == 3);
  CHECK(focus_pattern(4, K) == 1);
  CHECK(focus_pattern(7, K) == 1);
  CHECK(focus_pattern(2, 1) == 1);
}

TEST_CASE("block outputs keep the token geometry") {
  Rng rng(1);
  const int K = 3, R = 2, P_L = 4, P_d = 6;
  ParamStore store;
  FpaLayerParams lay = make_fpa_layer(store, "layer1", 1, K, P_d, rng);

  auto E = random_patterns(K, R, P_L, P_d, rng);
  Tensor H = oracle::random_tensor({R, P_L, P_d}, rng, 1.0, false);
  FwdCtx ctx;

  auto promoted = ppa_forward(ctx, E, lay.ppa, "layer1.ppa");
  REQUIRE(promoted.size() == static_cast<std::size_t>(K));
  for (const auto& p : promoted) {
    CHECK(p.shape() == std::vector<std::int64_t>{R, P_L, P_d});
  }

  Tensor P = mpr_forward(ctx, promoted, H, lay.focus, lay.mpr, "layer1.mpr");
  CHECK(P.shape() == std::vector<std::int64_t>{R, P_L, P_d});

  Tensor H1 = backbone_forward(ctx, H, P, lay.backbone, true,
                               "layer1.backbone");
  CHECK(H1.shape() == std::vector<std::int64_t>{R, P_L, P_d});

  auto mixed = mpm_forward(ctx, promoted, H1, lay.mpm, "layer1.mpm");
  REQUIRE(mixed.size() == static_cast<std::size_t>(K));
  for (const auto& m : mixed) {
    CHECK(m.shape() == std::vector<std::int64_t>{R, P_L, P_d});
  }
}

TEST_CASE("at initialization only the focus pattern reaches the mix") {
  Rng rng(2);
  const int K = 4, R = 2, P_L = 3, P_d = 5;
  ParamStore store;
  MprParams mpr = make_mpr(store, "mpr", K, P_d, rng);
  const int focus = 2;

  auto E = random_patterns(K, R, P_L, P_d, rng);
  Tensor H = oracle::random_tensor({R, P_L, P_d}, rng, 1.0, false);
  FwdCtx ctx;
  Tensor P_full = mpr_forward(ctx, E, H, focus, mpr, "mpr");

  auto E_zeroed = E;
  for (int k = 0; k < K; ++k) {
    if (k + 1 == focus) continue;
    E_zeroed[static_cast<std::size_t>(k)] =
        Tensor(std::vector<std::int64_t>{R, P_L, P_d});
  }
  Tensor P_focus = mpr_forward(ctx, E_zeroed, H, focus, mpr, "mpr");
  CHECK(max_abs_diff(P_full, P_focus) <= 1e-12);

  auto E_shift = E;
  E_shift[static_cast<std::size_t>(focus - 1)] = oracle::random_tensor(
      {R, P_L, P_d}, rng, 1.0, false);
  Tensor P_moved = mpr_forward(ctx, E_shift, H, focus, mpr, "mpr");
  CHECK(max_abs_diff(P_full, P_moved) > 1e-8);
}

TEST_CASE("opened gates let non-focus patterns through") {
  Rng rng(3);
  const int K = 2, R = 1, P_L = 3, P_d = 4;
  ParamStore store;
  MprParams mpr = make_mpr(store, "mpr", K, P_d, rng);
  for (auto& g : mpr.gates) {
    for (auto& w : g.W.data()) w = 0.3;
  }

  auto E = random_patterns(K, R, P_L, P_d, rng);
  Tensor H = Tensor(std::vector<std::int64_t>{R, P_L, P_d});
  FwdCtx ctx;
  Tensor P_full = mpr_forward(ctx, E, H, 1, mpr, "mpr");

  auto E_zeroed = E;
  E_zeroed[1] = Tensor(std::vector<std::int64_t>{R, P_L, P_d});
  Tensor P_focus = mpr_forward(ctx, E_zeroed, H, 1, mpr, "mpr");
  CHECK(max_abs_diff(P_full, P_focus) > 1e-8);
}

TEST_CASE("backbone propagates gradients to both of its inputs") {
  Rng rng(4);
  const int R = 1, P_L = 3, P_d = 4;
  ParamStore store;
  BackboneParams bb = make_backbone(store, "bb", P_d, rng);

  for (bool pre_norm : {true, false}) {
    Tensor H = oracle::random_tensor({R, P_L, P_d}, rng);
    Tensor P = oracle::random_tensor({R, P_L, P_d}, rng);
    Tape tape;
    FwdCtx ctx;
    ctx.tape = &tape;
    Tensor out = backbone_forward(ctx, H, P, bb, pre_norm, "bb");
    Tensor loss = mean_all(&tape, mul(&tape, out, out));
    tape.backward(loss);
    CHECK(grad_abs_sum(H) > 0.0);
    CHECK(grad_abs_sum(P) > 0.0);
  }
}

TEST_CASE("a full encoder layer is exact on each batch row separately") {
  Rng rng(5);
  const int K = 2, P_L = 3, P_d = 4;
  ParamStore store;
  FpaLayerParams lay = make_fpa_layer(store, "layer1", 1, K, P_d, rng);

  auto run = [&](const std::vector<Tensor>& E, const Tensor& H) {
    FwdCtx ctx;
    auto prom = ppa_forward(ctx, E, lay.ppa, "s");
    Tensor P = mpr_forward(ctx, prom, H, lay.focus, lay.mpr, "s");
    Tensor H1 = backbone_forward(ctx, H, P, lay.backbone, true, "s");
    return mpm_forward(ctx, prom, H1, lay.mpm, "s");
  };

  auto E = random_patterns(K, 3, P_L, P_d, rng);
  Tensor H = oracle::random_tensor({3, P_L, P_d}, rng, 1.0, false);
  auto full = run(E, H);

  for (int r = 0; r < 3; ++r) {
    std::vector<Tensor> Er;
    for (int k = 0; k < K; ++k) {
      std::vector<double> chunk(
          E[static_cast<std::size_t>(k)].data().begin() + r * P_L * P_d,
          E[static_cast<std::size_t>(k)].data().begin() +
              (r + 1) * P_L * P_d);
      Er.push_back(Tensor::from({1, P_L, P_d}, std::move(chunk)));
    }
    std::vector<double> hr(H.data().begin() + r * P_L * P_d,
                           H.data().begin() + (r + 1) * P_L * P_d);
    auto single = run(Er, Tensor::from({1, P_L, P_d}, std::move(hr)));

    for (int k = 0; k < K; ++k) {
      const auto& f = full[static_cast<std::size_t>(k)].data();
      const auto& s = single[static_cast<std::size_t>(k)].data();
      for (int i = 0; i < P_L * P_d; ++i) {
        CHECK(f[static_cast<std::size_t>(r * P_L * P_d + i)] ==
              s[static_cast<std::size_t>(i)]);
      }
    }
  }
}

TEST_CASE("attention sink collects one record per labeled site") {
  Rng rng(6);
  const int K = 2, R = 2, P_L = 3, P_d = 4;
  ParamStore store;
  FpaLayerParams lay = make_fpa_layer(store, "layer1", 1, K, P_d, rng);

  std::vector<AttnRecord> sink;
  FwdCtx ctx;
  ctx.attn_sink = &sink;
  auto E = random_patterns(K, R, P_L, P_d, rng);
  auto prom = ppa_forward(ctx, E, lay.ppa, "layer1.ppa");
  REQUIRE(sink.size() == 1);
  CHECK(sink[0].site == "layer1.ppa");
  CHECK(sink[0].shape ==
        std::vector<std::int64_t>{R, K * P_L, K * P_L});
  for (int r = 0; r < R; ++r) {
    const int T = K * P_L;
    for (int i = 0; i < T; ++i) {
      double s = 0.0;
      for (int j = 0; j < T; ++j) {
        s += sink[0].weights[static_cast<std::size_t>((r * T + i) * T + j)];
      }
      CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("layer blocks pass finite differences end to end") {
  Rng rng(7);
  const int K = 2, P_L = 2, P_d = 3;
  ParamStore store;
  FpaLayerParams lay = make_fpa_layer(store, "layer1", 1, K, P_d, rng);

  auto E = random_patterns(K, 1, P_L, P_d, rng, true);
  Tensor H = oracle::random_tensor({1, P_L, P_d}, rng);

  std::vector<Tensor> leaves{E[0], E[1], H,
                             lay.ppa.attn.Wq,
                             lay.mpr.gates[0].W,
                             lay.backbone.ffn.l1.W,
                             lay.backbone.ln1.gamma,
                             lay.mpm.mix_conv.W};
  const double err = oracle::gradcheck(leaves, [&](Tape* t) {
    FwdCtx ctx;
    ctx.tape = t;
    auto prom = ppa_forward(ctx, E, lay.ppa, "s");
    Tensor P = mpr_forward(ctx, prom, H, lay.focus, lay.mpr, "s");
    Tensor H1 = backbone_forward(ctx, H, P, lay.backbone, true, "s");
    auto mixed = mpm_forward(ctx, prom, H1, lay.mpm, "s");
    Tensor joined = concat_tokens(t, mixed);
    return mean_all(t, mul(t, joined, joined));
  });
  CHECK(err < 1e-4);
}

TEST_CASE("registered layer parameters follow the naming scheme") {
  Rng rng(8);
  ParamStore store;
  make_fpa_layer(store, "layer1", 1, 2, 4, rng);
  CHECK(store.find("layer1.ppa.stream1.lin1.W").defined());
  CHECK(store.find("layer1.ppa.attn.Wq").defined());
  CHECK(store.find("layer1.ppa.resplit2.b").defined());
  CHECK(store.find("layer1.mpr.gate1.W").defined());
  CHECK(store.find("layer1.backbone.ln2.beta").defined());
  CHECK(store.find("layer1.mpm.inject2.W").defined());
  CHECK_THROWS_AS(store.find("layer1.nope"), StateError);
}

TEST_CASE("model parameter registry matches the closed-form count") {
  ModelConfig cfg;
  cfg.L = 32;
  cfg.horizon = 16;
  cfg.patch_len = 8;
  cfg.P_d = 8;
  cfg.N = 2;
  cfg.sdaq.mus = {0.7, 0.9};
  PetsModel model(cfg, 0);
  CHECK(model.params().count() == PetsModel::expected_param_count(cfg));
  CHECK(model.params().find("head.W").defined());
  CHECK(model.params().find("embed.obs.pos").defined());
  CHECK(model.params().find("mop.pred2.conv_next.W").defined());
}
