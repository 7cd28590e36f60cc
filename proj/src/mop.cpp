#include "pets/mop.hpp"

namespace pets {

namespace {

Tensor attend(FwdCtx& ctx, const Tensor& x, const AttnParams& p,
              const std::string& site) {
  AttnRecord rec;
  Tensor out = self_attention(ctx.tape, x, p,
                              ctx.attn_sink ? &rec : nullptr);
  if (ctx.attn_sink) {
    rec.site = site;
    ctx.attn_sink->push_back(std::move(rec));
  }
  return out;
}

ConvParams make_conv3(ParamStore& params, const std::string& prefix, int D,
                      Rng& rng) {
  ConvParams p;
  p.W = params.add_xavier(prefix + ".W", {D, D, 3}, 3 * D, D, rng);
  p.b = params.add_zeros(prefix + ".b", {D});
  return p;
}

}  // namespace

PredictorParams make_predictor(ParamStore& params, const std::string& prefix,
                               int P_d, Rng& rng) {
  PredictorParams p;
  p.conv_in = make_conv3(params, prefix + ".conv_in", P_d, rng);
  {
    AttnParams a;
    a.Wq = params.add_xavier(prefix + ".attn.Wq", {P_d, P_d}, P_d, P_d, rng);
    a.Wk = params.add_xavier(prefix + ".attn.Wk", {P_d, P_d}, P_d, P_d, rng);
    a.Wv = params.add_xavier(prefix + ".attn.Wv", {P_d, P_d}, P_d, P_d, rng);
    a.Wo = params.add_xavier(prefix + ".attn.Wo", {P_d, P_d}, P_d, P_d, rng);
    p.attn = a;
  }
  {
    FfnParams f;
    f.l1.W = params.add_xavier(prefix + ".ffn.l1.W", {P_d, 2 * P_d}, P_d,
                               2 * P_d, rng);
    f.l1.b = params.add_zeros(prefix + ".ffn.l1.b", {2 * P_d});
    f.l2.W = params.add_xavier(prefix + ".ffn.l2.W", {2 * P_d, P_d},
                               2 * P_d, P_d, rng);
    f.l2.b = params.add_zeros(prefix + ".ffn.l2.b", {P_d});
    p.ffn = f;
  }
  p.conv_next = make_conv3(params, prefix + ".conv_next", P_d, rng);
  return p;
}

std::pair<Tensor, Tensor> predictor_forward(FwdCtx& ctx, const Tensor& S,
                                            const Tensor& H_n,
                                            const PredictorParams& p,
                                            const std::string& site) {
  check_same_shape(S.shape(), H_n.shape(), "predictor_forward");
  Tensor s1 = add(ctx.tape, S,
                  attend(ctx, conv1d(ctx.tape, S, p.conv_in), p.attn, site));
  Tensor s2 = add(ctx.tape, add(ctx.tape, s1, H_n),
                  feed_forward(ctx.tape, s1, p.ffn));
  Tensor nxt = conv1d(ctx.tape, s2, p.conv_next);
  return {s2, nxt};
}

Tensor mop_forward(FwdCtx& ctx, const std::vector<Tensor>& E_final,
                   const std::vector<Tensor>& hidden,
                   const std::vector<PredictorParams>& preds,
                   bool use_prev_hidden, const std::string& site) {
  if (E_final.empty()) throw InvalidInput("mop_forward: no patterns");
  const int N = static_cast<int>(preds.size());
  if (static_cast<int>(hidden.size()) != N + 1) {
    throw ShapeError("mop_forward: " + std::to_string(hidden.size()) +
                     " hidden states for " + std::to_string(N) +
                     " predictors; expected N + 1");
  }
  Tensor S = E_final[0];
  for (std::size_t k = 1; k < E_final.size(); ++k) {
    S = add(ctx.tape, S, E_final[k]);
  }
  S = scale(ctx.tape, S, 1.0 / static_cast<double>(E_final.size()));

  for (int n = 1; n <= N; ++n) {
    const std::size_t sel =
        use_prev_hidden ? static_cast<std::size_t>(n - 1)
                        : static_cast<std::size_t>(n);
    auto [updated, next] = predictor_forward(
        ctx, S, hidden[sel], preds[static_cast<std::size_t>(n - 1)],
        site + ".pred" + std::to_string(n));
    S = (n < N) ? next : updated;
  }
  return S;
}

}  // namespace pets
