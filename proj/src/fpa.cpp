#include "pets/fpa.hpp"

namespace pets {

namespace {

Tensor maybe_dropout(FwdCtx& ctx, const Tensor& x) {
  if (!ctx.train || ctx.dropout <= 0.0) return x;
  if (!ctx.rng) {
    throw StateError("dropout requested without a generator in the context");
  }
  return dropout(ctx.tape, x, ctx.dropout, true, *ctx.rng);
}

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

AttnParams make_attn(ParamStore& params, const std::string& prefix, int D,
                     Rng& rng) {
  AttnParams p;
  p.Wq = params.add_xavier(prefix + ".Wq", {D, D}, D, D, rng);
  p.Wk = params.add_xavier(prefix + ".Wk", {D, D}, D, D, rng);
  p.Wv = params.add_xavier(prefix + ".Wv", {D, D}, D, D, rng);
  p.Wo = params.add_xavier(prefix + ".Wo", {D, D}, D, D, rng);
  return p;
}

ConvParams make_conv3(ParamStore& params, const std::string& prefix, int D,
                      Rng& rng) {
  ConvParams p;
  p.W = params.add_xavier(prefix + ".W", {D, D, 3}, 3 * D, D, rng);
  p.b = params.add_zeros(prefix + ".b", {D});
  return p;
}

LinParams make_lin(ParamStore& params, const std::string& prefix, int din,
                   int dout, Rng& rng) {
  LinParams p;
  p.W = params.add_xavier(prefix + ".W", {din, dout}, din, dout, rng);
  p.b = params.add_zeros(prefix + ".b", {dout});
  return p;
}

FfnParams make_ffn(ParamStore& params, const std::string& prefix, int D,
                   Rng& rng) {
  FfnParams p;
  p.l1 = make_lin(params, prefix + ".l1", D, 2 * D, rng);
  p.l2 = make_lin(params, prefix + ".l2", 2 * D, D, rng);
  return p;
}

LnParams make_ln(ParamStore& params, const std::string& prefix, int D) {
  LnParams p;
  p.gamma = params.add_const(prefix + ".gamma", {D}, 1.0);
  p.beta = params.add_zeros(prefix + ".beta", {D});
  return p;
}

}  // namespace

int focus_pattern(int layer, int K) {
  if (layer < 1 || K < 1) {
    throw InvalidInput("focus_pattern: layer " + std::to_string(layer) +
                       ", K " + std::to_string(K));
  }
  return ((layer - 1) % K) + 1;
}

PpaParams make_ppa(ParamStore& params, const std::string& prefix, int K,
                   int P_d, Rng& rng) {
  PpaParams p;
  for (int k = 1; k <= K; ++k) {
    const std::string s = prefix + ".stream" + std::to_string(k);
    PpaParams::Stream st;
    st.lin1 = make_lin(params, s + ".lin1", P_d, P_d, rng);
    st.conv = make_conv3(params, s + ".conv", P_d, rng);
    st.lin2 = make_lin(params, s + ".lin2", P_d, P_d, rng);
    p.streams.push_back(st);
  }
  p.attn = make_attn(params, prefix + ".attn", P_d, rng);
  p.mix_conv = make_conv3(params, prefix + ".mix_conv", P_d, rng);
  for (int k = 1; k <= K; ++k) {
    p.resplit.push_back(
        make_conv3(params, prefix + ".resplit" + std::to_string(k), P_d,
                   rng));
  }
  return p;
}

MprParams make_mpr(ParamStore& params, const std::string& prefix, int K,
                   int P_d, Rng& rng) {
  MprParams p;
  for (int g = 1; g <= K - 1; ++g) {
    p.gates.push_back(zero_init_conv1x1(
        params, prefix + ".gate" + std::to_string(g), P_d));
  }
  p.attn = make_attn(params, prefix + ".attn", P_d, rng);
  p.mix_conv = make_conv3(params, prefix + ".mix_conv", P_d, rng);
  return p;
}

BackboneParams make_backbone(ParamStore& params, const std::string& prefix,
                             int P_d, Rng& rng) {
  BackboneParams p;
  p.attn = make_attn(params, prefix + ".attn", P_d, rng);
  p.ffn = make_ffn(params, prefix + ".ffn", P_d, rng);
  p.ln1 = make_ln(params, prefix + ".ln1", P_d);
  p.ln2 = make_ln(params, prefix + ".ln2", P_d);
  return p;
}

MpmParams make_mpm(ParamStore& params, const std::string& prefix, int K,
                   int P_d, Rng& rng) {
  MpmParams p;
  for (int k = 1; k <= K; ++k) {
    p.per.push_back(
        make_conv3(params, prefix + ".inject" + std::to_string(k), P_d,
                   rng));
  }
  p.attn = make_attn(params, prefix + ".attn", P_d, rng);
  p.mix_conv = make_conv3(params, prefix + ".mix_conv", P_d, rng);
  return p;
}

FpaLayerParams make_fpa_layer(ParamStore& params, const std::string& prefix,
                              int layer, int K, int P_d, Rng& rng) {
  FpaLayerParams p;
  p.ppa = make_ppa(params, prefix + ".ppa", K, P_d, rng);
  p.mpr = make_mpr(params, prefix + ".mpr", K, P_d, rng);
  p.backbone = make_backbone(params, prefix + ".backbone", P_d, rng);
  p.mpm = make_mpm(params, prefix + ".mpm", K, P_d, rng);
  p.focus = focus_pattern(layer, K);
  return p;
}

std::vector<Tensor> ppa_forward(FwdCtx& ctx, const std::vector<Tensor>& E,
                                const PpaParams& p,
                                const std::string& site) {
  const int K = static_cast<int>(E.size());
  if (K == 0 || p.streams.size() != E.size()) {
    throw ShapeError("ppa_forward: " + std::to_string(E.size()) +
                     " patterns for " + std::to_string(p.streams.size()) +
                     " streams");
  }
  std::vector<Tensor> promoted;
  for (int k = 0; k < K; ++k) {
    Tensor h = linear(ctx.tape, E[static_cast<std::size_t>(k)],
                      p.streams[static_cast<std::size_t>(k)].lin1);
    h = conv1d(ctx.tape, h, p.streams[static_cast<std::size_t>(k)].conv);
    h = linear(ctx.tape, h, p.streams[static_cast<std::size_t>(k)].lin2);
    h = gelu(ctx.tape, h);
    h = maybe_dropout(ctx, h);
    promoted.push_back(h);
  }
  Tensor C = concat_tokens(ctx.tape, promoted);
  C = add(ctx.tape, C, attend(ctx, C, p.attn, site));
  C = add(ctx.tape, C, conv1d(ctx.tape, C, p.mix_conv));
  const std::int64_t P_L = E[0].dim(1);
  auto pieces = split_tokens(ctx.tape, C,
                             std::vector<std::int64_t>(E.size(), P_L));
  std::vector<Tensor> out;
  for (int k = 0; k < K; ++k) {
    out.push_back(conv1d(ctx.tape, pieces[static_cast<std::size_t>(k)],
                         p.resplit[static_cast<std::size_t>(k)]));
  }
  return out;
}

Tensor mpr_forward(FwdCtx& ctx, const std::vector<Tensor>& E,
                   const Tensor& H_prev, int focus, const MprParams& p,
                   const std::string& site) {
  const int K = static_cast<int>(E.size());
  if (focus < 1 || focus > K) {
    throw InvalidInput("mpr_forward: focus " + std::to_string(focus) +
                       " outside [1, " + std::to_string(K) + "]");
  }
  if (p.gates.size() + 1 != E.size()) {
    throw ShapeError("mpr_forward: " + std::to_string(p.gates.size()) +
                     " gates for " + std::to_string(E.size()) + " patterns");
  }
  std::vector<Tensor> gated;
  int g = 0;
  for (int k = 1; k <= K; ++k) {
    if (k == focus) {
      gated.push_back(E[static_cast<std::size_t>(k - 1)]);
    } else {
      gated.push_back(conv1d(ctx.tape, E[static_cast<std::size_t>(k - 1)],
                             p.gates[static_cast<std::size_t>(g++)]));
    }
  }
  Tensor C = concat_tokens(ctx.tape, gated);
  C = add(ctx.tape, C, attend(ctx, C, p.attn, site));
  C = add(ctx.tape, C, conv1d(ctx.tape, C, p.mix_conv));
  Tensor pooled = avg_pool_groups(ctx.tape, C, K);
  return add(ctx.tape, H_prev, pooled);
}

Tensor backbone_forward(FwdCtx& ctx, const Tensor& H_prev, const Tensor& P,
                        const BackboneParams& p, bool pre_norm,
                        const std::string& site) {
  if (pre_norm) {
    Tensor h1 = add(ctx.tape, H_prev,
                    maybe_dropout(ctx, attend(ctx, layer_norm(ctx.tape,
                                                              H_prev, p.ln1),
                                              p.attn, site)));
    Tensor ff = maybe_dropout(
        ctx, feed_forward(ctx.tape, layer_norm(ctx.tape, h1, p.ln2), p.ffn));
    return add(ctx.tape, add(ctx.tape, P, h1), ff);
  }
  Tensor h1 = layer_norm(
      ctx.tape,
      add(ctx.tape, H_prev, maybe_dropout(ctx, attend(ctx, H_prev, p.attn,
                                                      site))),
      p.ln1);
  Tensor ff = maybe_dropout(ctx, feed_forward(ctx.tape, h1, p.ffn));
  return layer_norm(ctx.tape, add(ctx.tape, add(ctx.tape, P, h1), ff),
                    p.ln2);
}

std::vector<Tensor> mpm_forward(FwdCtx& ctx, const std::vector<Tensor>& E,
                                const Tensor& H, const MpmParams& p,
                                const std::string& site) {
  const int K = static_cast<int>(E.size());
  if (p.per.size() != E.size()) {
    throw ShapeError("mpm_forward: " + std::to_string(p.per.size()) +
                     " injectors for " + std::to_string(E.size()) +
                     " patterns");
  }
  std::vector<Tensor> refined;
  for (int k = 0; k < K; ++k) {
    Tensor mixed = add(ctx.tape, E[static_cast<std::size_t>(k)], H);
    refined.push_back(
        add(ctx.tape, E[static_cast<std::size_t>(k)],
            conv1d(ctx.tape, mixed, p.per[static_cast<std::size_t>(k)])));
  }
  Tensor C = concat_tokens(ctx.tape, refined);
  Tensor C2 = add(ctx.tape, C, attend(ctx, C, p.attn, site));
  Tensor pooled = avg_pool_groups(
      ctx.tape, add(ctx.tape, C2, conv1d(ctx.tape, C2, p.mix_conv)), K);
  std::vector<Tensor> out;
  for (int k = 0; k < K; ++k) {
    out.push_back(add(ctx.tape, refined[static_cast<std::size_t>(k)],
                      pooled));
  }
  return out;
}

}  // namespace pets
