#pragma once

#include <string>
#include <vector>

#include "pets/ops.hpp"

namespace pets {

/// Shared forward-pass context: tape for training, dropout settings,
/// and an optional sink for attention matrices.
struct FwdCtx {
  Tape* tape = nullptr;
  bool train = false;
  double dropout = 0.0;
  Rng* rng = nullptr;
  std::vector<AttnRecord>* attn_sink = nullptr;
};

/// Pattern-Promotion Aggregation weights.  Each pattern stream owns a
/// Linear -> Conv -> Linear -> GELU -> Dropout pipeline; the
/// concatenated token sequence is refined by residual attention and a
/// residual convolution, then re-split through one convolution per
/// pattern.
struct PpaParams {
  struct Stream {
    LinParams lin1;
    ConvParams conv;
    LinParams lin2;
  };
  std::vector<Stream> streams;
  AttnParams attn;
  ConvParams mix_conv;
  std::vector<ConvParams> resplit;
};

/// Mixed-Pattern Representation weights.  The focus pattern of the
/// layer passes through untouched; every other pattern is gated by its
/// own zero-initialized pointwise convolution, so at initialization
/// only the focus pattern contributes.
struct MprParams {
  std::vector<ConvParams> gates;  // K - 1 gates, pattern order, focus skipped
  AttnParams attn;
  ConvParams mix_conv;
};

/// Transformer-style backbone block weights.
struct BackboneParams {
  AttnParams attn;
  FfnParams ffn;
  LnParams ln1, ln2;
};

/// Multi-Pattern Mixing weights: one convolution per pattern for
/// hidden-state injection, then shared residual attention, a shared
/// convolution and grouped pooling.
struct MpmParams {
  std::vector<ConvParams> per;
  AttnParams attn;
  ConvParams mix_conv;
};

/// All weights of one encoder layer.
struct FpaLayerParams {
  PpaParams ppa;
  MprParams mpr;
  BackboneParams backbone;
  MpmParams mpm;
  int focus = 1;  // 1-based focus pattern of this layer
};

/// Focus schedule: layer n (1-based) promotes pattern
/// ((n - 1) mod K) + 1, cycling from the most energetic pattern down.
int focus_pattern(int layer, int K);

PpaParams make_ppa(ParamStore& params, const std::string& prefix, int K,
                   int P_d, Rng& rng);
MprParams make_mpr(ParamStore& params, const std::string& prefix, int K,
                   int P_d, Rng& rng);
BackboneParams make_backbone(ParamStore& params, const std::string& prefix,
                             int P_d, Rng& rng);
MpmParams make_mpm(ParamStore& params, const std::string& prefix, int K,
                   int P_d, Rng& rng);
FpaLayerParams make_fpa_layer(ParamStore& params, const std::string& prefix,
                              int layer, int K, int P_d, Rng& rng);

/// Promotes every pattern stream and lets them exchange information
/// over the concatenated K*P_L token axis.  E holds K tensors
/// [R, P_L, P_d]; the result has the same shapes.  site labels
/// recorded attention matrices.
std::vector<Tensor> ppa_forward(FwdCtx& ctx, const std::vector<Tensor>& E,
                                const PpaParams& p, const std::string& site);

/// Builds the layer's mixed representation P^n.  The focus pattern
/// enters ungated, the rest through their zero-initialized gates; the
/// mix is attended, convolved, pooled back to P_L tokens and added to
/// the incoming hidden state.
Tensor mpr_forward(FwdCtx& ctx, const std::vector<Tensor>& E,
                   const Tensor& H_prev, int focus, const MprParams& p,
                   const std::string& site);

/// Backbone update H^n from H^{n-1} and P^n.  With pre_norm (the
/// default), normalization is applied inside each residual branch:
///   H1  = H + Attn(LN1(H))
///   H^n = P + H1 + FFN(LN2(H1)).
/// Without it, normalization follows each residual sum.
Tensor backbone_forward(FwdCtx& ctx, const Tensor& H_prev, const Tensor& P,
                        const BackboneParams& p, bool pre_norm,
                        const std::string& site);

/// Feeds the updated hidden state back into every pattern stream and
/// mixes patterns once more:
///   E'_k  = E_k + Conv_k(E_k + H)
///   C     = Attn-and-Conv refined concat of E'
///   out_k = E'_k + Pool(C).
std::vector<Tensor> mpm_forward(FwdCtx& ctx, const std::vector<Tensor>& E,
                                const Tensor& H, const MpmParams& p,
                                const std::string& site);

}  // namespace pets
