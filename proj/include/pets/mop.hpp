#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pets/fpa.hpp"

namespace pets {

/// Weights of one predictor in the mixture: an input convolution
/// whose output is attended, a feed-forward block and a transition
/// convolution toward the next predictor.
struct PredictorParams {
  ConvParams conv_in;
  AttnParams attn;
  FfnParams ffn;
  ConvParams conv_next;
};

PredictorParams make_predictor(ParamStore& params, const std::string& prefix,
                               int P_d, Rng& rng);

/// One predictor update.  S and H_n are [R, P_L, P_d].  Computes
///   S  <- S + Attn(Conv_in(S))
///   S  <- S + H_n + FFN(S)
/// and returns that state together with conv_next applied to it (the
/// input handed to the following predictor).  With H_n = 0 and the
/// convolutions and FFN at zero, the updated state equals S: the
/// attention is bias-free, so a zeroed branch contributes nothing.
std::pair<Tensor, Tensor> predictor_forward(FwdCtx& ctx, const Tensor& S,
                                            const Tensor& H_n,
                                            const PredictorParams& p,
                                            const std::string& site);

/// Runs the energy-ordered predictor chain.
///
/// The summary state starts as the mean of the K final patterns, then
/// predictors 1..N apply in turn; predictor n receives hidden[n], or
/// hidden[n-1] when use_prev_hidden is set (hidden[0] is the embedded
/// observation state, hidden[n] the n-th backbone output).  Between
/// predictors the state passes through that predictor's conv_next;
/// the last predictor's transition output is dropped.  Returns the
/// final summary state [R, P_L, P_d].
Tensor mop_forward(FwdCtx& ctx, const std::vector<Tensor>& E_final,
                   const std::vector<Tensor>& hidden,
                   const std::vector<PredictorParams>& preds,
                   bool use_prev_hidden, const std::string& site);

}  // namespace pets
