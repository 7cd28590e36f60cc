#pragma once

#include <string>
#include <vector>

#include "pets/tensor.hpp"

namespace pets {

/// Weights of a bias-free single-head self-attention block.
/// All four matrices are [D, D].
struct AttnParams {
  Tensor Wq, Wk, Wv, Wo;
};

/// Weights of a token-axis 1-d convolution.  W is [Dout, Din, k] and
/// b is [Dout].
struct ConvParams {
  Tensor W, b;
};

/// Weights of an affine map.  W is [Din, Dout] and b is [Dout].
struct LinParams {
  Tensor W, b;
};

/// Two-layer position-wise network: Linear(D -> 2D), GELU,
/// Linear(2D -> D), both layers with biases.
struct FfnParams {
  LinParams l1, l2;
};

/// Per-feature affine normalization weights, both [D].
struct LnParams {
  Tensor gamma, beta;
};

/// Attention weights captured during a forward pass for export.
struct AttnRecord {
  std::string site;
  std::vector<std::int64_t> shape;  // [R, T, T]
  std::vector<double> weights;
};

// Every operation takes an optional tape.  With a tape, and when any
// input requires gradients, the output requires gradients and one
// reverse-pass closure per elementary step is recorded.  With a null
// tape the forward value is computed and nothing else.

/// Elementwise sum of two same-shaped tensors.
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);

/// Elementwise product of two same-shaped tensors.
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);

/// Product with a compile-time constant.
Tensor scale(Tape* tape, const Tensor& a, double c);

/// Matrix product of a [N, K] and b [K, M].
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);

/// Affine map along the last axis.  x is [N, Din] or [R, T, Din]; W is
/// [Din, Dout]; b is [Dout] or undefined for no bias.
Tensor linear(Tape* tape, const Tensor& x, const Tensor& W, const Tensor& b);
Tensor linear(Tape* tape, const Tensor& x, const LinParams& p);

/// Token-axis 1-d convolution with zero padding and stride 1.
/// x is [R, T, Din], p.W is [Dout, Din, k]; output is [R, T, Dout]
/// for odd k with pad = (k - 1) / 2 (the default when pad < 0).
Tensor conv1d(Tape* tape, const Tensor& x, const ConvParams& p,
              int pad = -1);

/// Registers a zero-initialized pointwise (k = 1) convolution.  Its
/// output starts exactly at zero while the weights remain trainable,
/// so a branch behind it is silent at initialization and opens up as
/// training moves the weights.
ConvParams zero_init_conv1x1(ParamStore& params, const std::string& name,
                             std::int64_t channels);

/// Single-head scaled dot-product self-attention over the token axis,
/// bias-free.  x is [R, T, D].  When rec is non-null the softmax
/// attention matrix [R, T, T] is copied out.
Tensor self_attention(Tape* tape, const Tensor& x, const AttnParams& p,
                      AttnRecord* rec = nullptr);

/// Position-wise feed-forward block: l2(gelu(l1(x))).
Tensor feed_forward(Tape* tape, const Tensor& x, const FfnParams& p);

/// Layer normalization over the last axis with learnable gamma/beta.
Tensor layer_norm(Tape* tape, const Tensor& x, const LnParams& p,
                  double eps = 1e-5);

/// Exact GELU: 0.5 * x * (1 + erf(x / sqrt(2))).
Tensor gelu(Tape* tape, const Tensor& x);

/// Inverted dropout.  In training mode each element is zeroed with
/// probability rate and survivors are scaled by 1/(1-rate); the mask
/// is drawn from rng, so a fixed seed reproduces it.  In evaluation
/// mode, or when rate is 0, the input passes through unchanged.
Tensor dropout(Tape* tape, const Tensor& x, double rate, bool train,
               Rng& rng);

/// Grouped average pooling over the token axis.  x is [R, G*T, D],
/// seen as G stacked length-T segments; output token t is the mean of
/// token t of each segment: out[r,t,d] = mean_g x[r, g*T + t, d].
Tensor avg_pool_groups(Tape* tape, const Tensor& x, std::int64_t groups);

/// Collapses [R, T, D] to [R, T*D], row-major.
Tensor flatten(Tape* tape, const Tensor& x);

/// Concatenates [R, Ti, D] tensors along the token axis.
Tensor concat_tokens(Tape* tape, const std::vector<Tensor>& xs);

/// Splits [R, T, D] into pieces of the given token counts; the sizes
/// must sum to T.
std::vector<Tensor> split_tokens(Tape* tape, const Tensor& x,
                                 const std::vector<std::int64_t>& sizes);

/// Broadcast add of a per-token table: x is [R, T, D], table is
/// [T, D]; every batch row r receives the same table.
Tensor add_rows(Tape* tape, const Tensor& x, const Tensor& table);

/// Mean of all elements, as a scalar tensor.
Tensor mean_all(Tape* tape, const Tensor& x);

/// Mean over fixed-size groups of consecutive rows: x is [G*B, F],
/// output is [B, F] with out[b] = mean of rows b*G .. b*G+G-1.
Tensor mean_rowgroups(Tape* tape, const Tensor& x, std::int64_t group);

/// Mean squared error over all elements: mean((pred - target)^2).
/// target never receives gradients.
Tensor mse_loss(Tape* tape, const Tensor& pred, const Tensor& target);

/// MSE restricted to positions where mask is 1; the divisor is the
/// number of selected positions.  mask is 0/1, same shape as pred.
/// Throws InvalidInput when the mask selects nothing.
Tensor masked_mse_loss(Tape* tape, const Tensor& pred,
                       const Tensor& target, const Tensor& mask);

/// Mean negative log-likelihood of integer labels under softmax of the
/// logits.  logits is [B, C]; labels holds B class indices in [0, C).
Tensor cross_entropy_loss(Tape* tape, const Tensor& logits,
                          const std::vector<int>& labels);

/// Softmax along the last axis, computed with max subtraction.
Tensor softmax(Tape* tape, const Tensor& x);

/// Sum of |g| over a tensor's gradient buffer, 0 when unallocated.
double grad_abs_sum(const Tensor& t);

}  // namespace pets
