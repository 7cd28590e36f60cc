#pragma once

#include <string>
#include <vector>

#include "pets/ops.hpp"

namespace pets {

/// Reinterprets a [B, d, L] row-major batch as [B*d, L] independent
/// univariate rows.  Row b*d + c is channel c of batch element b.  The
/// layout is already contiguous, so this is a checked copy.
std::vector<double> channel_flatten(const std::vector<double>& x, int B,
                                    int d, int L);

/// Weights of one embedding stream: a patch projection plus an
/// optional learnable position table (zero-initialized, [P_L, P_d]).
struct StreamEmbed {
  LinParams proj;
  Tensor pos;
};

/// Registers one embedding stream.  proj.W is [patch_len, P_d],
/// Xavier-initialized; the position table starts at zero so tokens
/// initially carry patch content only.
StreamEmbed make_stream_embed(ParamStore& params, const std::string& name,
                              int patch_len, int P_d, int P_L,
                              bool pos_table, Rng& rng);

/// Splits each length-L row into L / patch_len non-overlapping patches
/// and projects each to P_d features:
///   token[r, t, :] = W^T patch(r, t) + b + pos[t].
/// rows is [R, L] row-major real data (never receives gradients).
/// Token t depends only on samples [t*patch_len, (t+1)*patch_len).
/// Throws InvalidConfig unless patch_len divides L.
Tensor patch_embed(Tape* tape, const std::vector<double>& rows, int R,
                   int L, int patch_len, const StreamEmbed& se);

/// Embedding streams of the full model: one for the observation rows
/// and one per fluctuation pattern, all with independent weights.
struct EmbeddingParams {
  StreamEmbed obs;
  std::vector<StreamEmbed> patterns;
};

}  // namespace pets
