#include "pets/embedding.hpp"

namespace pets {

std::vector<double> channel_flatten(const std::vector<double>& x, int B,
                                    int d, int L) {
  if (B < 1 || d < 1 || L < 1 ||
      x.size() != static_cast<std::size_t>(B) * d * L) {
    throw ShapeError("channel_flatten: " + std::to_string(x.size()) +
                     " samples for B=" + std::to_string(B) + " d=" +
                     std::to_string(d) + " L=" + std::to_string(L));
  }
  return x;
}

StreamEmbed make_stream_embed(ParamStore& params, const std::string& name,
                              int patch_len, int P_d, int P_L,
                              bool pos_table, Rng& rng) {
  StreamEmbed se;
  se.proj.W = params.add_xavier(name + ".W", {patch_len, P_d}, patch_len,
                                P_d, rng);
  se.proj.b = params.add_zeros(name + ".b", {P_d});
  if (pos_table) {
    se.pos = params.add_zeros(name + ".pos", {P_L, P_d});
  }
  return se;
}

Tensor patch_embed(Tape* tape, const std::vector<double>& rows, int R,
                   int L, int patch_len, const StreamEmbed& se) {
  if (patch_len < 1 || L % patch_len != 0) {
    throw InvalidConfig("patch_embed: patch length " +
                        std::to_string(patch_len) + " does not divide L=" +
                        std::to_string(L));
  }
  if (rows.size() != static_cast<std::size_t>(R) * L) {
    throw ShapeError("patch_embed: " + std::to_string(rows.size()) +
                     " samples for R=" + std::to_string(R) + " L=" +
                     std::to_string(L));
  }
  const int P_L = L / patch_len;
  Tensor patches =
      Tensor::from({R, P_L, patch_len},
                   std::vector<double>(rows.begin(), rows.end()));
  Tensor tokens = linear(tape, patches, se.proj);
  if (se.pos.defined()) tokens = add_rows(tape, tokens, se.pos);
  return tokens;
}

}  // namespace pets
