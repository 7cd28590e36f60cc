#include "pets/model.hpp"

namespace pets {

Task task_from_string(const std::string& s) {
  if (s == "forecast") return Task::Forecast;
  if (s == "impute") return Task::Impute;
  if (s == "classify") return Task::Classify;
  if (s == "anomaly") return Task::Anomaly;
  throw InvalidConfig("unknown task '" + s + "'");
}

std::string task_to_string(Task t) {
  switch (t) {
    case Task::Forecast:
      return "forecast";
    case Task::Impute:
      return "impute";
    case Task::Classify:
      return "classify";
    case Task::Anomaly:
      return "anomaly";
  }
  throw InvalidConfig("unknown task value");
}

int ModelConfig::head_width() const {
  switch (task) {
    case Task::Forecast:
      return horizon;
    case Task::Impute:
    case Task::Anomaly:
      return L;
    case Task::Classify:
      return n_classes;
  }
  throw InvalidConfig("unknown task value");
}

void ModelConfig::validate() const {
  sdaq.validate();
  if (L < 2) throw InvalidConfig("ModelConfig: L must be >= 2");
  if (patch_len < 1 || L % patch_len != 0) {
    throw InvalidConfig("ModelConfig: patch length " +
                        std::to_string(patch_len) + " does not divide L=" +
                        std::to_string(L));
  }
  if (N < 1) throw InvalidConfig("ModelConfig: N must be >= 1");
  if (P_d < 1) throw InvalidConfig("ModelConfig: P_d must be >= 1");
  if (d < 1) throw InvalidConfig("ModelConfig: d must be >= 1");
  if (task == Task::Forecast && horizon < 1) {
    throw InvalidConfig("ModelConfig: horizon must be >= 1");
  }
  if (task == Task::Classify && n_classes < 2) {
    throw InvalidConfig("ModelConfig: need at least 2 classes");
  }
  if (dropout < 0.0 || dropout >= 1.0) {
    throw InvalidConfig("ModelConfig: dropout outside [0, 1)");
  }
}

PetsModel::PetsModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg) {
  cfg_.validate();
  if (cfg_.sdaq.backend == Backend::CWT &&
      cfg_.sdaq.icwt_calibration <= 0.0) {
    cfg_.sdaq.icwt_calibration = calibrate_icwt(cfg_.sdaq);
  }
  Rng rng(seed);
  const int K = cfg_.K();
  const int P_L = cfg_.P_L();

  emb_.obs = make_stream_embed(store_, "embed.obs", cfg_.patch_len,
                               cfg_.P_d, P_L, true, rng);
  for (int k = 1; k <= K; ++k) {
    emb_.patterns.push_back(
        make_stream_embed(store_, "embed.pattern" + std::to_string(k),
                          cfg_.patch_len, cfg_.P_d, P_L, true, rng));
  }
  for (int n = 1; n <= cfg_.N; ++n) {
    layers_.push_back(make_fpa_layer(
        store_, "layer" + std::to_string(n), n, K, cfg_.P_d, rng));
  }
  for (int n = 1; n <= cfg_.N; ++n) {
    preds_.push_back(
        make_predictor(store_, "mop.pred" + std::to_string(n), cfg_.P_d,
                       rng));
  }
  const int flat = P_L * cfg_.P_d;
  // The residual stack leaves the flattened features well above unit
  // scale, so a zero head keeps the initial output at the target mean
  // instead of an amplified echo of that scale.
  head_.W = store_.add_zeros("head.W", {flat, cfg_.head_width()});
  head_.b = store_.add_zeros("head.b", {cfg_.head_width()});

  const auto expected = expected_param_count(cfg_);
  if (store_.count() != expected) {
    throw StateError("PetsModel: registered " +
                     std::to_string(store_.count()) +
                     " parameters, expected " + std::to_string(expected));
  }
}

Tensor PetsModel::forward(const std::vector<double>& rows, int R,
                          FwdCtx& ctx) const {
  const int L = cfg_.L;
  if (R < 1 || rows.size() != static_cast<std::size_t>(R) * L) {
    throw ShapeError("PetsModel::forward: " + std::to_string(rows.size()) +
                     " samples for R=" + std::to_string(R) + " L=" +
                     std::to_string(L));
  }
  if (cfg_.task == Task::Classify && R % cfg_.d != 0) {
    throw ShapeError("PetsModel::forward: R=" + std::to_string(R) +
                     " rows not a multiple of d=" + std::to_string(cfg_.d));
  }
  const int K = cfg_.K();

  // Step 1: decompose each row independently into K patterns.
  std::vector<std::vector<double>> pattern_rows(
      static_cast<std::size_t>(K),
      std::vector<double>(static_cast<std::size_t>(R) * L));
  for (int r = 0; r < R; ++r) {
    std::vector<double> row(rows.begin() + static_cast<std::size_t>(r) * L,
                            rows.begin() +
                                static_cast<std::size_t>(r + 1) * L);
    const auto dec = sdaq_decompose(row, 1, L, cfg_.sdaq);
    for (int k = 0; k < K; ++k)
      for (int t = 0; t < L; ++t)
        pattern_rows[static_cast<std::size_t>(k)]
                    [static_cast<std::size_t>(r) * L + t] =
            dec.pattern_at(k, 0, t);
  }

  // Step 2: embed the observation and every pattern independently.
  Tensor H = patch_embed(ctx.tape, rows, R, L, cfg_.patch_len, emb_.obs);
  std::vector<Tensor> E;
  for (int k = 0; k < K; ++k) {
    E.push_back(patch_embed(ctx.tape,
                            pattern_rows[static_cast<std::size_t>(k)], R, L,
                            cfg_.patch_len,
                            emb_.patterns[static_cast<std::size_t>(k)]));
  }

  // Step 3: encoder layers.
  std::vector<Tensor> hidden{H};
  for (int n = 1; n <= cfg_.N; ++n) {
    const auto& lay = layers_[static_cast<std::size_t>(n - 1)];
    const std::string site = "layer" + std::to_string(n);
    E = ppa_forward(ctx, E, lay.ppa, site + ".ppa");
    Tensor P = mpr_forward(ctx, E, hidden.back(), lay.focus, lay.mpr,
                           site + ".mpr");
    Tensor Hn = backbone_forward(ctx, hidden.back(), P, lay.backbone,
                                 cfg_.pre_norm, site + ".backbone");
    E = mpm_forward(ctx, E, Hn, lay.mpm, site + ".mpm");
    hidden.push_back(Hn);
  }

  // Step 4: predictor mixture.
  Tensor S = mop_forward(ctx, E, hidden, preds_, cfg_.mop_use_prev_hidden,
                         "mop");

  // Step 5: task head.
  Tensor flat = flatten(ctx.tape, S);
  if (cfg_.task == Task::Classify) {
    Tensor pooled = mean_rowgroups(ctx.tape, flat, cfg_.d);
    return linear(ctx.tape, pooled, head_.W, head_.b);
  }
  return linear(ctx.tape, flat, head_.W, head_.b);
}

std::int64_t PetsModel::expected_param_count(const ModelConfig& cfg) {
  const std::int64_t D = cfg.P_d;
  const std::int64_t K = cfg.K();
  const std::int64_t P_L = cfg.P_L();
  const std::int64_t attn = 4 * D * D;
  const std::int64_t conv3 = 3 * D * D + D;
  const std::int64_t conv1 = D * D + D;
  const std::int64_t lin = D * D + D;
  const std::int64_t ffn = 4 * D * D + 3 * D;
  const std::int64_t ln2 = 4 * D;

  const std::int64_t stream =
      cfg.patch_len * D + D + P_L * D;  // projection + bias + positions
  const std::int64_t embed = (K + 1) * stream;

  const std::int64_t ppa = K * (2 * lin + conv3) + attn + conv3 + K * conv3;
  const std::int64_t mpr = (K - 1) * conv1 + attn + conv3;
  const std::int64_t backbone = attn + ffn + ln2;
  const std::int64_t mpm = K * conv3 + attn + conv3;
  const std::int64_t layer = ppa + mpr + backbone + mpm;

  const std::int64_t predictor = 2 * conv3 + attn + ffn;

  const std::int64_t head =
      P_L * D * cfg.head_width() + cfg.head_width();

  return embed + cfg.N * layer + cfg.N * predictor + head;
}

}  // namespace pets
