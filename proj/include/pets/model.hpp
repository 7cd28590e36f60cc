#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pets/embedding.hpp"
#include "pets/fpa.hpp"
#include "pets/mop.hpp"
#include "pets/sdaq.hpp"

namespace pets {

enum class Task { Forecast, Impute, Classify, Anomaly };

Task task_from_string(const std::string& s);
std::string task_to_string(Task t);

/// Hyper-parameters of the full model.
struct ModelConfig {
  Task task = Task::Forecast;
  int L = 96;        // input window length
  int horizon = 96;  // forecast length
  int d = 1;         // channels per sample
  int N = 4;         // encoder layers == predictors
  int patch_len = 8;
  int P_d = 32;
  // Post-norm keeps the hidden trunk at unit scale; the additive
  // backbone update otherwise doubles it every layer, which deep
  // stacks cannot train through at ordinary learning rates.
  bool pre_norm = false;
  double dropout = 0.1;
  /// Feed predictor n the hidden state of layer n-1 instead of n.
  bool mop_use_prev_hidden = false;
  int n_classes = 2;
  SdaqConfig sdaq;

  int K() const { return sdaq.K(); }
  int P_L() const { return L / patch_len; }
  /// Output width of the head: horizon, L, or n_classes by task.
  int head_width() const;
  void validate() const;
};

/// The full network: decomposition, per-stream patch embedding, N
/// encoder layers and the predictor mixture with a task head.
///
/// Input is always a set of independent univariate rows [R, L] (a
/// multivariate batch is channel-flattened first, R = B * d).  Rows
/// never mix except through the classification head's channel mean,
/// so per-channel outputs are independent functions of their own row.
class PetsModel {
 public:
  /// Builds and initializes all parameters from the seed.  Parameter
  /// registration order is fixed by construction and is the canonical
  /// checkpoint order.
  PetsModel(const ModelConfig& cfg, std::uint64_t seed);

  /// Forward pass over normalized rows [R, L] row-major.  Returns
  /// [R, horizon] (forecast), [R, L] (impute or anomaly
  /// reconstruction), or [B, n_classes] with B = R / d (classify).
  /// Predictions stay in the normalized space of the inputs.
  Tensor forward(const std::vector<double>& rows, int R, FwdCtx& ctx) const;

  ParamStore& params() { return store_; }
  const ParamStore& params() const { return store_; }
  const ModelConfig& config() const { return cfg_; }

  /// Closed-form parameter count for a config; the constructed
  /// registry must match it exactly.
  static std::int64_t expected_param_count(const ModelConfig& cfg);

 private:
  ModelConfig cfg_;
  ParamStore store_;
  EmbeddingParams emb_;
  std::vector<FpaLayerParams> layers_;
  std::vector<PredictorParams> preds_;
  LinParams head_;
};

}  // namespace pets
