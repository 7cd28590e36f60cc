// Training loop, Adam optimizer, checkpointing, and model-driven
// evaluation for every task.
//
// The trainer is deterministic for a fixed seed: batch order, dropout
// masks, and imputation masks are all drawn from a single mt19937_64
// stream owned by the loop.  Epoch logs are JSONL without timestamps so
// repeated runs produce byte-identical files.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pets/data.hpp"
#include "pets/model.hpp"
#include "pets/tasks.hpp"

namespace pets {

/// Adam hyperparameters.
struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam over a ParamStore.  First and second moment
/// buffers are laid out in parameter registration order, so the same
/// model rebuilt from its config can adopt a saved optimizer state.
class Adam {
 public:
  explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

  /// Applies one update from the gradients currently stored on the
  /// parameters.  Parameters without an allocated gradient are skipped.
  void step(ParamStore& params);

  std::int64_t steps_taken() const { return t_; }
  const AdamConfig& config() const { return cfg_; }

  /// Internal state access for checkpointing.
  const std::vector<std::vector<double>>& moment1() const { return m_; }
  const std::vector<std::vector<double>>& moment2() const { return v_; }
  void restore(std::int64_t t, std::vector<std::vector<double>> m,
               std::vector<std::vector<double>> v);

 private:
  void ensure_state(const ParamStore& params);

  AdamConfig cfg_;
  std::int64_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
};

/// Options shared by the task-specific training drivers.
struct TrainOptions {
  int epochs = 10;
  int batch_size = 32;
  AdamConfig adam;
  std::uint64_t seed = 0;
  /// Fraction of input positions hidden per sample when training the
  /// imputation task.
  double impute_missing_rate = 0.25;
  /// JSONL epoch log destination; empty disables file logging.
  std::string log_path;
  /// Best-validation checkpoint destination; empty disables saving.
  std::string checkpoint_path;
  /// Optional checkpoint to resume from before the first epoch.
  std::string resume_path;
  /// Echo per-epoch losses to stderr.
  bool verbose = false;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_val = 0.0;
  int best_epoch = 0;
};

/// Trains the model on windowed series data.  The loss follows the
/// model's task: forecasting regresses the horizon, imputation and
/// anomaly detection reconstruct the input window (imputation with
/// randomly hidden positions and a masked loss).  Throws NumericalError
/// when the loss turns non-finite, after dumping per-block gradient
/// magnitudes to stderr.
TrainResult train_model(PetsModel& model, const WindowSet& ws,
                        const TrainOptions& opts);

/// Trains a classification model on labelled samples.
TrainResult train_classifier(PetsModel& model, const ClassDataset& train_set,
                             const ClassDataset& val_set,
                             const TrainOptions& opts);

/// Runs the model on a batch of normalized input rows without autodiff.
/// `rows` is flattened [n_rows, input_len]; returns [n_rows, out_len].
std::vector<double> predict_rows(PetsModel& model,
                                 const std::vector<double>& rows,
                                 std::size_t n_rows);

/// Forecast metrics over the test windows.  With `normalized` false the
/// predictions and targets are mapped back to raw units using the
/// per-channel training statistics before any metric is computed.
/// `season` feeds MASE and the naive2 reference for OWA.
MetricReport eval_forecast(PetsModel& model, const WindowSet& ws,
                           bool normalized, std::size_t season);

/// Masked-reconstruction metrics over the test windows.  Missing masks
/// are drawn from `seed` at `missing_rate`, the same protocol used in
/// training, and the error is measured only on hidden positions.
MetricReport eval_impute(PetsModel& model, const WindowSet& ws,
                         bool normalized, double missing_rate,
                         std::uint64_t seed);

/// Classification metrics over a labelled dataset.
MetricReport eval_classify(PetsModel& model, const ClassDataset& ds);

/// Per-position reconstruction errors over one split of `ws`, averaged
/// across the channels of each position.  Windows tile the split from
/// its start with stride L; the final window is anchored to the end so
/// every position is covered, with overlaps averaged.
std::vector<double> reconstruction_errors(PetsModel& model,
                                          const WindowSet& ws,
                                          const std::vector<double>& series,
                                          std::size_t t0, std::size_t t1);

/// Anomaly-detection evaluation: the threshold is the `q` quantile of
/// validation reconstruction errors, flags are thresholded test errors,
/// and precision/recall/F1 compare the flags against `truth` (one 0/1
/// entry per test position).
MetricReport eval_anomaly(PetsModel& model, const WindowSet& ws,
                          const std::vector<double>& series, double q,
                          const std::vector<int>& truth);

/// Serializes model parameters, optimizer state, the trainer RNG, and
/// loop counters to a JSON file.  `opt` and `rng` may be null for a
/// weights-only checkpoint.
void save_checkpoint(const std::string& path, const PetsModel& model,
                     const Adam* opt, const Rng* rng, int epoch,
                     double best_val);

struct CheckpointState {
  int epoch = 0;
  double best_val = 0.0;
  bool has_optimizer = false;
  bool has_rng = false;
};

/// Loads a checkpoint into an already-constructed model.  Every stored
/// parameter must exist with a matching shape, otherwise ShapeError
/// names the offending parameter.  Optimizer and RNG states are
/// restored when present and the matching pointer is non-null.
CheckpointState load_checkpoint(const std::string& path, PetsModel& model,
                                Adam* opt, Rng* rng);

}  // namespace pets
