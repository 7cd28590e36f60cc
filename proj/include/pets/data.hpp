#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pets/common.hpp"

namespace pets {

/// A named multichannel series, [T, d] row-major.  Rows containing
/// non-finite values are dropped at ingestion and counted.
struct SeriesFrame {
  std::string name;
  std::vector<std::string> timestamps;  // empty when absent
  std::vector<std::string> channel_names;
  std::vector<double> data;  // [T, d]
  int T = 0;
  int d = 0;
  int rejected_rows = 0;

  double at(int t, int c) const {
    return data[static_cast<std::size_t>(t) * d + c];
  }
};

/// Reads a CSV with a header line; a leading timestamp column is
/// detected by name (date/time/timestamp) or by a non-numeric first
/// data cell.  Decimal parsing is locale-independent.  Throws
/// InvalidInput for an empty or header-only file and
/// ParseError("row r, column c", 1-based file coordinates) for a
/// non-numeric data cell.  Rows with NaN or infinite values are
/// dropped and counted in rejected_rows.
SeriesFrame load_csv(const std::string& path);

/// Chronological split plus windowing geometry.  Ratios give the
/// train and validation prefix lengths; the remainder is test.
/// horizon is 0 for tasks that reconstruct the input window.
struct SplitSpec {
  double train_ratio = 0.7;
  double val_ratio = 0.1;
  int L = 96;
  int horizon = 96;
  int stride = 1;
};

/// Windowed view of a frame: the series z-scored with train-split
/// statistics, plus the admissible window start offsets per split.
/// A window [start, start + L + horizon) must lie entirely inside its
/// split, so windows never cross split boundaries and the last window
/// of each split is retained.
struct WindowSet {
  int L = 0;
  int horizon = 0;
  int d = 0;
  int T = 0;
  std::vector<double> series;  // [T, d], normalized
  std::vector<double> mean;    // [d], train statistics
  std::vector<double> stdev;   // [d], floored at 1e-8
  int train_end = 0;  // split boundaries, exclusive
  int val_end = 0;
  std::vector<int> train_starts, val_starts, test_starts;

  /// Denormalizes one value of channel c.
  double denorm(double v, int c) const {
    return v * stdev[static_cast<std::size_t>(c)] +
           mean[static_cast<std::size_t>(c)];
  }
};

/// Builds the split windows.  Throws InvalidConfig when any split is
/// shorter than L + horizon (an empty test split is allowed only when
/// its ratio share is zero).
WindowSet make_windows(const SeriesFrame& frame, const SplitSpec& split);

/// Copies the input rows of one window as [d, L] channel rows, and
/// optionally the target rows as [d, horizon].
void gather_window(const WindowSet& ws, int start,
                   std::vector<double>& inputs,
                   std::vector<double>* targets = nullptr);

/// Synthetic-series recipe, parsed from JSON.  Every channel is
///   x_c(t) = sum_i amp_i sin(2 pi freq_i t + phase_i + c * shift)
///            + trend * t + N(0, sigma^2),
/// with optional spike injections.  Identical seeds reproduce the
/// series exactly.
struct SynthSpec {
  std::string name = "synth";
  int T = 1000;
  int d = 1;
  std::uint64_t seed = 0;
  struct Component {
    double freq = 0.0, amp = 0.0, phase = 0.0;
  };
  std::vector<Component> components;
  double channel_phase_shift = 0.0;
  double trend = 0.0;
  double noise_sigma = 0.0;
  int anomaly_count = 0;
  double anomaly_magnitude = 0.0;

  static SynthSpec from_json_text(const std::string& text);
};

/// Generated series plus the injected anomaly positions (time
/// indices, all channels spiked together).
struct SynthResult {
  SeriesFrame frame;
  std::vector<int> anomaly_positions;
};

SynthResult synth_generate(const SynthSpec& spec);

/// Labeled fixed-length samples for classification, X laid out
/// [n, d, L].
struct ClassDataset {
  int n = 0, d = 1, L = 0;
  std::vector<double> X;
  std::vector<int> y;
};

/// Two-class toy generator: both classes share the base components;
/// class 1 additionally carries a high-frequency burst, so the
/// classes differ only above the burst frequency.  Returns train and
/// test sets drawn from one seeded stream.
struct ClassSynthSpec {
  int L = 96;
  std::uint64_t seed = 0;
  int n_train_per_class = 100;
  int n_test_per_class = 50;
  std::vector<SynthSpec::Component> base;
  double noise_sigma = 0.05;
  double burst_freq = 0.4;
  double burst_amp = 1.0;
  int burst_len = 16;
};

void synth_classification(const ClassSynthSpec& spec, ClassDataset& train,
                          ClassDataset& test);

}  // namespace pets
