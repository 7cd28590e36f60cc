// Command-line entry points: decompose, train, eval, export-attention.
//
// Commands are orchestrated through a JSON RunConfig; every output is
// plain text (CSV, JSON, JSONL) with no timestamps, so a rerun with
// the same config and seed is byte-identical.
#pragma once

#include <string>

#include "pets/data.hpp"
#include "pets/model.hpp"
#include "pets/train.hpp"

namespace pets {

/// Full run configuration, normally parsed from a JSON file.  Exactly
/// one data source is set: a CSV path, a synthetic-series spec, or a
/// labelled synthetic classification spec.
struct RunConfig {
  std::string csv_path;
  bool has_synth = false;
  SynthSpec synth;
  bool has_class_synth = false;
  ClassSynthSpec class_synth;

  SplitSpec split;    // L and horizon are filled from the model config
  ModelConfig model;  // model.d is filled from the loaded data
  TrainOptions train;

  bool normalized_metrics = false;
  int season = 1;
  double anomaly_quantile = 0.99;

  std::string out_dir = "out";
  std::string checkpoint_path;  // defaults to <out_dir>/checkpoint.json
  std::string resume_path;

  /// Parses the JSON document; unknown keys and malformed values
  /// throw InvalidConfig or ParseError.
  static RunConfig from_json_text(const std::string& text);
  static RunConfig from_file(const std::string& path);

  /// The checkpoint path with its default applied.
  std::string resolved_checkpoint() const;
  void validate() const;
};

/// Loads the configured data source as a frame (series tasks only).
SeriesFrame load_series(const RunConfig& cfg, std::vector<int>* anomalies);

/// Decomposes the configured series and writes K pattern CSVs plus an
/// energy report JSON into the output directory.
void cmd_decompose(const RunConfig& cfg);

/// Trains per the config, writing the JSONL epoch log and the
/// best-validation checkpoint.  Returns the training summary.
TrainResult cmd_train(const RunConfig& cfg);

/// Evaluates a checkpoint, writes metrics.json, returns the report.
MetricReport cmd_eval(const RunConfig& cfg, const std::string& checkpoint);

/// Writes per-layer pattern-attention matrices for one test sample as
/// CSVs plus block metadata naming each pattern's token range.
void cmd_export_attention(const RunConfig& cfg, const std::string& checkpoint,
                          int sample_index);

/// Argument parsing and dispatch.  Returns the process exit code:
/// 0 success, 1 usage or configuration error, 2 data error,
/// 3 numerical failure.
int run_cli(int argc, const char* const* argv);

}  // namespace pets
