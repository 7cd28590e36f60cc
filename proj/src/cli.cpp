#include "pets/cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "pets/sdaq.hpp"
#include "pets/tasks.hpp"

namespace pets {

namespace {

using nlohmann::json;

/// Rejects keys outside the allowed set so config typos fail loudly.
void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& context) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) {
      if (it.key() == a) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw InvalidConfig("unknown key '" + it.key() + "' in " + context);
    }
  }
}

template <typename T>
T get_or(const json& j, const char* key, T def) {
  if (!j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InvalidConfig(std::string("bad value for '") + key + "'");
  }
}

SdaqConfig parse_sdaq(const json& j) {
  check_keys(j, {"lambda", "mus", "backend", "wavelet", "icwt_calibration"},
             "sdaq");
  SdaqConfig sd;
  sd.lambda = get_or(j, "lambda", sd.lambda);
  sd.mus = get_or(j, "mus", sd.mus);
  sd.icwt_calibration = get_or(j, "icwt_calibration", sd.icwt_calibration);
  const std::string backend = get_or<std::string>(j, "backend", "fft");
  if (backend == "cwt") {
    sd.backend = Backend::CWT;
  } else if (backend == "fft") {
    sd.backend = Backend::FFT;
  } else {
    throw InvalidConfig("backend must be 'cwt' or 'fft'");
  }
  const std::string wavelet = get_or<std::string>(j, "wavelet", "haar");
  if (wavelet == "haar") {
    sd.wavelet = Wavelet::Haar;
  } else if (wavelet == "morlet") {
    sd.wavelet = Wavelet::Morlet;
  } else {
    throw InvalidConfig("wavelet must be 'haar' or 'morlet'");
  }
  return sd;
}

ClassSynthSpec parse_class_synth(const json& j) {
  check_keys(j,
             {"L", "seed", "n_train_per_class", "n_test_per_class", "base",
              "noise_sigma", "burst_freq", "burst_amp", "burst_len"},
             "data.class_synth");
  ClassSynthSpec s;
  s.L = get_or(j, "L", s.L);
  s.seed = get_or(j, "seed", s.seed);
  s.n_train_per_class = get_or(j, "n_train_per_class", s.n_train_per_class);
  s.n_test_per_class = get_or(j, "n_test_per_class", s.n_test_per_class);
  s.noise_sigma = get_or(j, "noise_sigma", s.noise_sigma);
  s.burst_freq = get_or(j, "burst_freq", s.burst_freq);
  s.burst_amp = get_or(j, "burst_amp", s.burst_amp);
  s.burst_len = get_or(j, "burst_len", s.burst_len);
  if (j.contains("base")) {
    if (!j.at("base").is_array()) {
      throw InvalidConfig("class_synth.base must be an array");
    }
    for (const auto& c : j.at("base")) {
      check_keys(c, {"freq", "amp", "phase"}, "class_synth.base[]");
      SynthSpec::Component comp;
      comp.freq = get_or(c, "freq", 0.0);
      comp.amp = get_or(c, "amp", 0.0);
      comp.phase = get_or(c, "phase", 0.0);
      s.base.push_back(comp);
    }
  }
  return s;
}

void ensure_out_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) {
    throw InvalidInput("cannot create output directory " + dir + ": " +
                       ec.message());
  }
}

std::string fmt(double v) {
  std::ostringstream ss;
  ss << std::setprecision(17) << v;
  return ss.str();
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidInput("cannot open output file: " + path);
  out << text;
  if (!out) throw InvalidInput("failed writing " + path);
}

/// Window geometry for the configured task: reconstruction tasks have
/// no forecast horizon.
SplitSpec split_for(const RunConfig& cfg) {
  SplitSpec sp = cfg.split;
  sp.L = cfg.model.L;
  sp.horizon = cfg.model.task == Task::Forecast ? cfg.model.horizon : 0;
  return sp;
}

struct SeriesSetup {
  SeriesFrame frame;
  std::vector<int> anomalies;
  WindowSet ws;
  ModelConfig model;
};

SeriesSetup setup_series(const RunConfig& cfg) {
  SeriesSetup s;
  s.frame = load_series(cfg, &s.anomalies);
  s.ws = make_windows(s.frame, split_for(cfg));
  s.model = cfg.model;
  s.model.d = s.frame.d;
  s.model.validate();
  return s;
}

struct ClassSetup {
  ClassDataset train, test;
  ModelConfig model;
};

ClassSetup setup_class(const RunConfig& cfg) {
  if (!cfg.has_class_synth) {
    throw InvalidConfig(
        "classification needs a data.class_synth specification");
  }
  if (cfg.class_synth.L != cfg.model.L) {
    throw InvalidConfig("class_synth.L must equal model.L");
  }
  ClassSetup s;
  synth_classification(cfg.class_synth, s.train, s.test);
  s.model = cfg.model;
  s.model.d = s.train.d;
  s.model.validate();
  return s;
}

TrainOptions train_options(const RunConfig& cfg) {
  TrainOptions opts = cfg.train;
  opts.log_path = cfg.out_dir + "/train_log.jsonl";
  opts.checkpoint_path = cfg.resolved_checkpoint();
  opts.resume_path = cfg.resume_path;
  return opts;
}

constexpr std::uint64_t kEvalMaskSalt = 0x45564131u;

std::vector<int> test_truth(const WindowSet& ws,
                            const std::vector<int>& anomalies) {
  std::vector<int> truth(static_cast<std::size_t>(ws.T - ws.val_end), 0);
  for (int pos : anomalies) {
    if (pos >= ws.val_end && pos < ws.T) {
      truth[static_cast<std::size_t>(pos - ws.val_end)] = 1;
    }
  }
  return truth;
}

void print_report(const MetricReport& rep) {
  json j;
  for (const auto& [k, v] : rep) j[k] = v;
  std::cout << j.dump(2) << "\n";
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("run config is not valid JSON: ") +
                     e.what());
  }
  if (!j.is_object()) throw InvalidConfig("run config must be an object");
  check_keys(j,
             {"task", "data", "split", "sdaq", "model", "train", "eval",
              "out_dir", "checkpoint", "resume"},
             "run config");

  RunConfig cfg;
  cfg.model.task = task_from_string(get_or<std::string>(j, "task", "forecast"));

  if (!j.contains("data") || !j.at("data").is_object()) {
    throw InvalidConfig("run config needs a 'data' object");
  }
  const json& d = j.at("data");
  check_keys(d, {"csv", "synth", "class_synth"}, "data");
  int sources = 0;
  if (d.contains("csv")) {
    cfg.csv_path = d.at("csv").get<std::string>();
    ++sources;
  }
  if (d.contains("synth")) {
    cfg.synth = SynthSpec::from_json_text(d.at("synth").dump());
    cfg.has_synth = true;
    ++sources;
  }
  if (d.contains("class_synth")) {
    cfg.class_synth = parse_class_synth(d.at("class_synth"));
    cfg.has_class_synth = true;
    ++sources;
  }
  if (sources != 1) {
    throw InvalidConfig(
        "data must name exactly one of csv, synth, class_synth");
  }

  if (j.contains("split")) {
    const json& s = j.at("split");
    check_keys(s, {"train_ratio", "val_ratio", "stride"}, "split");
    cfg.split.train_ratio = get_or(s, "train_ratio", cfg.split.train_ratio);
    cfg.split.val_ratio = get_or(s, "val_ratio", cfg.split.val_ratio);
    cfg.split.stride = get_or(s, "stride", cfg.split.stride);
  }
  if (j.contains("sdaq")) cfg.model.sdaq = parse_sdaq(j.at("sdaq"));
  if (j.contains("model")) {
    const json& m = j.at("model");
    check_keys(m,
               {"L", "horizon", "N", "patch_len", "P_d", "pre_norm",
                "dropout", "mop_use_prev_hidden", "n_classes"},
               "model");
    cfg.model.L = get_or(m, "L", cfg.model.L);
    cfg.model.horizon = get_or(m, "horizon", cfg.model.horizon);
    cfg.model.N = get_or(m, "N", cfg.model.N);
    cfg.model.patch_len = get_or(m, "patch_len", cfg.model.patch_len);
    cfg.model.P_d = get_or(m, "P_d", cfg.model.P_d);
    cfg.model.pre_norm = get_or(m, "pre_norm", cfg.model.pre_norm);
    cfg.model.dropout = get_or(m, "dropout", cfg.model.dropout);
    cfg.model.mop_use_prev_hidden =
        get_or(m, "mop_use_prev_hidden", cfg.model.mop_use_prev_hidden);
    cfg.model.n_classes = get_or(m, "n_classes", cfg.model.n_classes);
  }
  if (j.contains("train")) {
    const json& t = j.at("train");
    check_keys(t,
               {"epochs", "batch_size", "lr", "seed", "impute_missing_rate",
                "verbose"},
               "train");
    cfg.train.epochs = get_or(t, "epochs", cfg.train.epochs);
    cfg.train.batch_size = get_or(t, "batch_size", cfg.train.batch_size);
    cfg.train.adam.lr = get_or(t, "lr", cfg.train.adam.lr);
    cfg.train.seed = get_or(t, "seed", cfg.train.seed);
    cfg.train.impute_missing_rate =
        get_or(t, "impute_missing_rate", cfg.train.impute_missing_rate);
    cfg.train.verbose = get_or(t, "verbose", cfg.train.verbose);
  }
  if (j.contains("eval")) {
    const json& e = j.at("eval");
    check_keys(e, {"normalized_metrics", "season", "anomaly_quantile"},
               "eval");
    cfg.normalized_metrics =
        get_or(e, "normalized_metrics", cfg.normalized_metrics);
    cfg.season = get_or(e, "season", cfg.season);
    cfg.anomaly_quantile =
        get_or(e, "anomaly_quantile", cfg.anomaly_quantile);
  }
  cfg.out_dir = get_or<std::string>(j, "out_dir", cfg.out_dir);
  cfg.checkpoint_path = get_or<std::string>(j, "checkpoint", "");
  cfg.resume_path = get_or<std::string>(j, "resume", "");
  cfg.validate();
  return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open config file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string RunConfig::resolved_checkpoint() const {
  return checkpoint_path.empty() ? out_dir + "/checkpoint.json"
                                 : checkpoint_path;
}

void RunConfig::validate() const {
  if (train.epochs < 0) throw InvalidConfig("epochs must be non-negative");
  if (train.batch_size < 1) throw InvalidConfig("batch_size must be >= 1");
  if (train.adam.lr <= 0.0) throw InvalidConfig("lr must be positive");
  if (train.impute_missing_rate <= 0.0 || train.impute_missing_rate >= 1.0) {
    throw InvalidConfig("impute_missing_rate must lie in (0, 1)");
  }
  if (season < 1) throw InvalidConfig("season must be >= 1");
  if (anomaly_quantile <= 0.0 || anomaly_quantile >= 1.0) {
    throw InvalidConfig("anomaly_quantile must lie in (0, 1)");
  }
  if (out_dir.empty()) throw InvalidConfig("out_dir must not be empty");
  if (model.task == Task::Classify && !has_class_synth) {
    throw InvalidConfig(
        "classification needs a data.class_synth specification");
  }
  if (model.task != Task::Classify && has_class_synth) {
    throw InvalidConfig("class_synth data is only for the classify task");
  }
}

SeriesFrame load_series(const RunConfig& cfg, std::vector<int>* anomalies) {
  if (anomalies != nullptr) anomalies->clear();
  if (!cfg.csv_path.empty()) {
    return load_csv(cfg.csv_path);
  }
  if (cfg.has_synth) {
    SynthResult r = synth_generate(cfg.synth);
    if (anomalies != nullptr) *anomalies = r.anomaly_positions;
    return r.frame;
  }
  throw InvalidConfig("no series data source configured");
}

void cmd_decompose(const RunConfig& cfg) {
  SeriesFrame frame = load_series(cfg, nullptr);
  const int T = frame.T;
  const int d = frame.d;
  std::vector<double> xs(static_cast<std::size_t>(d) * T);
  for (int c = 0; c < d; ++c) {
    for (int t = 0; t < T; ++t) {
      xs[static_cast<std::size_t>(c) * T + t] = frame.at(t, c);
    }
  }

  SdaqConfig sd = cfg.model.sdaq;
  sd.validate();
  const DecoupledSeries dec = sdaq_decompose(xs, d, T, sd);

  ensure_out_dir(cfg.out_dir);
  std::vector<std::string> files;
  for (int k = 1; k <= dec.K; ++k) {
    std::ostringstream csv;
    for (int c = 0; c < d; ++c) {
      csv << (c > 0 ? "," : "") << frame.channel_names[
          static_cast<std::size_t>(c)];
    }
    csv << "\n";
    for (int t = 0; t < T; ++t) {
      for (int c = 0; c < d; ++c) {
        csv << (c > 0 ? "," : "") << fmt(dec.pattern_at(k - 1, c, t));
      }
      csv << "\n";
    }
    const std::string path =
        cfg.out_dir + "/pattern_" + std::to_string(k) + ".csv";
    write_text(path, csv.str());
    files.push_back(path);
  }

  std::vector<double> per_channel_err(static_cast<std::size_t>(d), 0.0);
  double worst = 0.0;
  for (int c = 0; c < d; ++c) {
    double num = 0.0, den = 0.0;
    for (int t = 0; t < T; ++t) {
      double sum = 0.0;
      for (int k = 0; k < dec.K; ++k) sum += dec.pattern_at(k, c, t);
      const double x = xs[static_cast<std::size_t>(c) * T + t];
      num += (sum - x) * (sum - x);
      den += x * x;
    }
    const double err = den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
    per_channel_err[static_cast<std::size_t>(c)] = err;
    worst = std::max(worst, err);
  }

  json rep;
  rep["backend"] = sd.backend == Backend::CWT ? "cwt" : "fft";
  rep["lambda"] = sd.lambda;
  rep["K"] = dec.K;
  rep["T"] = T;
  rep["channels"] = d;
  rep["rejected_rows"] = frame.rejected_rows;
  rep["boundaries"] = dec.boundaries;
  rep["band_energy_fraction"] = dec.band_energy;
  rep["reconstruction_error"] = worst;
  rep["per_channel_error"] = per_channel_err;
  rep["pattern_files"] = files;
  write_text(cfg.out_dir + "/energy_report.json", rep.dump(2) + "\n");
  std::cout << rep.dump(2) << "\n";
}

TrainResult cmd_train(const RunConfig& cfg) {
  ensure_out_dir(cfg.out_dir);
  TrainResult result;
  if (cfg.model.task == Task::Classify) {
    ClassSetup s = setup_class(cfg);
    PetsModel model(s.model, cfg.train.seed);
    result = train_classifier(model, s.train, s.test, train_options(cfg));
  } else {
    SeriesSetup s = setup_series(cfg);
    PetsModel model(s.model, cfg.train.seed);
    result = train_model(model, s.ws, train_options(cfg));
  }
  json j;
  j["epochs_run"] = result.history.size();
  j["best_epoch"] = result.best_epoch;
  j["best_val"] = result.best_val;
  j["checkpoint"] = cfg.resolved_checkpoint();
  j["log"] = cfg.out_dir + "/train_log.jsonl";
  std::cout << j.dump(2) << "\n";
  return result;
}

MetricReport cmd_eval(const RunConfig& cfg, const std::string& checkpoint) {
  ensure_out_dir(cfg.out_dir);
  MetricReport rep;
  if (cfg.model.task == Task::Classify) {
    ClassSetup s = setup_class(cfg);
    PetsModel model(s.model, cfg.train.seed);
    load_checkpoint(checkpoint, model, nullptr, nullptr);
    rep = eval_classify(model, s.test);
  } else {
    SeriesSetup s = setup_series(cfg);
    PetsModel model(s.model, cfg.train.seed);
    load_checkpoint(checkpoint, model, nullptr, nullptr);
    switch (cfg.model.task) {
      case Task::Forecast:
        rep = eval_forecast(model, s.ws, cfg.normalized_metrics,
                            static_cast<std::size_t>(cfg.season));
        break;
      case Task::Impute:
        rep = eval_impute(model, s.ws, cfg.normalized_metrics,
                          cfg.train.impute_missing_rate,
                          cfg.train.seed ^ kEvalMaskSalt);
        break;
      case Task::Anomaly: {
        if (!s.anomalies.empty()) {
          rep = eval_anomaly(model, s.ws, s.ws.series, cfg.anomaly_quantile,
                             test_truth(s.ws, s.anomalies));
        } else {
          const auto val_err = reconstruction_errors(
              model, s.ws, s.ws.series,
              static_cast<std::size_t>(s.ws.train_end),
              static_cast<std::size_t>(s.ws.val_end));
          const double threshold = quantile(val_err, cfg.anomaly_quantile);
          const auto test_err = reconstruction_errors(
              model, s.ws, s.ws.series,
              static_cast<std::size_t>(s.ws.val_end),
              static_cast<std::size_t>(s.ws.T));
          const auto flags = anomaly_flags(test_err, threshold);
          rep["threshold"] = threshold;
          rep["n_flagged"] = static_cast<double>(
              std::count(flags.begin(), flags.end(), 1));
        }
        break;
      }
      default:
        throw InvalidConfig("unsupported evaluation task");
    }
  }
  json j;
  for (const auto& [k, v] : rep) j[k] = v;
  write_text(cfg.out_dir + "/metrics.json", j.dump(2) + "\n");
  print_report(rep);
  return rep;
}

void cmd_export_attention(const RunConfig& cfg, const std::string& checkpoint,
                          int sample_index) {
  ensure_out_dir(cfg.out_dir);
  std::vector<double> rows;
  int R = 0;
  ModelConfig mc;
  if (cfg.model.task == Task::Classify) {
    ClassSetup s = setup_class(cfg);
    if (sample_index < 0 || sample_index >= s.test.n) {
      throw InvalidInput("sample index out of range");
    }
    const std::size_t sample_len = static_cast<std::size_t>(s.test.d) *
                                   static_cast<std::size_t>(s.test.L);
    const auto off = static_cast<std::size_t>(sample_index) * sample_len;
    rows.assign(s.test.X.begin() + off, s.test.X.begin() + off + sample_len);
    R = s.test.d;
    mc = s.model;
  } else {
    SeriesSetup s = setup_series(cfg);
    if (sample_index < 0 ||
        sample_index >= static_cast<int>(s.ws.test_starts.size())) {
      throw InvalidInput("sample index out of range");
    }
    gather_window(s.ws, s.ws.test_starts[static_cast<std::size_t>(
                            sample_index)], rows, nullptr);
    R = s.ws.d;
    mc = s.model;
  }

  PetsModel model(mc, cfg.train.seed);
  load_checkpoint(checkpoint, model, nullptr, nullptr);
  std::vector<AttnRecord> records;
  FwdCtx ctx;
  ctx.attn_sink = &records;
  model.forward(rows, R, ctx);

  const int tokens = mc.K() * mc.P_L();
  std::vector<std::string> files;
  for (int n = 1; n <= mc.N; ++n) {
    const std::string site = "layer" + std::to_string(n) + ".ppa";
    const AttnRecord* rec = nullptr;
    for (const auto& r : records) {
      if (r.site == site) {
        rec = &r;
        break;
      }
    }
    if (rec == nullptr) throw StateError("missing attention record " + site);
    if (rec->shape.size() != 3 || rec->shape[1] != tokens ||
        rec->shape[2] != tokens) {
      throw StateError("unexpected attention shape at " + site);
    }
    const auto rows_in_rec = static_cast<std::size_t>(rec->shape[0]);
    std::ostringstream csv;
    for (int i = 0; i < tokens; ++i) {
      for (int jj = 0; jj < tokens; ++jj) {
        double sum = 0.0;
        for (std::size_t r = 0; r < rows_in_rec; ++r) {
          sum += rec->weights[(r * tokens + static_cast<std::size_t>(i)) *
                                  tokens +
                              static_cast<std::size_t>(jj)];
        }
        csv << (jj > 0 ? "," : "")
            << fmt(sum / static_cast<double>(rows_in_rec));
      }
      csv << "\n";
    }
    const std::string path =
        cfg.out_dir + "/attention_layer" + std::to_string(n) + ".csv";
    write_text(path, csv.str());
    files.push_back(path);
  }

  json meta;
  meta["n_layers"] = mc.N;
  meta["K"] = mc.K();
  meta["P_L"] = mc.P_L();
  meta["tokens"] = tokens;
  meta["sample_index"] = sample_index;
  json blocks = json::array();
  for (int k = 1; k <= mc.K(); ++k) {
    json b;
    b["pattern"] = k;
    b["start"] = (k - 1) * mc.P_L();
    b["end"] = k * mc.P_L();
    blocks.push_back(std::move(b));
  }
  meta["blocks"] = std::move(blocks);
  meta["files"] = files;
  write_text(cfg.out_dir + "/attention_blocks.json", meta.dump(2) + "\n");
  std::cout << meta.dump(2) << "\n";
}

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Pets: energy-decoupled time-series modeling"};
  app.require_subcommand(1);

  std::string config_path;
  std::string task_override, backend_override, out_override;
  std::string checkpoint_override;
  long long seed_override = -1;
  int epochs_override = -1;
  int sample_index = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "JSON run configuration")
        ->required();
    sub->add_option("--task", task_override,
                    "forecast, impute, classify or anomaly");
    sub->add_option("--backend", backend_override, "cwt or fft")
        ->check(CLI::IsMember({"cwt", "fft"}));
    sub->add_option("--seed", seed_override, "training seed");
    sub->add_option("--epochs", epochs_override, "epoch count");
    sub->add_option("--out", out_override, "output directory");
  };

  CLI::App* dec = app.add_subcommand(
      "decompose", "write pattern CSVs and an energy report");
  add_common(dec);
  CLI::App* tr = app.add_subcommand("train", "train a model");
  add_common(tr);
  CLI::App* ev = app.add_subcommand("eval", "evaluate a checkpoint");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint_override, "checkpoint file");
  CLI::App* ex = app.add_subcommand("export-attention",
                                    "write pattern-attention matrices");
  add_common(ex);
  ex->add_option("--checkpoint", checkpoint_override, "checkpoint file");
  ex->add_option("--sample", sample_index, "test sample index");

  try {
    app.parse(argc, const_cast<char**>(argv));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    RunConfig cfg = RunConfig::from_file(config_path);
    if (!task_override.empty()) {
      cfg.model.task = task_from_string(task_override);
    }
    if (!backend_override.empty()) {
      cfg.model.sdaq.backend =
          backend_override == "cwt" ? Backend::CWT : Backend::FFT;
    }
    if (seed_override >= 0) {
      cfg.train.seed = static_cast<std::uint64_t>(seed_override);
    }
    if (epochs_override >= 0) cfg.train.epochs = epochs_override;
    if (!out_override.empty()) cfg.out_dir = out_override;
    cfg.validate();
    const std::string ckpt = checkpoint_override.empty()
                                 ? cfg.resolved_checkpoint()
                                 : checkpoint_override;
    if (dec->parsed()) {
      cmd_decompose(cfg);
    } else if (tr->parsed()) {
      cmd_train(cfg);
    } else if (ev->parsed()) {
      cmd_eval(cfg, ckpt);
    } else if (ex->parsed()) {
      cmd_export_attention(cfg, ckpt, sample_index);
    }
    return 0;
  } catch (const InvalidConfig& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DegenerateSpectrum& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const DegenerateDenominator& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const StateError& e) {
    std::cerr << "internal state error: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace pets
