#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "pets/cli.hpp"
#include "pets/train.hpp"
#include "oracles.hpp"

using namespace pets;
namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
  const std::string dir = "/tmp/pets_cli_" + name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<nlohmann::json> read_jsonl(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::vector<nlohmann::json> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(nlohmann::json::parse(line));
  }
  return out;
}

ModelConfig tiny_forecast_config() {
  ModelConfig cfg;
  cfg.task = Task::Forecast;
  cfg.L = 16;
  cfg.horizon = 8;
  cfg.patch_len = 4;
  cfg.P_d = 6;
  cfg.N = 1;
  cfg.dropout = 0.05;
  cfg.sdaq.lambda = 8;
  cfg.sdaq.mus = {0.7, 0.9};
  return cfg;
}

WindowSet sine_windows(int T = 240, double noise = 0.0,
                       std::uint64_t seed = 5) {
  SynthSpec spec;
  spec.T = T;
  spec.d = 1;
  spec.seed = seed;
  spec.components.push_back({1.0 / 16.0, 1.0, 0.0});
  spec.components.push_back({1.0 / 4.0, 0.3, 0.5});
  spec.noise_sigma = noise;
  const auto res = synth_generate(spec);

  SplitSpec split;
  split.train_ratio = 0.6;
  split.val_ratio = 0.2;
  split.L = 16;
  split.horizon = 8;
  split.stride = 2;
  return make_windows(res.frame, split);
}

int cli(std::initializer_list<const char*> args) {
  std::vector<const char*> argv{"pets"};
  argv.insert(argv.end(), args.begin(), args.end());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::string write_config(const std::string& dir, int epochs,
                         const std::string& task = "forecast") {
  nlohmann::json j;
  j["task"] = task;
  j["data"]["synth"] = {
      {"T", 240},
      {"seed", 5},
      {"components",
       nlohmann::json::array({{{"freq", 1.0 / 16.0}, {"amp", 1.0}},
                              {{"freq", 0.25}, {"amp", 0.3},
                               {"phase", 0.5}}})},
  };
  if (task == "anomaly") {
    j["data"]["synth"]["noise_sigma"] = 0.05;
    j["data"]["synth"]["anomaly_count"] = 4;
    j["data"]["synth"]["anomaly_magnitude"] = 9.0;
  }
  j["split"] = {{"train_ratio", 0.6}, {"val_ratio", 0.2}, {"stride", 2}};
  j["sdaq"] = {{"lambda", 8}, {"mus", {0.7, 0.9}}, {"backend", "fft"}};
  j["model"] = {{"L", 16}, {"horizon", 8}, {"patch_len", 4}, {"P_d", 6},
                {"N", 1}, {"dropout", 0.0}};
  j["train"] = {{"epochs", epochs}, {"batch_size", 8}, {"lr", 1e-3},
                {"seed", 11}};
  j["out_dir"] = dir;
  const std::string path = dir + "/config.json";
  std::ofstream out(path);
  out << j.dump(2);
  return path;
}

}  // namespace

TEST_CASE("one epoch leaves one log record and a checkpoint") {
  const auto dir = fresh_dir("one_epoch");
  const auto ws = sine_windows();
  PetsModel model(tiny_forecast_config(), 1);

  TrainOptions opts;
  opts.epochs = 1;
  opts.batch_size = 8;
  opts.log_path = dir + "/log.jsonl";
  opts.checkpoint_path = dir + "/ck.json";
  const auto result = train_model(model, ws, opts);

  REQUIRE(result.history.size() == 1);
  CHECK(result.history[0].epoch == 1);
  CHECK(result.best_epoch == 1);
  CHECK(std::isfinite(result.history[0].train_loss));
  CHECK(std::isfinite(result.history[0].val_loss));

  const auto lines = read_jsonl(opts.log_path);
  REQUIRE(lines.size() == 1);
  CHECK(lines[0].at("epoch").get<int>() == 1);
  CHECK(lines[0].contains("train_loss"));
  CHECK(lines[0].contains("val_loss"));
  CHECK_FALSE(lines[0].contains("timestamp"));
  CHECK(fs::exists(opts.checkpoint_path));
}

TEST_CASE("training reduces the loss on a clean sine") {
  const auto dir = fresh_dir("reduces");
  const auto ws = sine_windows();
  auto cfg = tiny_forecast_config();
  cfg.dropout = 0.0;
  PetsModel model(cfg, 2);

  TrainOptions opts;
  opts.epochs = 30;
  opts.batch_size = 8;
  opts.adam.lr = 3e-3;
  const auto result = train_model(model, ws, opts);
  REQUIRE(result.history.size() == 30);
  const double first = result.history.front().train_loss;
  const double last = result.history.back().train_loss;
  CHECK(last < first * 0.5);
  CHECK(result.best_val <= result.history.front().val_loss);
}

TEST_CASE("a checkpoint restores every parameter bit for bit") {
  const auto dir = fresh_dir("restore");
  auto cfg = tiny_forecast_config();
  PetsModel model(cfg, 3);
  Rng rng(99);
  Adam opt(AdamConfig{});
  const std::string path = dir + "/ck.json";
  save_checkpoint(path, model, &opt, &rng, 7, 0.125);

  std::vector<std::vector<double>> before;
  for (const auto& [name, t] : model.params().items()) {
    before.push_back(t.data());
  }

  PetsModel other(cfg, 4);
  Rng rng2(1);
  Adam opt2(AdamConfig{});
  const auto st = load_checkpoint(path, other, &opt2, &rng2);
  CHECK(st.epoch == 7);
  CHECK(st.best_val == 0.125);
  CHECK(st.has_optimizer);
  CHECK(st.has_rng);

  const auto& items = other.params().items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    CHECK(items[i].second.data() == before[i]);
  }

  std::uniform_real_distribution<double> u(0.0, 1.0);
  Rng ref(99);
  CHECK(u(rng2) == u(ref));
}

TEST_CASE("checkpoint loading audits names and shapes") {
  const auto dir = fresh_dir("audit");
  auto cfg = tiny_forecast_config();
  PetsModel model(cfg, 5);
  const std::string path = dir + "/ck.json";
  save_checkpoint(path, model, nullptr, nullptr, 1, 0.0);

  auto wide = cfg;
  wide.P_d = 8;
  PetsModel mismatch(wide, 5);
  CHECK_THROWS_AS(load_checkpoint(path, mismatch, nullptr, nullptr),
                  ShapeError);

  auto deeper = cfg;
  deeper.N = 2;
  PetsModel missing(deeper, 5);
  CHECK_THROWS_AS(load_checkpoint(path, missing, nullptr, nullptr),
                  ShapeError);

  PetsModel shallow(cfg, 5);
  const std::string path2 = dir + "/ck2.json";
  PetsModel deep_src(deeper, 6);
  save_checkpoint(path2, deep_src, nullptr, nullptr, 1, 0.0);
  CHECK_THROWS_AS(load_checkpoint(path2, shallow, nullptr, nullptr),
                  ShapeError);

  CHECK_THROWS_AS(load_checkpoint(dir + "/absent.json", model, nullptr,
                                  nullptr),
                  InvalidInput);
  std::ofstream bad(dir + "/bad.json");
  bad << "{not json";
  bad.close();
  CHECK_THROWS_AS(load_checkpoint(dir + "/bad.json", model, nullptr,
                                  nullptr),
                  ParseError);
}

TEST_CASE("resuming from a checkpoint continues the run exactly") {
  const auto dir = fresh_dir("resume");
  const auto ws = sine_windows();
  auto cfg = tiny_forecast_config();

  TrainOptions full;
  full.epochs = 4;
  full.batch_size = 8;
  full.seed = 17;
  full.log_path = dir + "/full.jsonl";
  full.checkpoint_path = dir + "/full_ck.json";
  PetsModel model_a(cfg, 17);
  const auto res_a = train_model(model_a, ws, full);
  REQUIRE(res_a.history.size() == 4);

  TrainOptions half = full;
  half.epochs = 2;
  half.log_path = dir + "/half.jsonl";
  half.checkpoint_path = dir + "/half_ck.json";
  PetsModel model_b(cfg, 17);
  const auto res_b = train_model(model_b, ws, half);
  REQUIRE(res_b.history.size() == 2);
  for (int e = 0; e < 2; ++e) {
    CHECK(res_b.history[static_cast<std::size_t>(e)].train_loss ==
          res_a.history[static_cast<std::size_t>(e)].train_loss);
    CHECK(res_b.history[static_cast<std::size_t>(e)].val_loss ==
          res_a.history[static_cast<std::size_t>(e)].val_loss);
  }

  TrainOptions rest = full;
  rest.log_path = dir + "/rest.jsonl";
  rest.checkpoint_path = dir + "/rest_ck.json";
  rest.resume_path = half.checkpoint_path;
  fs::copy_file(half.log_path, rest.log_path);
  fs::copy_file(half.checkpoint_path, rest.checkpoint_path);
  PetsModel model_c(cfg, 17);
  const auto res_c = train_model(model_c, ws, rest);
  REQUIRE(res_c.history.size() == 2);
  for (int e = 0; e < 2; ++e) {
    CHECK(res_c.history[static_cast<std::size_t>(e)].epoch == e + 3);
    CHECK(res_c.history[static_cast<std::size_t>(e)].train_loss ==
          res_a.history[static_cast<std::size_t>(e + 2)].train_loss);
    CHECK(res_c.history[static_cast<std::size_t>(e)].val_loss ==
          res_a.history[static_cast<std::size_t>(e + 2)].val_loss);
  }

  CHECK(read_file(rest.log_path) == read_file(full.log_path));
  CHECK(read_file(rest.checkpoint_path) == read_file(full.checkpoint_path));
}

TEST_CASE("a zeroed head forecasts the target variance") {
  const auto ws = sine_windows(240, 0.1);
  auto cfg = tiny_forecast_config();
  PetsModel model(cfg, 8);
  for (auto& v : model.params().find("head.W").data()) v = 0.0;
  for (auto& v : model.params().find("head.b").data()) v = 0.0;

  const auto rep = eval_forecast(model, ws, true, 1);

  double sq = 0.0;
  std::size_t n = 0;
  std::vector<double> in, tgt;
  for (int start : ws.test_starts) {
    gather_window(ws, start, in, &tgt);
    for (double v : tgt) {
      sq += v * v;
      ++n;
    }
  }
  CHECK(rep.at("mse") ==
        doctest::Approx(sq / static_cast<double>(n)).epsilon(1e-9));
  CHECK(rep.at("n_windows") ==
        doctest::Approx(static_cast<double>(ws.test_starts.size())));
}

TEST_CASE("forecast report carries the full metric key set") {
  const auto ws = sine_windows(240, 0.05);
  PetsModel model(tiny_forecast_config(), 9);
  const auto rep = eval_forecast(model, ws, false, 2);
  for (const char* key : {"mse", "mae", "rmse", "mape", "smape", "mase",
                          "owa", "naive2_smape", "naive2_mase",
                          "n_windows"}) {
    INFO(key);
    CHECK(rep.count(key) == 1);
  }
  CHECK(rep.at("rmse") ==
        doctest::Approx(std::sqrt(rep.at("mse"))).epsilon(1e-9));
}

TEST_CASE("imputation evaluation measures the hidden cells") {
  auto cfg = tiny_forecast_config();
  cfg.task = Task::Impute;
  cfg.horizon = 96;

  SynthSpec spec;
  spec.T = 240;
  spec.components.push_back({1.0 / 16.0, 1.0, 0.0});
  spec.noise_sigma = 0.05;
  const auto res = synth_generate(spec);
  SplitSpec split;
  split.train_ratio = 0.6;
  split.val_ratio = 0.2;
  split.L = 16;
  split.horizon = 0;
  const auto ws = make_windows(res.frame, split);

  PetsModel model(cfg, 10);
  const auto rep = eval_impute(model, ws, true, 0.25, 123);
  for (const char* key :
       {"imputation_mse", "imputation_mae", "missing_fraction",
        "n_windows"}) {
    INFO(key);
    CHECK(rep.count(key) == 1);
  }
  CHECK(rep.at("missing_fraction") > 0.1);
  CHECK(rep.at("missing_fraction") < 0.4);

  const auto rep2 = eval_impute(model, ws, true, 0.25, 123);
  CHECK(rep2.at("imputation_mse") == rep.at("imputation_mse"));
}

TEST_CASE("classification train and eval round trip") {
  ClassSynthSpec cspec;
  cspec.L = 16;
  cspec.seed = 12;
  cspec.n_train_per_class = 8;
  cspec.n_test_per_class = 4;
  cspec.base.push_back({1.0 / 8.0, 1.0, 0.0});
  cspec.noise_sigma = 0.05;
  cspec.burst_freq = 0.45;
  cspec.burst_amp = 1.5;
  cspec.burst_len = 8;
  ClassDataset train_set, test_set;
  synth_classification(cspec, train_set, test_set);

  auto cfg = tiny_forecast_config();
  cfg.task = Task::Classify;
  cfg.n_classes = 2;
  PetsModel model(cfg, 13);

  TrainOptions opts;
  opts.epochs = 2;
  opts.batch_size = 8;
  const auto result = train_classifier(model, train_set, test_set, opts);
  CHECK(result.history.size() == 2);

  const auto rep = eval_classify(model, test_set);
  for (const char* key : {"accuracy", "precision", "recall", "f1",
                          "n_samples"}) {
    INFO(key);
    CHECK(rep.count(key) == 1);
  }
  CHECK(rep.at("accuracy") >= 0.0);
  CHECK(rep.at("accuracy") <= 1.0);
  CHECK(rep.at("n_samples") == doctest::Approx(8.0));
}

TEST_CASE("anomaly evaluation thresholds validation errors") {
  auto cfg = tiny_forecast_config();
  cfg.task = Task::Anomaly;

  SynthSpec spec;
  spec.T = 240;
  spec.seed = 21;
  spec.components.push_back({1.0 / 16.0, 1.0, 0.0});
  spec.noise_sigma = 0.05;
  spec.anomaly_count = 3;
  spec.anomaly_magnitude = 10.0;
  const auto res = synth_generate(spec);
  SplitSpec split;
  split.train_ratio = 0.6;
  split.val_ratio = 0.2;
  split.L = 16;
  split.horizon = 0;
  const auto ws = make_windows(res.frame, split);

  std::vector<int> truth(static_cast<std::size_t>(ws.T - ws.val_end), 0);
  for (int p : res.anomaly_positions) {
    if (p >= ws.val_end) truth[static_cast<std::size_t>(p - ws.val_end)] = 1;
  }
  PetsModel model(cfg, 14);
  const auto rep = eval_anomaly(model, ws, ws.series, 0.9, truth);
  for (const char* key : {"threshold", "precision", "recall", "f1",
                          "n_flagged"}) {
    INFO(key);
    CHECK(rep.count(key) == 1);
  }

  const auto errs = reconstruction_errors(
      model, ws, ws.series, static_cast<std::size_t>(ws.val_end),
      static_cast<std::size_t>(ws.T));
  CHECK(errs.size() == static_cast<std::size_t>(ws.T - ws.val_end));
  for (double e : errs) CHECK(e >= 0.0);
}

TEST_CASE("a diverging run aborts with a numerical error") {
  const auto ws = sine_windows();
  auto cfg = tiny_forecast_config();
  cfg.dropout = 0.0;
  PetsModel model(cfg, 15);

  TrainOptions opts;
  opts.epochs = 3;
  opts.batch_size = 8;
  opts.adam.lr = 1e120;
  CHECK_THROWS_AS(train_model(model, ws, opts), NumericalError);
}

TEST_CASE("predict_rows returns one output row per input row") {
  PetsModel model(tiny_forecast_config(), 16);
  Rng rng(1);
  const auto rows = oracle::random_vec(3 * 16, rng);
  const auto out = predict_rows(model, rows, 3);
  CHECK(out.size() == 3 * 8);
  for (double v : out) CHECK(std::isfinite(v));
}

TEST_CASE("decompose command writes pattern files deterministically") {
  const auto d1 = fresh_dir("dec1");
  const auto d2 = fresh_dir("dec2");
  const auto cfg_path = write_config(d1, 1);
  CHECK(cli({"decompose", "--config", cfg_path.c_str()}) == 0);
  for (int k = 1; k <= 3; ++k) {
    CHECK(fs::exists(d1 + "/pattern_" + std::to_string(k) + ".csv"));
  }
  CHECK(fs::exists(d1 + "/energy_report.json"));

  const auto rep = nlohmann::json::parse(read_file(d1 +
                                                   "/energy_report.json"));
  CHECK(rep.at("K").get<int>() == 3);
  CHECK(rep.at("reconstruction_error").get<double>() < 1e-9);

  CHECK(cli({"decompose", "--config", cfg_path.c_str(), "--out",
             d2.c_str()}) == 0);
  for (int k = 1; k <= 3; ++k) {
    const std::string f = "/pattern_" + std::to_string(k) + ".csv";
    CHECK(read_file(d1 + f) == read_file(d2 + f));
  }
}

TEST_CASE("train and eval commands round trip through the cli") {
  const auto dir = fresh_dir("roundtrip");
  const auto cfg_path = write_config(dir, 2);
  CHECK(cli({"train", "--config", cfg_path.c_str()}) == 0);
  CHECK(fs::exists(dir + "/train_log.jsonl"));
  CHECK(fs::exists(dir + "/checkpoint.json"));
  CHECK(read_jsonl(dir + "/train_log.jsonl").size() == 2);

  CHECK(cli({"eval", "--config", cfg_path.c_str()}) == 0);
  CHECK(fs::exists(dir + "/metrics.json"));
  const auto metrics = nlohmann::json::parse(read_file(dir +
                                                       "/metrics.json"));
  CHECK(metrics.contains("mse"));
  const auto first = read_file(dir + "/metrics.json");

  CHECK(cli({"eval", "--config", cfg_path.c_str()}) == 0);
  CHECK(read_file(dir + "/metrics.json") == first);
}

TEST_CASE("repeated training runs are byte identical") {
  const auto d1 = fresh_dir("det1");
  const auto d2 = fresh_dir("det2");
  const auto p1 = write_config(d1, 2);
  const auto p2 = write_config(d2, 2);
  CHECK(cli({"train", "--config", p1.c_str()}) == 0);
  CHECK(cli({"train", "--config", p2.c_str()}) == 0);
  CHECK(read_file(d1 + "/train_log.jsonl") ==
        read_file(d2 + "/train_log.jsonl"));
  CHECK(read_file(d1 + "/checkpoint.json") ==
        read_file(d2 + "/checkpoint.json"));
}

TEST_CASE("export-attention writes stochastic averaged matrices") {
  const auto dir = fresh_dir("attn");
  const auto cfg_path = write_config(dir, 1);
  REQUIRE(cli({"train", "--config", cfg_path.c_str()}) == 0);
  CHECK(cli({"export-attention", "--config", cfg_path.c_str(), "--sample",
             "0"}) == 0);

  const auto meta = nlohmann::json::parse(
      read_file(dir + "/attention_blocks.json"));
  CHECK(meta.at("n_layers").get<int>() == 1);
  CHECK(meta.at("K").get<int>() == 3);
  CHECK(meta.at("P_L").get<int>() == 4);
  CHECK(meta.at("tokens").get<int>() == 12);
  REQUIRE(meta.at("blocks").size() == 3);
  CHECK(meta.at("blocks")[1].at("start").get<int>() == 4);
  CHECK(meta.at("blocks")[1].at("end").get<int>() == 8);

  const auto csv = read_file(dir + "/attention_layer1.csv");
  std::istringstream lines(csv);
  std::string line;
  int n_rows = 0;
  while (std::getline(lines, line)) {
    if (line.empty()) continue;
    std::istringstream cells(line);
    std::string cell;
    double sum = 0.0;
    int n_cells = 0;
    while (std::getline(cells, cell, ',')) {
      sum += std::stod(cell);
      ++n_cells;
    }
    CHECK(n_cells == 12);
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    ++n_rows;
  }
  CHECK(n_rows == 12);
}

TEST_CASE("cli exit codes distinguish failure classes") {
  const auto dir = fresh_dir("codes");
  CHECK(cli({}) == 1);
  CHECK(cli({"frobnicate", "--config", "x.json"}) == 1);
  CHECK(cli({"train"}) == 1);

  std::ofstream bad(dir + "/bad_key.json");
  bad << R"({"task": "forecast", "data": {"synth": {"T": 240}},
             "bogus": 1})";
  bad.close();
  CHECK(cli({"train", "--config", (dir + "/bad_key.json").c_str()}) == 1);

  std::ofstream both(dir + "/both.json");
  both << R"({"task": "forecast",
              "data": {"synth": {"T": 240}, "csv": "x.csv"}})";
  both.close();
  CHECK(cli({"train", "--config", (dir + "/both.json").c_str()}) == 1);

  std::ofstream missing(dir + "/missing_csv.json");
  missing << R"({"task": "forecast", "data": {"csv": "/tmp/no_such_848.csv"},
                 "model": {"L": 16, "horizon": 8, "patch_len": 4,
                           "P_d": 6, "N": 1},
                 "sdaq": {"lambda": 8, "mus": [0.7, 0.9]}})";
  missing.close();
  CHECK(cli({"decompose", "--config",
             (dir + "/missing_csv.json").c_str()}) == 2);

  CHECK(cli({"train", "--config", (dir + "/absent.json").c_str()}) == 2);
}

TEST_CASE("run config validation rejects inconsistent settings") {
  CHECK_THROWS_AS(RunConfig::from_json_text("not json"), ParseError);
  CHECK_THROWS_AS(RunConfig::from_json_text("[1, 2]"), InvalidConfig);
  CHECK_THROWS_AS(RunConfig::from_json_text(R"({"task": "forecast"})"),
                  InvalidConfig);
  CHECK_THROWS_AS(RunConfig::from_json_text(
                      R"({"task": "classify", "data": {"synth": {}}})"),
                  InvalidConfig);
  CHECK_THROWS_AS(
      RunConfig::from_json_text(
          R"({"data": {"synth": {}}, "train": {"lr": -1.0}})"),
      InvalidConfig);
  CHECK_THROWS_AS(
      RunConfig::from_json_text(
          R"({"data": {"synth": {}}, "eval": {"season": 0}})"),
      InvalidConfig);

  const auto cfg = RunConfig::from_json_text(
      R"({"data": {"synth": {"T": 100}}, "out_dir": "zz"})");
  CHECK(cfg.resolved_checkpoint() == "zz/checkpoint.json");
  CHECK(cfg.has_synth);
  CHECK(cfg.model.task == Task::Forecast);
}
