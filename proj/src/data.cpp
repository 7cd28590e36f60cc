#include "pets/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace pets {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kStdFloor = 1e-8;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.push_back("");
  return cells;
}

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& cell, double& out) {
  const std::string t = trim(cell);
  if (t.empty()) {
    out = std::nan("");
    return true;
  }
  const char* first = t.data();
  const char* last = t.data() + t.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last;
}

bool is_time_header(std::string h) {
  std::transform(h.begin(), h.end(), h.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return h == "date" || h == "time" || h == "timestamp" || h == "datetime";
}

}  // namespace

SeriesFrame load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw InvalidInput("load_csv: cannot open '" + path + "'");
  }
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    if (!trim(line).empty()) lines.push_back(line);
  }
  if (lines.empty()) {
    throw InvalidInput("load_csv: '" + path + "' is empty");
  }
  if (lines.size() == 1) {
    throw InvalidInput("load_csv: '" + path + "' has a header but no rows");
  }

  const auto header = split_csv_line(lines[0]);
  if (header.empty()) {
    throw ParseError("load_csv: row 1, column 1: empty header");
  }

  bool has_time = is_time_header(trim(header[0]));
  if (!has_time) {
    double probe;
    const auto first_row = split_csv_line(lines[1]);
    if (!first_row.empty() && !parse_double(first_row[0], probe)) {
      has_time = true;
    }
  }
  const std::size_t first_chan = has_time ? 1 : 0;
  if (header.size() <= first_chan) {
    throw InvalidInput("load_csv: '" + path + "' has no data columns");
  }

  SeriesFrame frame;
  frame.name = path;
  frame.d = static_cast<int>(header.size() - first_chan);
  for (std::size_t c = first_chan; c < header.size(); ++c) {
    frame.channel_names.push_back(trim(header[c]));
  }

  for (std::size_t r = 1; r < lines.size(); ++r) {
    const auto cells = split_csv_line(lines[r]);
    if (cells.size() != header.size()) {
      throw ParseError("load_csv: row " + std::to_string(r + 1) + " has " +
                       std::to_string(cells.size()) + " cells, expected " +
                       std::to_string(header.size()));
    }
    std::vector<double> row(static_cast<std::size_t>(frame.d));
    bool finite = true;
    for (std::size_t c = first_chan; c < cells.size(); ++c) {
      double v;
      if (!parse_double(cells[c], v)) {
        throw ParseError("load_csv: row " + std::to_string(r + 1) +
                         ", column " + std::to_string(c + 1) +
                         ": non-numeric cell '" + trim(cells[c]) + "'");
      }
      if (!std::isfinite(v)) finite = false;
      row[c - first_chan] = v;
    }
    if (!finite) {
      ++frame.rejected_rows;
      continue;
    }
    if (has_time) frame.timestamps.push_back(trim(cells[0]));
    frame.data.insert(frame.data.end(), row.begin(), row.end());
    ++frame.T;
  }
  if (frame.T == 0) {
    throw InvalidInput("load_csv: '" + path +
                       "' has no usable rows (all rejected)");
  }
  return frame;
}

WindowSet make_windows(const SeriesFrame& frame, const SplitSpec& split) {
  if (split.L < 1 || split.horizon < 0 || split.stride < 1) {
    throw InvalidConfig("make_windows: bad geometry L=" +
                        std::to_string(split.L) + " horizon=" +
                        std::to_string(split.horizon) + " stride=" +
                        std::to_string(split.stride));
  }
  if (split.train_ratio <= 0.0 || split.val_ratio < 0.0 ||
      split.train_ratio + split.val_ratio > 1.0) {
    throw InvalidConfig("make_windows: bad split ratios");
  }
  const int T = frame.T;
  const int need = split.L + split.horizon;

  WindowSet ws;
  ws.L = split.L;
  ws.horizon = split.horizon;
  ws.d = frame.d;
  ws.T = T;
  ws.train_end = static_cast<int>(split.train_ratio * T);
  ws.val_end =
      ws.train_end + static_cast<int>(split.val_ratio * T);
  ws.val_end = std::min(ws.val_end, T);
  if (ws.train_end < need) {
    throw InvalidConfig("make_windows: train split of " +
                        std::to_string(ws.train_end) +
                        " steps cannot hold a window of " +
                        std::to_string(need));
  }
  const bool has_val = split.val_ratio > 0.0;
  const bool has_test = split.train_ratio + split.val_ratio < 1.0;
  if (has_val && ws.val_end - ws.train_end < need) {
    throw InvalidConfig("make_windows: validation split of " +
                        std::to_string(ws.val_end - ws.train_end) +
                        " steps cannot hold a window of " +
                        std::to_string(need));
  }
  if (has_test && T - ws.val_end < need) {
    throw InvalidConfig("make_windows: test split of " +
                        std::to_string(T - ws.val_end) +
                        " steps cannot hold a window of " +
                        std::to_string(need));
  }

  ws.mean.assign(static_cast<std::size_t>(ws.d), 0.0);
  ws.stdev.assign(static_cast<std::size_t>(ws.d), 0.0);
  for (int c = 0; c < ws.d; ++c) {
    double m = 0.0;
    for (int t = 0; t < ws.train_end; ++t) m += frame.at(t, c);
    m /= static_cast<double>(ws.train_end);
    double v = 0.0;
    for (int t = 0; t < ws.train_end; ++t) {
      const double dd = frame.at(t, c) - m;
      v += dd * dd;
    }
    v /= static_cast<double>(ws.train_end);
    ws.mean[static_cast<std::size_t>(c)] = m;
    ws.stdev[static_cast<std::size_t>(c)] =
        std::max(std::sqrt(v), kStdFloor);
  }

  ws.series.assign(static_cast<std::size_t>(T) * ws.d, 0.0);
  for (int t = 0; t < T; ++t)
    for (int c = 0; c < ws.d; ++c)
      ws.series[static_cast<std::size_t>(t) * ws.d + c] =
          (frame.at(t, c) - ws.mean[static_cast<std::size_t>(c)]) /
          ws.stdev[static_cast<std::size_t>(c)];

  auto fill = [&](int begin, int end, std::vector<int>& starts) {
    for (int s = begin; s + need <= end; s += split.stride) {
      starts.push_back(s);
    }
  };
  fill(0, ws.train_end, ws.train_starts);
  if (has_val) fill(ws.train_end, ws.val_end, ws.val_starts);
  if (has_test) fill(ws.val_end, T, ws.test_starts);
  return ws;
}

void gather_window(const WindowSet& ws, int start,
                   std::vector<double>& inputs,
                   std::vector<double>* targets) {
  if (start < 0 || start + ws.L + ws.horizon > ws.T) {
    throw InvalidInput("gather_window: window at " + std::to_string(start) +
                       " exceeds series of length " + std::to_string(ws.T));
  }
  inputs.assign(static_cast<std::size_t>(ws.d) * ws.L, 0.0);
  for (int c = 0; c < ws.d; ++c)
    for (int t = 0; t < ws.L; ++t)
      inputs[static_cast<std::size_t>(c) * ws.L + t] =
          ws.series[static_cast<std::size_t>(start + t) * ws.d + c];
  if (targets) {
    targets->assign(static_cast<std::size_t>(ws.d) * ws.horizon, 0.0);
    for (int c = 0; c < ws.d; ++c)
      for (int t = 0; t < ws.horizon; ++t)
        (*targets)[static_cast<std::size_t>(c) * ws.horizon + t] =
            ws.series[static_cast<std::size_t>(start + ws.L + t) * ws.d + c];
  }
}

SynthSpec SynthSpec::from_json_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("SynthSpec: bad JSON: ") + e.what());
  }
  SynthSpec s;
  s.name = j.value("name", s.name);
  s.T = j.value("T", s.T);
  s.d = j.value("d", s.d);
  s.seed = j.value("seed", s.seed);
  if (j.contains("components")) {
    for (const auto& c : j.at("components")) {
      Component comp;
      comp.freq = c.value("freq", 0.0);
      comp.amp = c.value("amp", 0.0);
      comp.phase = c.value("phase", 0.0);
      s.components.push_back(comp);
    }
  }
  s.channel_phase_shift =
      j.value("channel_phase_shift", s.channel_phase_shift);
  s.trend = j.value("trend", s.trend);
  s.noise_sigma = j.value("noise_sigma", s.noise_sigma);
  s.anomaly_count = j.value("anomaly_count", s.anomaly_count);
  s.anomaly_magnitude = j.value("anomaly_magnitude", s.anomaly_magnitude);
  return s;
}

SynthResult synth_generate(const SynthSpec& spec) {
  if (spec.T < 1 || spec.d < 1) {
    throw InvalidConfig("synth_generate: T and d must be positive");
  }
  if (spec.noise_sigma < 0.0) {
    throw InvalidConfig("synth_generate: negative noise sigma");
  }
  SynthResult res;
  SeriesFrame& f = res.frame;
  f.name = spec.name;
  f.T = spec.T;
  f.d = spec.d;
  for (int c = 0; c < spec.d; ++c) {
    f.channel_names.push_back("ch" + std::to_string(c + 1));
  }
  f.data.assign(static_cast<std::size_t>(spec.T) * spec.d, 0.0);

  Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  for (int t = 0; t < spec.T; ++t) {
    for (int c = 0; c < spec.d; ++c) {
      double v = spec.trend * t;
      for (const auto& comp : spec.components) {
        v += comp.amp * std::sin(2.0 * kPi * comp.freq * t + comp.phase +
                                 c * spec.channel_phase_shift);
      }
      if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
      f.data[static_cast<std::size_t>(t) * spec.d + c] = v;
    }
  }

  if (spec.anomaly_count > 0) {
    std::uniform_int_distribution<int> pos(0, spec.T - 1);
    for (int i = 0; i < spec.anomaly_count; ++i) {
      int p = pos(rng);
      while (std::find(res.anomaly_positions.begin(),
                       res.anomaly_positions.end(),
                       p) != res.anomaly_positions.end()) {
        p = pos(rng);
      }
      res.anomaly_positions.push_back(p);
      for (int c = 0; c < spec.d; ++c) {
        f.data[static_cast<std::size_t>(p) * spec.d + c] +=
            spec.anomaly_magnitude;
      }
    }
    std::sort(res.anomaly_positions.begin(), res.anomaly_positions.end());
  }
  return res;
}

void synth_classification(const ClassSynthSpec& spec, ClassDataset& train,
                          ClassDataset& test) {
  if (spec.L < 4 || spec.burst_len < 1 || spec.burst_len > spec.L) {
    throw InvalidConfig("synth_classification: bad geometry");
  }
  Rng rng(spec.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> uphase(0.0, 2.0 * kPi);
  std::uniform_int_distribution<int> ustart(0, spec.L - spec.burst_len);

  auto emit = [&](ClassDataset& ds, int n_per_class) {
    ds.n = 2 * n_per_class;
    ds.d = 1;
    ds.L = spec.L;
    ds.X.assign(static_cast<std::size_t>(ds.n) * spec.L, 0.0);
    ds.y.assign(static_cast<std::size_t>(ds.n), 0);
    for (int i = 0; i < ds.n; ++i) {
      const int label = i % 2;
      ds.y[static_cast<std::size_t>(i)] = label;
      const double jitter = uphase(rng);
      const int bstart = ustart(rng);
      for (int t = 0; t < spec.L; ++t) {
        double v = 0.0;
        for (const auto& comp : spec.base) {
          v += comp.amp *
               std::sin(2.0 * kPi * comp.freq * t + comp.phase + jitter);
        }
        if (label == 1 && t >= bstart && t < bstart + spec.burst_len) {
          v += spec.burst_amp * std::sin(2.0 * kPi * spec.burst_freq * t);
        }
        if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise(rng);
        ds.X[static_cast<std::size_t>(i) * spec.L + t] = v;
      }
    }
  };
  emit(train, spec.n_train_per_class);
  emit(test, spec.n_test_per_class);
}

}  // namespace pets
