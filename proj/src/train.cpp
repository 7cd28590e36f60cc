#include "pets/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "pets/ops.hpp"

namespace pets {

namespace {

using nlohmann::json;

std::vector<double> tensor_rows(const Tensor& t) { return t.data(); }

/// Sums |grad| per top-level parameter block and prints the table.
void dump_grad_blocks(const ParamStore& params) {
  std::map<std::string, double> acc;
  for (const auto& [name, t] : params.items()) {
    acc[name.substr(0, name.find('.'))] += grad_abs_sum(t);
  }
  std::cerr << "gradient L1 by block:\n";
  for (const auto& [block, v] : acc) {
    std::cerr << "  " << block << ": " << v << "\n";
  }
}

[[noreturn]] void abort_nonfinite(PetsModel& model, Tape& tape, Tensor& loss,
                                  int epoch, int batch) {
  try {
    tape.backward(loss);
  } catch (const Error&) {
  }
  dump_grad_blocks(model.params());
  std::ostringstream msg;
  msg << "non-finite training loss at epoch " << epoch << ", batch " << batch;
  throw NumericalError(msg.str());
}

/// Draws a 0/1 missing indicator; guarantees at least one missing
/// entry so the masked loss is defined.
std::vector<double> draw_missing(std::size_t n, double rate, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  std::vector<double> miss(n, 0.0);
  std::size_t count = 0;
  for (auto& m : miss) {
    if (uni(rng) < rate) {
      m = 1.0;
      ++count;
    }
  }
  if (count == 0 && n > 0) miss[0] = 1.0;
  return miss;
}

struct SeriesBatch {
  std::vector<double> inputs;   // [R, L], model input
  std::vector<double> targets;  // [R, out_len]
  std::vector<double> missing;  // [R, L], impute only
  int R = 0;
};

/// Assembles one batch of windows for a series task.  For imputation
/// the inputs have the missing positions zeroed and the full window
/// becomes the target.
SeriesBatch gather_series_batch(const PetsModel& model, const WindowSet& ws,
                                const std::vector<int>& starts,
                                std::size_t lo, std::size_t hi,
                                double missing_rate, Rng* mask_rng) {
  const Task task = model.config().task;
  SeriesBatch b;
  std::vector<double> in, tgt;
  for (std::size_t i = lo; i < hi; ++i) {
    if (task == Task::Forecast) {
      gather_window(ws, starts[i], in, &tgt);
      b.targets.insert(b.targets.end(), tgt.begin(), tgt.end());
    } else {
      gather_window(ws, starts[i], in, nullptr);
      b.targets.insert(b.targets.end(), in.begin(), in.end());
    }
    b.inputs.insert(b.inputs.end(), in.begin(), in.end());
    b.R += ws.d;
  }
  if (task == Task::Impute) {
    b.missing = draw_missing(b.inputs.size(), missing_rate, *mask_rng);
    for (std::size_t i = 0; i < b.inputs.size(); ++i) {
      if (b.missing[i] != 0.0) b.inputs[i] = 0.0;
    }
  }
  return b;
}

Tensor series_loss(PetsModel& model, const SeriesBatch& b, FwdCtx& ctx) {
  const auto& cfg = model.config();
  Tensor pred = model.forward(b.inputs, b.R, ctx);
  const std::int64_t out_len =
      cfg.task == Task::Forecast ? cfg.horizon : cfg.L;
  Tensor target = Tensor::from({b.R, out_len}, b.targets);
  if (cfg.task == Task::Impute) {
    Tensor mask = Tensor::from({b.R, cfg.L}, b.missing);
    return masked_mse_loss(ctx.tape, pred, target, mask);
  }
  return mse_loss(ctx.tape, pred, target);
}

/// Mean loss over a list of window starts with dropout off.
double eval_series_loss(PetsModel& model, const WindowSet& ws,
                        const std::vector<int>& starts, int batch_size,
                        double missing_rate, std::uint64_t mask_seed) {
  if (starts.empty()) return std::numeric_limits<double>::quiet_NaN();
  Rng mask_rng(mask_seed);
  double sum = 0.0;
  std::size_t n_batches = 0;
  for (std::size_t lo = 0; lo < starts.size();
       lo += static_cast<std::size_t>(batch_size)) {
    const std::size_t hi =
        std::min(starts.size(), lo + static_cast<std::size_t>(batch_size));
    SeriesBatch b = gather_series_batch(model, ws, starts, lo, hi,
                                        missing_rate, &mask_rng);
    FwdCtx ctx;
    Tensor loss = series_loss(model, b, ctx);
    sum += loss.item();
    ++n_batches;
  }
  return sum / static_cast<double>(n_batches);
}

void write_epoch_line(std::ofstream& log, const EpochRecord& r) {
  if (!log.is_open()) return;
  json j;
  j["epoch"] = r.epoch;
  j["train_loss"] = r.train_loss;
  j["val_loss"] = r.val_loss;
  log << j.dump() << "\n";
  log.flush();
}

std::ofstream open_log(const std::string& path, bool append) {
  std::ofstream log;
  if (!path.empty()) {
    log.open(path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw InvalidInput("cannot open log file: " + path);
  }
  return log;
}

}  // namespace

void Adam::ensure_state(const ParamStore& params) {
  const auto& items = params.items();
  if (m_.empty()) {
    m_.resize(items.size());
    v_.resize(items.size());
    for (std::size_t i = 0; i < items.size(); ++i) {
      const auto n = static_cast<std::size_t>(items[i].second.numel());
      m_[i].assign(n, 0.0);
      v_[i].assign(n, 0.0);
    }
    return;
  }
  if (m_.size() != items.size()) {
    throw StateError("optimizer state does not match the parameter list");
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (m_[i].size() != static_cast<std::size_t>(items[i].second.numel())) {
      throw StateError("optimizer state does not match parameter " +
                       items[i].first);
    }
  }
}

void Adam::step(ParamStore& params) {
  ensure_state(params);
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto& items = params.items();
  for (std::size_t i = 0; i < items.size(); ++i) {
    const Tensor& p = items[i].second;
    const std::vector<double>* g = p.grad_ptr();
    if (g == nullptr) continue;
    auto& data = const_cast<Tensor&>(p).data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double gj = (*g)[j];
      m[j] = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * gj;
      v[j] = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      data[j] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
    }
  }
}

void Adam::restore(std::int64_t t, std::vector<std::vector<double>> m,
                   std::vector<std::vector<double>> v) {
  if (m.size() != v.size()) {
    throw StateError("optimizer moment buffers disagree in length");
  }
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

TrainResult train_model(PetsModel& model, const WindowSet& ws,
                        const TrainOptions& opts) {
  const auto& cfg = model.config();
  if (cfg.task == Task::Classify) {
    throw InvalidConfig("train_model handles series tasks; classification "
                        "uses train_classifier");
  }
  if (ws.L != cfg.L) {
    throw InvalidConfig("window length does not match the model input");
  }
  if (cfg.task == Task::Forecast && ws.horizon != cfg.horizon) {
    throw InvalidConfig("window horizon does not match the model");
  }
  if (ws.train_starts.empty()) {
    throw InvalidConfig("no training windows");
  }

  Rng rng(opts.seed);
  Adam adam(opts.adam);
  int start_epoch = 0;
  double best = std::numeric_limits<double>::infinity();
  if (!opts.resume_path.empty()) {
    const CheckpointState st =
        load_checkpoint(opts.resume_path, model, &adam, &rng);
    start_epoch = st.epoch;
    best = st.best_val;
  }
  std::ofstream log = open_log(opts.log_path, !opts.resume_path.empty());

  TrainResult result;
  result.best_val = best;
  result.best_epoch = start_epoch;
  std::vector<int> order;

  for (int epoch = start_epoch + 1; epoch <= opts.epochs; ++epoch) {
    // Reshuffled from the canonical order so a resumed run visits the
    // same batches as an uninterrupted one.
    order = ws.train_starts;
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int n_batches = 0;
    for (std::size_t lo = 0; lo < order.size();
         lo += static_cast<std::size_t>(opts.batch_size)) {
      const std::size_t hi = std::min(
          order.size(), lo + static_cast<std::size_t>(opts.batch_size));
      SeriesBatch b = gather_series_batch(model, ws, order, lo, hi,
                                          opts.impute_missing_rate, &rng);
      Tape tape;
      FwdCtx ctx;
      ctx.tape = &tape;
      ctx.train = true;
      ctx.dropout = cfg.dropout;
      ctx.rng = &rng;
      model.params().zero_grads();
      Tensor loss = series_loss(model, b, ctx);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        abort_nonfinite(model, tape, loss, epoch, n_batches);
      }
      tape.backward(loss);
      adam.step(model.params());
      loss_sum += lv;
      ++n_batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / std::max(1, n_batches);
    const double val = eval_series_loss(model, ws, ws.val_starts,
                                        opts.batch_size,
                                        opts.impute_missing_rate,
                                        opts.seed ^ 0x5bf03635u);
    rec.val_loss = std::isnan(val) ? rec.train_loss : val;
    result.history.push_back(rec);
    write_epoch_line(log, rec);
    if (opts.verbose) {
      std::cerr << "epoch " << rec.epoch << " train " << rec.train_loss
                << " val " << rec.val_loss << "\n";
    }
    if (rec.val_loss < result.best_val) {
      result.best_val = rec.val_loss;
      result.best_epoch = epoch;
      if (!opts.checkpoint_path.empty()) {
        save_checkpoint(opts.checkpoint_path, model, &adam, &rng, epoch,
                        result.best_val);
      }
    }
  }
  return result;
}

TrainResult train_classifier(PetsModel& model, const ClassDataset& train_set,
                             const ClassDataset& val_set,
                             const TrainOptions& opts) {
  const auto& cfg = model.config();
  if (cfg.task != Task::Classify) {
    throw InvalidConfig("train_classifier requires a classification model");
  }
  if (train_set.L != cfg.L || train_set.d != cfg.d) {
    throw InvalidConfig("dataset geometry does not match the model");
  }
  if (train_set.n == 0) throw InvalidConfig("no training samples");

  Rng rng(opts.seed);
  Adam adam(opts.adam);
  int start_epoch = 0;
  double best = std::numeric_limits<double>::infinity();
  if (!opts.resume_path.empty()) {
    const CheckpointState st =
        load_checkpoint(opts.resume_path, model, &adam, &rng);
    start_epoch = st.epoch;
    best = st.best_val;
  }
  std::ofstream log = open_log(opts.log_path, !opts.resume_path.empty());

  const std::size_t row_len = static_cast<std::size_t>(cfg.L);
  const std::size_t sample_len = static_cast<std::size_t>(cfg.d) * row_len;
  auto batch_loss = [&](const ClassDataset& ds,
                        const std::vector<int>& idx, std::size_t lo,
                        std::size_t hi, FwdCtx& ctx) {
    std::vector<double> rows;
    std::vector<int> labels;
    rows.reserve((hi - lo) * sample_len);
    for (std::size_t i = lo; i < hi; ++i) {
      const auto off = static_cast<std::size_t>(idx[i]) * sample_len;
      rows.insert(rows.end(), ds.X.begin() + off,
                  ds.X.begin() + off + sample_len);
      labels.push_back(ds.y[static_cast<std::size_t>(idx[i])]);
    }
    const int R = static_cast<int>((hi - lo) * static_cast<std::size_t>(cfg.d));
    Tensor logits = model.forward(rows, R, ctx);
    return cross_entropy_loss(ctx.tape, logits, labels);
  };

  auto eval_loss = [&](const ClassDataset& ds) {
    if (ds.n == 0) return std::numeric_limits<double>::quiet_NaN();
    std::vector<int> idx(static_cast<std::size_t>(ds.n));
    std::iota(idx.begin(), idx.end(), 0);
    double sum = 0.0;
    std::size_t n_batches = 0;
    for (std::size_t lo = 0; lo < idx.size();
         lo += static_cast<std::size_t>(opts.batch_size)) {
      const std::size_t hi =
          std::min(idx.size(), lo + static_cast<std::size_t>(opts.batch_size));
      FwdCtx ctx;
      sum += batch_loss(ds, idx, lo, hi, ctx).item();
      ++n_batches;
    }
    return sum / static_cast<double>(n_batches);
  };

  TrainResult result;
  result.best_val = best;
  result.best_epoch = start_epoch;
  std::vector<int> order(static_cast<std::size_t>(train_set.n));

  for (int epoch = start_epoch + 1; epoch <= opts.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int n_batches = 0;
    for (std::size_t lo = 0; lo < order.size();
         lo += static_cast<std::size_t>(opts.batch_size)) {
      const std::size_t hi = std::min(
          order.size(), lo + static_cast<std::size_t>(opts.batch_size));
      Tape tape;
      FwdCtx ctx;
      ctx.tape = &tape;
      ctx.train = true;
      ctx.dropout = cfg.dropout;
      ctx.rng = &rng;
      model.params().zero_grads();
      Tensor loss = batch_loss(train_set, order, lo, hi, ctx);
      const double lv = loss.item();
      if (!std::isfinite(lv)) {
        abort_nonfinite(model, tape, loss, epoch, n_batches);
      }
      tape.backward(loss);
      adam.step(model.params());
      loss_sum += lv;
      ++n_batches;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / std::max(1, n_batches);
    const double val = eval_loss(val_set);
    rec.val_loss = std::isnan(val) ? rec.train_loss : val;
    result.history.push_back(rec);
    write_epoch_line(log, rec);
    if (opts.verbose) {
      std::cerr << "epoch " << rec.epoch << " train " << rec.train_loss
                << " val " << rec.val_loss << "\n";
    }
    if (rec.val_loss < result.best_val) {
      result.best_val = rec.val_loss;
      result.best_epoch = epoch;
      if (!opts.checkpoint_path.empty()) {
        save_checkpoint(opts.checkpoint_path, model, &adam, &rng, epoch,
                        result.best_val);
      }
    }
  }
  return result;
}

std::vector<double> predict_rows(PetsModel& model,
                                 const std::vector<double>& rows,
                                 std::size_t n_rows) {
  FwdCtx ctx;
  Tensor out = model.forward(rows, static_cast<int>(n_rows), ctx);
  return tensor_rows(out);
}

MetricReport eval_forecast(PetsModel& model, const WindowSet& ws,
                           bool normalized, std::size_t season) {
  const auto& cfg = model.config();
  if (cfg.task != Task::Forecast) {
    throw InvalidConfig("eval_forecast requires a forecasting model");
  }
  if (ws.test_starts.empty()) throw InvalidConfig("no test windows");

  const int H = cfg.horizon;
  std::vector<double> y_all, yhat_all, n2_all;
  std::vector<double> mase_vals, mase_n2_vals;
  int degenerate = 0;
  std::vector<double> in, tgt;
  for (int start : ws.test_starts) {
    gather_window(ws, start, in, &tgt);
    const std::vector<double> pred = predict_rows(
        model, in, static_cast<std::size_t>(ws.d));
    for (int c = 0; c < ws.d; ++c) {
      std::vector<double> y(static_cast<std::size_t>(H));
      std::vector<double> yhat(static_cast<std::size_t>(H));
      std::vector<double> hist(static_cast<std::size_t>(ws.L));
      for (int t = 0; t < H; ++t) {
        const auto i = static_cast<std::size_t>(c) * H + t;
        y[static_cast<std::size_t>(t)] = tgt[i];
        yhat[static_cast<std::size_t>(t)] = pred[i];
      }
      for (int t = 0; t < ws.L; ++t) {
        hist[static_cast<std::size_t>(t)] =
            in[static_cast<std::size_t>(c) * ws.L + t];
      }
      if (!normalized) {
        for (auto& v : y) v = ws.denorm(v, c);
        for (auto& v : yhat) v = ws.denorm(v, c);
        for (auto& v : hist) v = ws.denorm(v, c);
      }
      const std::vector<double> n2 =
          naive2_forecast(hist, static_cast<int>(season), H);
      y_all.insert(y_all.end(), y.begin(), y.end());
      yhat_all.insert(yhat_all.end(), yhat.begin(), yhat.end());
      n2_all.insert(n2_all.end(), n2.begin(), n2.end());
      try {
        mase_vals.push_back(mase(y, yhat, static_cast<int>(season)));
        mase_n2_vals.push_back(mase(y, n2, static_cast<int>(season)));
      } catch (const DegenerateDenominator&) {
        ++degenerate;
      }
    }
  }

  MetricReport rep;
  rep["mse"] = mse(y_all, yhat_all);
  rep["mae"] = mae(y_all, yhat_all);
  rep["rmse"] = rmse(y_all, yhat_all);
  rep["mape"] = mape(y_all, yhat_all);
  rep["smape"] = smape(y_all, yhat_all);
  rep["naive2_smape"] = smape(y_all, n2_all);
  rep["n_windows"] = static_cast<double>(ws.test_starts.size());
  if (!mase_vals.empty()) {
    const double m = std::accumulate(mase_vals.begin(), mase_vals.end(), 0.0) /
                     static_cast<double>(mase_vals.size());
    const double m2 =
        std::accumulate(mase_n2_vals.begin(), mase_n2_vals.end(), 0.0) /
        static_cast<double>(mase_n2_vals.size());
    rep["mase"] = m;
    rep["naive2_mase"] = m2;
    if (rep["naive2_smape"] > 0.0 && m2 > 0.0) {
      rep["owa"] =
          0.5 * (rep["smape"] / rep["naive2_smape"] + m / m2);
    }
  }
  if (degenerate > 0) {
    rep["mase_skipped_windows"] = static_cast<double>(degenerate);
  }
  return rep;
}

MetricReport eval_impute(PetsModel& model, const WindowSet& ws,
                         bool normalized, double missing_rate,
                         std::uint64_t seed) {
  const auto& cfg = model.config();
  if (cfg.task != Task::Impute) {
    throw InvalidConfig("eval_impute requires an imputation model");
  }
  if (ws.test_starts.empty()) throw InvalidConfig("no test windows");

  Rng mask_rng(seed);
  std::vector<double> recon_all, orig_all, observed_all;
  std::vector<double> in;
  for (int start : ws.test_starts) {
    gather_window(ws, start, in, nullptr);
    std::vector<double> miss = draw_missing(in.size(), missing_rate, mask_rng);
    std::vector<double> masked = in;
    for (std::size_t i = 0; i < masked.size(); ++i) {
      if (miss[i] != 0.0) masked[i] = 0.0;
    }
    const std::vector<double> recon =
        predict_rows(model, masked, static_cast<std::size_t>(ws.d));
    for (int c = 0; c < ws.d; ++c) {
      for (int t = 0; t < ws.L; ++t) {
        const auto i = static_cast<std::size_t>(c) * ws.L + t;
        double r = recon[i], o = in[i];
        if (!normalized) {
          r = ws.denorm(r, c);
          o = ws.denorm(o, c);
        }
        recon_all.push_back(r);
        orig_all.push_back(o);
        observed_all.push_back(miss[i] != 0.0 ? 0.0 : 1.0);
      }
    }
  }

  MetricReport rep;
  rep["imputation_mse"] = imputation_loss(recon_all, orig_all, observed_all);
  double abs_sum = 0.0;
  std::size_t n_missing = 0;
  for (std::size_t i = 0; i < recon_all.size(); ++i) {
    if (observed_all[i] == 0.0) {
      abs_sum += std::abs(recon_all[i] - orig_all[i]);
      ++n_missing;
    }
  }
  rep["imputation_mae"] = abs_sum / static_cast<double>(n_missing);
  rep["missing_fraction"] =
      static_cast<double>(n_missing) / static_cast<double>(recon_all.size());
  rep["n_windows"] = static_cast<double>(ws.test_starts.size());
  return rep;
}

MetricReport eval_classify(PetsModel& model, const ClassDataset& ds) {
  const auto& cfg = model.config();
  if (cfg.task != Task::Classify) {
    throw InvalidConfig("eval_classify requires a classification model");
  }
  if (ds.n == 0) throw InvalidInput("empty dataset");
  if (ds.L != cfg.L || ds.d != cfg.d) {
    throw InvalidConfig("dataset geometry does not match the model");
  }

  const std::size_t sample_len =
      static_cast<std::size_t>(cfg.d) * static_cast<std::size_t>(cfg.L);
  std::vector<int> pred_labels;
  const int batch = 32;
  for (int lo = 0; lo < ds.n; lo += batch) {
    const int hi = std::min(ds.n, lo + batch);
    std::vector<double> rows(
        ds.X.begin() + static_cast<std::size_t>(lo) * sample_len,
        ds.X.begin() + static_cast<std::size_t>(hi) * sample_len);
    const std::size_t R =
        static_cast<std::size_t>(hi - lo) * static_cast<std::size_t>(cfg.d);
    const std::vector<double> logits = predict_rows(model, rows, R);
    for (int s = 0; s < hi - lo; ++s) {
      int arg = 0;
      for (int c = 1; c < cfg.n_classes; ++c) {
        const auto base = static_cast<std::size_t>(s) *
                          static_cast<std::size_t>(cfg.n_classes);
        if (logits[base + static_cast<std::size_t>(c)] >
            logits[base + static_cast<std::size_t>(arg)]) {
          arg = c;
        }
      }
      pred_labels.push_back(arg);
    }
  }

  MetricReport rep;
  rep["accuracy"] = accuracy(pred_labels, ds.y);
  if (cfg.n_classes == 2) {
    const auto [p, r, f1] = precision_recall_f1(pred_labels, ds.y);
    rep["precision"] = p;
    rep["recall"] = r;
    rep["f1"] = f1;
  }
  rep["n_samples"] = static_cast<double>(ds.n);
  return rep;
}

std::vector<double> reconstruction_errors(PetsModel& model,
                                          const WindowSet& ws,
                                          const std::vector<double>& series,
                                          std::size_t t0, std::size_t t1) {
  const auto& cfg = model.config();
  const auto L = static_cast<std::size_t>(ws.L);
  if (t1 <= t0 || t1 - t0 < L) {
    throw InvalidConfig("span shorter than one window");
  }
  if (series.size() != static_cast<std::size_t>(ws.T) *
                           static_cast<std::size_t>(ws.d)) {
    throw InvalidInput("series length does not match the window set");
  }
  if (cfg.L != ws.L || cfg.d != ws.d) {
    throw InvalidConfig("window set does not match the model");
  }

  std::vector<std::size_t> anchors;
  for (std::size_t s = t0; s + L <= t1; s += L) anchors.push_back(s);
  if (anchors.empty() || anchors.back() + L < t1) {
    anchors.push_back(t1 - L);
  }

  std::vector<double> err_sum(t1 - t0, 0.0);
  std::vector<double> err_cnt(t1 - t0, 0.0);
  std::vector<double> in(static_cast<std::size_t>(ws.d) * L);
  for (std::size_t s : anchors) {
    for (int c = 0; c < ws.d; ++c) {
      for (std::size_t t = 0; t < L; ++t) {
        in[static_cast<std::size_t>(c) * L + t] =
            series[(s + t) * static_cast<std::size_t>(ws.d) +
                   static_cast<std::size_t>(c)];
      }
    }
    const std::vector<double> recon =
        predict_rows(model, in, static_cast<std::size_t>(ws.d));
    for (std::size_t t = 0; t < L; ++t) {
      double e = 0.0;
      for (int c = 0; c < ws.d; ++c) {
        e += std::abs(recon[static_cast<std::size_t>(c) * L + t] -
                      in[static_cast<std::size_t>(c) * L + t]);
      }
      err_sum[s + t - t0] += e / ws.d;
      err_cnt[s + t - t0] += 1.0;
    }
  }
  for (std::size_t i = 0; i < err_sum.size(); ++i) {
    err_sum[i] /= err_cnt[i];
  }
  return err_sum;
}

MetricReport eval_anomaly(PetsModel& model, const WindowSet& ws,
                          const std::vector<double>& series, double q,
                          const std::vector<int>& truth) {
  const auto& cfg = model.config();
  if (cfg.task != Task::Anomaly) {
    throw InvalidConfig("eval_anomaly requires an anomaly model");
  }
  const auto val_len = static_cast<std::size_t>(ws.val_end - ws.train_end);
  const auto test_len = static_cast<std::size_t>(ws.T - ws.val_end);
  if (val_len < static_cast<std::size_t>(ws.L)) {
    throw InvalidConfig("validation split shorter than one window");
  }
  if (truth.size() != test_len) {
    throw InvalidInput("truth labels must cover the test split");
  }

  const std::vector<double> val_err = reconstruction_errors(
      model, ws, series, static_cast<std::size_t>(ws.train_end),
      static_cast<std::size_t>(ws.val_end));
  const double threshold = quantile(val_err, q);
  const std::vector<double> test_err = reconstruction_errors(
      model, ws, series, static_cast<std::size_t>(ws.val_end),
      static_cast<std::size_t>(ws.T));
  const std::vector<int> flags = anomaly_flags(test_err, threshold);

  const auto [p, r, f1] = precision_recall_f1(flags, truth);
  MetricReport rep;
  rep["threshold"] = threshold;
  rep["precision"] = p;
  rep["recall"] = r;
  rep["f1"] = f1;
  rep["n_flagged"] = static_cast<double>(
      std::count(flags.begin(), flags.end(), 1));
  return rep;
}

void save_checkpoint(const std::string& path, const PetsModel& model,
                     const Adam* opt, const Rng* rng, int epoch,
                     double best_val) {
  json j;
  j["format"] = "pets-checkpoint";
  j["version"] = 1;
  j["epoch"] = epoch;
  j["best_val"] = best_val;
  j["task"] = task_to_string(model.config().task);
  json params = json::object();
  for (const auto& [name, t] : model.params().items()) {
    json p;
    p["shape"] = t.shape();
    p["data"] = t.data();
    params[name] = std::move(p);
  }
  j["params"] = std::move(params);
  if (opt != nullptr) {
    json o;
    o["t"] = opt->steps_taken();
    o["lr"] = opt->config().lr;
    o["beta1"] = opt->config().beta1;
    o["beta2"] = opt->config().beta2;
    o["eps"] = opt->config().eps;
    o["m"] = opt->moment1();
    o["v"] = opt->moment2();
    j["optimizer"] = std::move(o);
  }
  if (rng != nullptr) {
    std::ostringstream ss;
    ss << *rng;
    j["rng"] = ss.str();
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw InvalidInput("cannot open checkpoint file: " + path);
  out << j.dump();
  out << "\n";
  if (!out) throw InvalidInput("failed writing checkpoint: " + path);
}

CheckpointState load_checkpoint(const std::string& path, PetsModel& model,
                                Adam* opt, Rng* rng) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open checkpoint file: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint is not valid JSON: ") +
                     e.what());
  }
  if (!j.is_object() || j.value("format", "") != "pets-checkpoint") {
    throw ParseError("not a checkpoint file: " + path);
  }
  if (j.value("version", 0) != 1) {
    throw ParseError("unsupported checkpoint version");
  }
  if (!j.contains("params") || !j["params"].is_object()) {
    throw ParseError("checkpoint has no parameter map");
  }

  const json& params = j["params"];
  for (const auto& [name, t] : model.params().items()) {
    if (!params.contains(name)) {
      throw ShapeError("checkpoint is missing parameter " + name);
    }
    const json& p = params.at(name);
    const auto shape = p.at("shape").get<std::vector<std::int64_t>>();
    if (shape != t.shape()) {
      throw ShapeError("checkpoint shape mismatch at " + name +
                       ": stored " + shape_str(shape) + ", model " +
                       shape_str(t.shape()));
    }
    auto data = p.at("data").get<std::vector<double>>();
    if (data.size() != static_cast<std::size_t>(t.numel())) {
      throw ShapeError("checkpoint data length mismatch at " + name);
    }
    const_cast<Tensor&>(t).data() = std::move(data);
  }
  for (auto it = params.begin(); it != params.end(); ++it) {
    bool known = false;
    for (const auto& [name, t] : model.params().items()) {
      if (name == it.key()) {
        known = true;
        break;
      }
    }
    if (!known) {
      throw ShapeError("checkpoint contains unknown parameter " + it.key());
    }
  }

  CheckpointState st;
  st.epoch = j.value("epoch", 0);
  st.best_val = j.value("best_val", 0.0);
  if (opt != nullptr && j.contains("optimizer")) {
    const json& o = j["optimizer"];
    opt->restore(o.at("t").get<std::int64_t>(),
                 o.at("m").get<std::vector<std::vector<double>>>(),
                 o.at("v").get<std::vector<std::vector<double>>>());
    st.has_optimizer = true;
  }
  if (rng != nullptr && j.contains("rng")) {
    std::istringstream ss(j["rng"].get<std::string>());
    ss >> *rng;
    if (!ss) throw ParseError("checkpoint RNG state is corrupt");
    st.has_rng = true;
  }
  return st;
}

}  // namespace pets
