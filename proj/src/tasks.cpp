#include "pets/tasks.hpp"

#include <algorithm>
#include <cmath>

namespace pets {

namespace {

void check_pair(const std::vector<double>& y,
                const std::vector<double>& yhat, const char* where) {
  if (y.empty()) {
    throw InvalidInput(std::string(where) + ": empty arrays");
  }
  if (y.size() != yhat.size()) {
    throw ShapeError(std::string(where) + ": lengths " +
                     std::to_string(y.size()) + " and " +
                     std::to_string(yhat.size()) + " differ");
  }
}

}  // namespace

double mse(const std::vector<double>& y, const std::vector<double>& yhat) {
  check_pair(y, yhat, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double d = y[i] - yhat[i];
    acc += d * d;
  }
  return acc / static_cast<double>(y.size());
}

double mae(const std::vector<double>& y, const std::vector<double>& yhat) {
  check_pair(y, yhat, "mae");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += std::abs(y[i] - yhat[i]);
  return acc / static_cast<double>(y.size());
}

double rmse(const std::vector<double>& y, const std::vector<double>& yhat) {
  return std::sqrt(mse(y, yhat));
}

double mape(const std::vector<double>& y, const std::vector<double>& yhat) {
  check_pair(y, yhat, "mape");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double den = std::abs(y[i]);
    if (den > 0.0) acc += std::abs(y[i] - yhat[i]) / den;
  }
  return 100.0 * acc / static_cast<double>(y.size());
}

double smape(const std::vector<double>& y, const std::vector<double>& yhat) {
  check_pair(y, yhat, "smape");
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double den = std::abs(y[i]) + std::abs(yhat[i]);
    if (den > 0.0) acc += std::abs(y[i] - yhat[i]) / den;
  }
  return 200.0 * acc / static_cast<double>(y.size());
}

double mase(const std::vector<double>& y, const std::vector<double>& yhat,
            int season) {
  check_pair(y, yhat, "mase");
  const int F = static_cast<int>(y.size());
  if (season < 1 || season >= F) {
    throw InvalidInput("mase: season " + std::to_string(season) +
                       " must lie in [1, F) with F=" + std::to_string(F));
  }
  double den = 0.0;
  for (int t = season; t < F; ++t) {
    den += std::abs(y[static_cast<std::size_t>(t)] -
                    y[static_cast<std::size_t>(t - season)]);
  }
  den /= static_cast<double>(F - season);
  if (!(den > 0.0)) {
    throw DegenerateDenominator(
        "mase: seasonal differences of the target are all zero");
  }
  return mae(y, yhat) / den;
}

double owa(const std::vector<double>& y, const std::vector<double>& yhat,
           const std::vector<double>& naive2_pred, int season) {
  check_pair(y, yhat, "owa");
  check_pair(y, naive2_pred, "owa");
  const double s_model = smape(y, yhat);
  const double s_ref = smape(y, naive2_pred);
  const double m_model = mase(y, yhat, season);
  const double m_ref = mase(y, naive2_pred, season);
  if (!(s_ref > 0.0) || !(m_ref > 0.0)) {
    throw DegenerateDenominator("owa: Naive2 reference error is zero");
  }
  return 0.5 * (s_model / s_ref + m_model / m_ref);
}

double compute_metric(const std::string& name, const std::vector<double>& y,
                      const std::vector<double>& yhat,
                      const MetricParams& params) {
  if (name == "mse") return mse(y, yhat);
  if (name == "mae") return mae(y, yhat);
  if (name == "rmse") return rmse(y, yhat);
  if (name == "mape") return mape(y, yhat);
  if (name == "smape") return smape(y, yhat);
  if (name == "mase") return mase(y, yhat, params.season);
  if (name == "owa") {
    if (params.naive2.empty()) {
      throw InvalidInput("compute_metric: owa needs a naive2 forecast");
    }
    return owa(y, yhat, params.naive2, params.season);
  }
  throw InvalidInput("compute_metric: unknown metric '" + name + "'");
}

std::vector<double> naive2_forecast(const std::vector<double>& history,
                                    int season, int horizon) {
  if (season < 1) {
    throw InvalidInput("naive2_forecast: season must be >= 1");
  }
  if (horizon < 1) {
    throw InvalidInput("naive2_forecast: horizon must be >= 1");
  }
  if (static_cast<int>(history.size()) < season) {
    throw InvalidInput("naive2_forecast: history of length " +
                       std::to_string(history.size()) +
                       " is shorter than season " + std::to_string(season));
  }
  std::vector<double> out(static_cast<std::size_t>(horizon));
  const std::size_t T = history.size();
  for (int i = 0; i < horizon; ++i) {
    out[static_cast<std::size_t>(i)] =
        history[T - static_cast<std::size_t>(season) +
                static_cast<std::size_t>(i % season)];
  }
  return out;
}

std::tuple<double, double, double> precision_recall_f1(
    const std::vector<int>& pred_labels,
    const std::vector<int>& true_labels) {
  if (pred_labels.size() != true_labels.size()) {
    throw ShapeError("precision_recall_f1: lengths " +
                     std::to_string(pred_labels.size()) + " and " +
                     std::to_string(true_labels.size()) + " differ");
  }
  if (pred_labels.empty()) {
    throw InvalidInput("precision_recall_f1: empty labels");
  }
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred_labels.size(); ++i) {
    const bool p = pred_labels[i] != 0;
    const bool t = true_labels[i] != 0;
    if (p && t) ++tp;
    else if (p && !t) ++fp;
    else if (!p && t) ++fn;
  }
  const double prec = (tp + fp) > 0 ? tp / (tp + fp) : 0.0;
  const double rec = (tp + fn) > 0 ? tp / (tp + fn) : 0.0;
  const double f1 = (prec + rec) > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  return {prec, rec, f1};
}

double accuracy(const std::vector<int>& pred_labels,
                const std::vector<int>& true_labels) {
  if (pred_labels.size() != true_labels.size()) {
    throw ShapeError("accuracy: lengths " +
                     std::to_string(pred_labels.size()) + " and " +
                     std::to_string(true_labels.size()) + " differ");
  }
  if (pred_labels.empty()) throw InvalidInput("accuracy: empty labels");
  double hit = 0;
  for (std::size_t i = 0; i < pred_labels.size(); ++i) {
    if (pred_labels[i] == true_labels[i]) ++hit;
  }
  return hit / static_cast<double>(pred_labels.size());
}

double imputation_loss(const std::vector<double>& recon,
                       const std::vector<double>& original,
                       const std::vector<double>& mask) {
  check_pair(recon, original, "imputation_loss");
  check_pair(recon, mask, "imputation_loss");
  double acc = 0.0;
  double count = 0.0;
  for (std::size_t i = 0; i < recon.size(); ++i) {
    if (mask[i] == 0.0) {
      const double d = recon[i] - original[i];
      acc += d * d;
      count += 1.0;
    }
  }
  if (count == 0.0) {
    throw InvalidInput("imputation_loss: mask marks nothing as missing");
  }
  return acc / count;
}

double quantile(std::vector<double> values, double q) {
  if (!(q > 0.0 && q < 1.0)) {
    throw InvalidConfig("quantile: q " + std::to_string(q) +
                        " outside (0, 1)");
  }
  if (values.empty()) throw InvalidInput("quantile: empty values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  std::size_t idx = static_cast<std::size_t>(
      std::ceil(q * static_cast<double>(n))) ;
  if (idx == 0) idx = 1;
  if (idx > n) idx = n;
  return values[idx - 1];
}

std::vector<int> anomaly_flags(const std::vector<double>& errors,
                               double threshold) {
  std::vector<int> out(errors.size(), 0);
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (errors[i] > threshold) out[i] = 1;
  }
  return out;
}

}  // namespace pets
