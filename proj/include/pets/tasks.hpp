#pragma once

#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "pets/common.hpp"

namespace pets {

/// Named metric values; std::map keeps serialization order stable.
using MetricReport = std::map<std::string, double>;

/// Extra inputs some metrics need.
struct MetricParams {
  /// Seasonal period for MASE and the Naive2 reference.
  int season = 1;
  /// Naive2 forecast for OWA; when empty it must be supplied by the
  /// caller via owa()'s explicit argument.
  std::vector<double> naive2;
};

// All metrics take equal-length arrays and throw InvalidInput when
// empty or mismatched.  Division conventions: SMAPE and MAPE terms
// with a zero denominator contribute 0 and still count toward F.

double mse(const std::vector<double>& y, const std::vector<double>& yhat);
double mae(const std::vector<double>& y, const std::vector<double>& yhat);
double rmse(const std::vector<double>& y, const std::vector<double>& yhat);
/// MAPE = (100/F) * sum |y - yhat| / |y|.
double mape(const std::vector<double>& y, const std::vector<double>& yhat);
/// SMAPE = (200/F) * sum |y - yhat| / (|y| + |yhat|), range [0, 200].
double smape(const std::vector<double>& y, const std::vector<double>& yhat);
/// MASE with the in-window seasonal denominator
///   mean |y_t - y_{t-s}| over t = s..F-1.
/// Requires season < F; a constant (zero-denominator) window throws
/// DegenerateDenominator.
double mase(const std::vector<double>& y, const std::vector<double>& yhat,
            int season);
/// OWA = 0.5 * (SMAPE / SMAPE_naive2 + MASE / MASE_naive2), the
/// Naive2 columns evaluated on the same target.
double owa(const std::vector<double>& y, const std::vector<double>& yhat,
           const std::vector<double>& naive2_pred, int season);

/// Single-name dispatch over the metric suite: mse, mae, rmse, mape,
/// smape, mase, owa.
double compute_metric(const std::string& name, const std::vector<double>& y,
                      const std::vector<double>& yhat,
                      const MetricParams& params = {});

/// Seasonal-naive forecast: repeats the last season of the history
/// for `horizon` steps; season 1 repeats the last value.
std::vector<double> naive2_forecast(const std::vector<double>& history,
                                    int season, int horizon);

/// Binary-classification counts over {0,1} labels.  Precision with no
/// positive predictions, and F1 with P + R = 0, fall back to 0.
std::tuple<double, double, double> precision_recall_f1(
    const std::vector<int>& pred_labels,
    const std::vector<int>& true_labels);

double accuracy(const std::vector<int>& pred_labels,
                const std::vector<int>& true_labels);

/// MSE over the missing positions only; mask marks observed = 1,
/// missing = 0.  An all-ones mask leaves nothing to impute and throws
/// InvalidInput.
double imputation_loss(const std::vector<double>& recon,
                       const std::vector<double>& original,
                       const std::vector<double>& mask);

/// Empirical quantile by nearest rank on a copy of the values.
/// q must lie in (0, 1).
double quantile(std::vector<double> values, double q);

/// Pointwise anomaly labels: 1 where the reconstruction error exceeds
/// the threshold.
std::vector<int> anomaly_flags(const std::vector<double>& errors,
                               double threshold);

}  // namespace pets
