// Independent reference implementations the tests check the library
// against.  Everything here is written as plainly as possible (direct
// O(n^2) sums, explicit loops) and shares no code with the library.
#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <stdexcept>
#include <vector>

#include "pets/tensor.hpp"

namespace oracle {

inline std::vector<std::complex<double>> naive_dft(
    const std::vector<std::complex<double>>& x) {
  const std::size_t n = x.size();
  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::complex<double> acc(0.0, 0.0);
    for (std::size_t t = 0; t < n; ++t) {
      const double ang = -2.0 * M_PI * static_cast<double>(k) *
                         static_cast<double>(t) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    out[k] = acc;
  }
  return out;
}

inline int brute_ami(const std::vector<double>& e, double mu) {
  double total = 0.0;
  for (double v : e) total += v;
  double cum = 0.0;
  for (std::size_t b = 0; b < e.size(); ++b) {
    cum += e[b];
    if (cum >= mu * total) return static_cast<int>(b) + 1;
  }
  return static_cast<int>(e.size());
}

inline int window_count(int split_len, int need, int stride) {
  if (split_len < need) return 0;
  int count = 0;
  for (int s = 0; s + need <= split_len; s += stride) ++count;
  return count;
}

// Reference metrics, straight from their definitions.

inline double o_mse(const std::vector<double>& y,
                    const std::vector<double>& yh) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    s += (y[i] - yh[i]) * (y[i] - yh[i]);
  }
  return s / static_cast<double>(y.size());
}

inline double o_mae(const std::vector<double>& y,
                    const std::vector<double>& yh) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += std::fabs(y[i] - yh[i]);
  return s / static_cast<double>(y.size());
}

inline double o_rmse(const std::vector<double>& y,
                     const std::vector<double>& yh) {
  return std::sqrt(o_mse(y, yh));
}

inline double o_mape(const std::vector<double>& y,
                     const std::vector<double>& yh) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (std::fabs(y[i]) > 0.0) s += std::fabs(y[i] - yh[i]) / std::fabs(y[i]);
  }
  return 100.0 * s / static_cast<double>(y.size());
}

inline double o_smape(const std::vector<double>& y,
                      const std::vector<double>& yh) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double den = std::fabs(y[i]) + std::fabs(yh[i]);
    if (den > 0.0) s += std::fabs(y[i] - yh[i]) / den;
  }
  return 200.0 * s / static_cast<double>(y.size());
}

inline double o_mase(const std::vector<double>& y,
                     const std::vector<double>& yh, int season) {
  const int F = static_cast<int>(y.size());
  double den = 0.0;
  for (int t = season; t < F; ++t) {
    den += std::fabs(y[static_cast<std::size_t>(t)] -
                     y[static_cast<std::size_t>(t - season)]);
  }
  den /= static_cast<double>(F - season);
  if (den == 0.0) throw std::runtime_error("degenerate");
  double num = 0.0;
  for (int t = 0; t < F; ++t) {
    num += std::fabs(y[static_cast<std::size_t>(t)] -
                     yh[static_cast<std::size_t>(t)]);
  }
  return num / static_cast<double>(F) / den;
}

inline double o_accuracy(const std::vector<int>& pred,
                         const std::vector<int>& truth) {
  int hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == truth[i]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

struct Prf {
  double p, r, f1;
};

inline Prf o_prf(const std::vector<int>& pred, const std::vector<int>& truth) {
  int tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1 && truth[i] == 1) ++tp;
    if (pred[i] == 1 && truth[i] == 0) ++fp;
    if (pred[i] == 0 && truth[i] == 1) ++fn;
  }
  Prf o{};
  o.p = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  o.r = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  o.f1 = (o.p + o.r) > 0.0 ? 2.0 * o.p * o.r / (o.p + o.r) : 0.0;
  return o;
}

/// Central finite-difference check.  `leaves` are the tensors whose
/// gradients are verified (requires_grad must already be set); `build`
/// reruns the whole computation from their current data and returns
/// the scalar loss.  Returns the worst error
///   |ad - fd| / max(1, |ad| + |fd|)
/// over every element of every leaf.
inline double gradcheck(const std::vector<pets::Tensor>& leaves,
                        const std::function<pets::Tensor(pets::Tape*)>& build,
                        double h = 1e-5) {
  for (const auto& leaf : leaves) {
    const_cast<pets::Tensor&>(leaf).zero_grad();
  }
  pets::Tape tape;
  pets::Tensor loss = build(&tape);
  tape.backward(loss);

  std::vector<std::vector<double>> ad;
  ad.reserve(leaves.size());
  for (const auto& leaf : leaves) {
    ad.push_back(const_cast<pets::Tensor&>(leaf).grad());
  }

  double worst = 0.0;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    auto& data = const_cast<pets::Tensor&>(leaves[li]).data();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double saved = data[i];
      data[i] = saved + h;
      const double lp = build(nullptr).item();
      data[i] = saved - h;
      const double lm = build(nullptr).item();
      data[i] = saved;
      const double fd = (lp - lm) / (2.0 * h);
      const double g = ad[li][i];
      const double err =
          std::fabs(g - fd) / std::max(1.0, std::fabs(g) + std::fabs(fd));
      worst = std::max(worst, err);
    }
  }
  return worst;
}

inline std::vector<double> random_vec(std::size_t n, pets::Rng& rng,
                                      double scale = 1.0) {
  std::uniform_real_distribution<double> uni(-scale, scale);
  std::vector<double> v(n);
  for (auto& x : v) x = uni(rng);
  return v;
}

inline pets::Tensor random_tensor(std::vector<std::int64_t> shape,
                                  pets::Rng& rng, double scale = 1.0,
                                  bool req = true) {
  std::size_t n = 1;
  for (auto s : shape) n *= static_cast<std::size_t>(s);
  pets::Tensor t = pets::Tensor::from(std::move(shape), random_vec(n, rng,
                                                                   scale));
  t.set_requires_grad(req);
  return t;
}

}  // namespace oracle
