#include "pets/sdaq.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <tuple>

#include "pets/fft.hpp"

namespace pets {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr int kCalibrationLength = 96;

void check_series(const std::vector<double>& x, int C, int L,
                  const char* where) {
  if (C < 1 || L < 2) {
    throw InvalidInput(std::string(where) + ": need C >= 1 and L >= 2, got C=" +
                       std::to_string(C) + " L=" + std::to_string(L));
  }
  if (static_cast<std::int64_t>(x.size()) !=
      static_cast<std::int64_t>(C) * L) {
    throw ShapeError(std::string(where) + ": " + std::to_string(x.size()) +
                     " samples for C=" + std::to_string(C) +
                     " L=" + std::to_string(L));
  }
  for (double v : x) {
    if (!std::isfinite(v)) {
      throw InvalidInput(std::string(where) +
                         ": input contains a non-finite sample");
    }
  }
}

/// Antiderivative of the Haar mother: integral of psi from -inf to u.
double haar_antideriv(double u) {
  if (u < -0.5 || u >= 0.5) return 0.0;
  if (u < 0.0) return u + 0.5;
  return 0.5 - u;
}

double phi_vlnv(double v) {
  if (v == 0.0) return 0.0;
  return v * std::log(std::abs(v)) - v;
}

/// Antiderivative of the Hilbert transform of the Haar mother.
double hilbert_antideriv(double u) {
  return (phi_vlnv(u + 0.5) - 2.0 * phi_vlnv(u) + phi_vlnv(u - 0.5)) / kPi;
}

/// Haar quadrature-pair kernel integrated exactly over the unit sample
/// cell centred at offset delta = s - t, at scale a.  The real part is
/// the in-phase (Hilbert companion) component, the imaginary part the
/// Haar step itself, so Re(W) responds in phase to sinusoids.
std::complex<double> haar_cell(double delta, double a) {
  const double lo = (delta - 0.5) / a;
  const double hi = (delta + 0.5) / a;
  const double odd = a * (haar_antideriv(hi) - haar_antideriv(lo));
  const double even = a * (hilbert_antideriv(hi) - hilbert_antideriv(lo));
  return {even, odd};
}

/// Point-sampled complex Morlet (carrier angular frequency 5),
/// conjugated so the inner product measures correlation with the
/// mother.
std::complex<double> morlet_cell(double delta, double a) {
  const double u = delta / a;
  const double env = std::exp(-0.5 * u * u);
  return {env * std::cos(5.0 * u), -env * std::sin(5.0 * u)};
}

std::vector<double> band_frequencies(int lambda) {
  std::vector<double> f(static_cast<std::size_t>(lambda));
  for (int j = 1; j <= lambda; ++j) {
    f[static_cast<std::size_t>(j - 1)] =
        static_cast<double>(j) * 0.5 / static_cast<double>(lambda);
  }
  return f;
}

/// 1-based band owning positive DFT bin p of a length-L signal.
int bucket_of_bin(int p, int bins, int lambda) {
  return static_cast<int>(
      (static_cast<std::int64_t>(p) * lambda + bins - 1) / bins);
}

std::vector<double> column_energies(const Spectrogram& spec) {
  std::vector<double> col(static_cast<std::size_t>(spec.lambda), 0.0);
  for (int c = 0; c < spec.C; ++c)
    for (int i = 0; i < spec.L; ++i)
      for (int j = 0; j < spec.lambda; ++j)
        col[static_cast<std::size_t>(j)] += spec.value(c, i, j);
  return col;
}

}  // namespace

void SdaqConfig::validate() const {
  if (lambda < 1) {
    throw InvalidConfig("SdaqConfig: lambda must be >= 1, got " +
                        std::to_string(lambda));
  }
  if (mus.empty()) {
    throw InvalidConfig("SdaqConfig: at least one threshold is required");
  }
  double prev = 0.0;
  for (double mu : mus) {
    if (!(mu > 0.0 && mu < 1.0)) {
      throw InvalidConfig("SdaqConfig: threshold " + std::to_string(mu) +
                          " is outside (0, 1)");
    }
    if (mu <= prev) {
      throw InvalidConfig("SdaqConfig: thresholds must be strictly "
                          "increasing");
    }
    prev = mu;
  }
  if (static_cast<int>(mus.size()) + 1 > lambda) {
    throw InvalidConfig("SdaqConfig: " + std::to_string(mus.size() + 1) +
                        " sub-bands cannot fit in " + std::to_string(lambda) +
                        " bands");
  }
  if (icwt_calibration < 0.0) {
    throw InvalidConfig("SdaqConfig: calibration must be non-negative");
  }
}

double wavelet_center_frequency(Wavelet w) {
  switch (w) {
    case Wavelet::Haar:
      return 1.0;
    case Wavelet::Morlet:
      return 0.8125;
  }
  throw InvalidConfig("wavelet_center_frequency: unknown wavelet");
}

Spectrogram cwt(const std::vector<double>& x, int C, int L,
                const SdaqConfig& cfg) {
  cfg.validate();
  check_series(x, C, L, "cwt");
  if (L < 4) {
    throw InvalidInput("cwt: need L >= 4, got L=" + std::to_string(L));
  }
  const int lambda = cfg.lambda;
  const double fc = wavelet_center_frequency(cfg.wavelet);

  Spectrogram spec;
  spec.backend = Backend::CWT;
  spec.wavelet = cfg.wavelet;
  spec.C = C;
  spec.L = L;
  spec.lambda = lambda;
  spec.freq_axis = band_frequencies(lambda);
  spec.scales.resize(static_cast<std::size_t>(lambda));
  for (int j = 0; j < lambda; ++j) {
    spec.scales[static_cast<std::size_t>(j)] =
        fc / spec.freq_axis[static_cast<std::size_t>(j)];
  }
  spec.mean_offsets.assign(static_cast<std::size_t>(C), 0.0);
  spec.values.assign(static_cast<std::size_t>(C) * L * lambda, 0.0);
  spec.coeffs.assign(static_cast<std::size_t>(C) * L * lambda, {0.0, 0.0});

  std::vector<double> xc(static_cast<std::size_t>(L));
  std::vector<std::complex<double>> kernel(
      static_cast<std::size_t>(2 * L - 1));
  for (int c = 0; c < C; ++c) {
    double mean = 0.0;
    for (int t = 0; t < L; ++t) mean += x[static_cast<std::size_t>(c * L + t)];
    mean /= static_cast<double>(L);
    spec.mean_offsets[static_cast<std::size_t>(c)] = mean;
    for (int t = 0; t < L; ++t) {
      xc[static_cast<std::size_t>(t)] =
          x[static_cast<std::size_t>(c * L + t)] - mean;
    }
    for (int j = 0; j < lambda; ++j) {
      const double a = spec.scales[static_cast<std::size_t>(j)];
      for (int delta = -(L - 1); delta <= L - 1; ++delta) {
        kernel[static_cast<std::size_t>(delta + L - 1)] =
            cfg.wavelet == Wavelet::Haar
                ? haar_cell(static_cast<double>(delta), a)
                : morlet_cell(static_cast<double>(delta), a);
      }
      for (int t = 0; t < L; ++t) {
        std::complex<double> acc{0.0, 0.0};
        for (int s = 0; s < L; ++s) {
          acc += xc[static_cast<std::size_t>(s)] *
                 kernel[static_cast<std::size_t>(s - t + L - 1)];
        }
        const std::size_t idx =
            (static_cast<std::size_t>(c) * L + t) * lambda + j;
        spec.coeffs[idx] = acc;
        spec.values[idx] = std::abs(acc);
      }
    }
  }
  return spec;
}

Spectrogram fft_spectrogram(const std::vector<double>& x, int C, int L,
                            const SdaqConfig& cfg) {
  cfg.validate();
  check_series(x, C, L, "fft_spectrogram");
  const int lambda = cfg.lambda;
  const int bins = L / 2;
  if (bins < 1) {
    throw InvalidInput("fft_spectrogram: series too short for a spectrum");
  }

  Spectrogram spec;
  spec.backend = Backend::FFT;
  spec.wavelet = cfg.wavelet;
  spec.C = C;
  spec.L = L;
  spec.lambda = lambda;
  spec.freq_axis = band_frequencies(lambda);
  spec.mean_offsets.assign(static_cast<std::size_t>(C), 0.0);
  spec.values.assign(static_cast<std::size_t>(C) * L * lambda, 0.0);
  spec.spectrum.assign(static_cast<std::size_t>(C) * L, {0.0, 0.0});

  std::vector<double> xc(static_cast<std::size_t>(L));
  for (int c = 0; c < C; ++c) {
    double mean = 0.0;
    for (int t = 0; t < L; ++t) mean += x[static_cast<std::size_t>(c * L + t)];
    mean /= static_cast<double>(L);
    spec.mean_offsets[static_cast<std::size_t>(c)] = mean;
    for (int t = 0; t < L; ++t) {
      xc[static_cast<std::size_t>(t)] =
          x[static_cast<std::size_t>(c * L + t)] - mean;
    }
    auto X = rfft(xc);
    std::copy(X.begin(), X.end(),
              spec.spectrum.begin() + static_cast<std::size_t>(c) * L);

    std::vector<double> band_amp(static_cast<std::size_t>(lambda), 0.0);
    band_amp[0] += std::abs(X[0]) / static_cast<double>(L);
    for (int p = 1; p <= bins; ++p) {
      const int j = bucket_of_bin(p, bins, lambda);
      const bool nyquist = (L % 2 == 0 && p == bins);
      const double amp =
          (nyquist ? 1.0 : 2.0) * std::abs(X[static_cast<std::size_t>(p)]) /
          static_cast<double>(L);
      band_amp[static_cast<std::size_t>(j - 1)] += amp;
    }
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < lambda; ++j)
        spec.values[(static_cast<std::size_t>(c) * L + i) * lambda + j] =
            band_amp[static_cast<std::size_t>(j)];
  }
  return spec;
}

Spectrogram spectrogram(const std::vector<double>& x, int C, int L,
                        const SdaqConfig& cfg) {
  return cfg.backend == Backend::CWT ? cwt(x, C, L, cfg)
                                     : fft_spectrogram(x, C, L, cfg);
}

int ami(const std::vector<double>& column_energy, double mu) {
  if (!(mu > 0.0 && mu < 1.0)) {
    throw InvalidInput("ami: threshold " + std::to_string(mu) +
                       " is outside (0, 1)");
  }
  if (column_energy.empty()) {
    throw InvalidInput("ami: empty energy vector");
  }
  double total = 0.0;
  for (double v : column_energy) {
    if (v < 0.0) throw InvalidInput("ami: negative column energy");
    total += v;
  }
  if (!(total > 0.0)) {
    throw DegenerateSpectrum("ami: spectrogram carries no energy");
  }
  double cum = 0.0;
  const double target = mu * total;
  for (std::size_t j = 0; j < column_energy.size(); ++j) {
    cum += column_energy[j];
    if (cum >= target) return static_cast<int>(j) + 1;
  }
  return static_cast<int>(column_energy.size());
}

BandPartition partition_bands(const Spectrogram& spec,
                              const std::vector<double>& mus) {
  const int lambda = spec.lambda;
  const int K = static_cast<int>(mus.size()) + 1;
  if (K > lambda) {
    throw InvalidConfig("partition_bands: " + std::to_string(K) +
                        " sub-bands cannot fit in " + std::to_string(lambda) +
                        " bands");
  }
  const auto col = column_energies(spec);
  const double total = std::accumulate(col.begin(), col.end(), 0.0);

  BandPartition part;
  part.boundaries.assign(static_cast<std::size_t>(K) + 1, 1);
  part.boundaries[static_cast<std::size_t>(K)] = lambda + 1;
  if (total <= 0.0) {
    // A blank image (e.g. a constant series) has no energy to route;
    // fall back to evenly spread bands so K patterns still exist.
    for (int k = 1; k < K; ++k) {
      int b = 1 + (k * lambda) / K;
      b = std::max(b, part.boundaries[static_cast<std::size_t>(k - 1)] + 1);
      b = std::min(b, lambda + 1 - (K - k));
      part.boundaries[static_cast<std::size_t>(k)] = b;
    }
    return part;
  }
  for (int k = 1; k < K; ++k) {
    const double mu = mus[static_cast<std::size_t>(k - 1)];
    int b = ami(col, mu) + 1;
    b = std::max(b, part.boundaries[static_cast<std::size_t>(k - 1)] + 1);
    b = std::min(b, lambda + 1 - (K - k));
    part.boundaries[static_cast<std::size_t>(k)] = b;
  }
  return part;
}

Spectrogram mask_subband(const Spectrogram& spec, const BandPartition& part,
                         int k) {
  if (k < 1 || k > part.K()) {
    throw InvalidInput("mask_subband: sub-band " + std::to_string(k) +
                       " outside [1, " + std::to_string(part.K()) + "]");
  }
  const int lo = part.boundaries[static_cast<std::size_t>(k - 1)];
  const int hi = part.boundaries[static_cast<std::size_t>(k)];

  Spectrogram out = spec;
  for (int c = 0; c < spec.C; ++c)
    for (int i = 0; i < spec.L; ++i)
      for (int j = 1; j <= spec.lambda; ++j) {
        if (j >= lo && j < hi) continue;
        const std::size_t idx =
            (static_cast<std::size_t>(c) * spec.L + i) * spec.lambda +
            (j - 1);
        out.values[idx] = 0.0;
        if (!out.coeffs.empty()) out.coeffs[idx] = {0.0, 0.0};
      }

  if (spec.backend == Backend::FFT) {
    if (spec.spectrum.size() != static_cast<std::size_t>(spec.C) * spec.L) {
      throw StateError("mask_subband: spectrogram is missing its spectrum");
    }
    const int L = spec.L;
    const int bins = L / 2;
    for (int c = 0; c < spec.C; ++c) {
      auto* S = out.spectrum.data() + static_cast<std::size_t>(c) * L;
      if (!(1 >= lo && 1 < hi)) S[0] = {0.0, 0.0};
      for (int p = 1; p <= bins; ++p) {
        const int j = bucket_of_bin(p, bins, spec.lambda);
        if (j >= lo && j < hi) continue;
        S[p] = {0.0, 0.0};
        if (p != 0 && p != L - p) S[L - p] = {0.0, 0.0};
      }
    }
  }

  if (k >= 2) {
    std::fill(out.mean_offsets.begin(), out.mean_offsets.end(), 0.0);
  }
  return out;
}

std::vector<double> icwt(const Spectrogram& spec, const SdaqConfig& cfg) {
  const auto cells =
      static_cast<std::size_t>(spec.C) * spec.L * spec.lambda;
  if (spec.mean_offsets.size() != static_cast<std::size_t>(spec.C)) {
    throw StateError("icwt: spectrogram is missing its channel means");
  }
  if (spec.backend == Backend::FFT) {
    if (spec.spectrum.size() != static_cast<std::size_t>(spec.C) * spec.L) {
      throw StateError("icwt: spectrogram is missing its spectrum");
    }
  } else if (spec.coeffs.size() != cells ||
             spec.scales.size() != static_cast<std::size_t>(spec.lambda)) {
    throw StateError(
        "icwt: spectrogram is missing its complex coefficients");
  }
  std::vector<double> y(static_cast<std::size_t>(spec.C) * spec.L, 0.0);

  if (spec.backend == Backend::FFT) {
    for (int c = 0; c < spec.C; ++c) {
      std::vector<std::complex<double>> S(
          spec.spectrum.begin() + static_cast<std::size_t>(c) * spec.L,
          spec.spectrum.begin() + static_cast<std::size_t>(c + 1) * spec.L);
      auto yc = irfft(S);
      for (int t = 0; t < spec.L; ++t) {
        y[static_cast<std::size_t>(c * spec.L + t)] =
            yc[static_cast<std::size_t>(t)] +
            spec.mean_offsets[static_cast<std::size_t>(c)];
      }
    }
    return y;
  }

  double cal = cfg.icwt_calibration;
  if (cal <= 0.0) {
    SdaqConfig probe = cfg;
    probe.backend = Backend::CWT;
    probe.lambda = spec.lambda;
    probe.wavelet = spec.wavelet;
    probe.icwt_calibration = 0.0;
    cal = calibrate_icwt(probe);
  }
  for (int c = 0; c < spec.C; ++c) {
    for (int t = 0; t < spec.L; ++t) {
      double acc = 0.0;
      for (int j = 0; j < spec.lambda; ++j) {
        const std::size_t idx =
            (static_cast<std::size_t>(c) * spec.L + t) * spec.lambda + j;
        acc += spec.coeffs[idx].real() /
               std::sqrt(spec.scales[static_cast<std::size_t>(j)]);
      }
      y[static_cast<std::size_t>(c * spec.L + t)] =
          cal * acc + spec.mean_offsets[static_cast<std::size_t>(c)];
    }
  }
  return y;
}

double calibrate_icwt(const SdaqConfig& cfg) {
  cfg.validate();
  if (cfg.backend == Backend::FFT) return 1.0;

  static std::mutex cache_mutex;
  static std::map<std::pair<int, int>, double> cache;
  const std::pair<int, int> key{static_cast<int>(cfg.wavelet), cfg.lambda};
  {
    std::lock_guard<std::mutex> lock(cache_mutex);
    auto it = cache.find(key);
    if (it != cache.end()) return it->second;
  }

  SdaqConfig raw = cfg;
  raw.icwt_calibration = 1.0;
  const int L = kCalibrationLength;
  double num = 0.0, den = 0.0;
  for (int m = 0; m < cfg.lambda; ++m) {
    const double f = (static_cast<double>(m) + 0.5) * 0.5 /
                     static_cast<double>(cfg.lambda);
    std::vector<double> probe(static_cast<std::size_t>(L));
    double mean = 0.0;
    for (int t = 0; t < L; ++t) {
      probe[static_cast<std::size_t>(t)] = std::sin(2.0 * kPi * f * t);
      mean += probe[static_cast<std::size_t>(t)];
    }
    mean /= static_cast<double>(L);
    auto spec = cwt(probe, 1, L, raw);
    std::fill(spec.mean_offsets.begin(), spec.mean_offsets.end(), 0.0);
    const auto recon = icwt(spec, raw);
    for (int t = 0; t < L; ++t) {
      const double target = probe[static_cast<std::size_t>(t)] - mean;
      num += recon[static_cast<std::size_t>(t)] * target;
      den += recon[static_cast<std::size_t>(t)] *
             recon[static_cast<std::size_t>(t)];
    }
  }
  if (!(den > 0.0)) {
    throw DegenerateSpectrum(
        "calibrate_icwt: probes produced no reconstruction energy");
  }
  const double c = num / den;
  {
    std::lock_guard<std::mutex> lock(cache_mutex);
    cache[key] = c;
  }
  return c;
}

DecoupledSeries sdaq_decompose(const std::vector<double>& x, int C, int L,
                               const SdaqConfig& cfg) {
  cfg.validate();
  check_series(x, C, L, "sdaq_decompose");
  const auto spec = spectrogram(x, C, L, cfg);
  const auto part = partition_bands(spec, cfg.mus);
  const int K = part.K();

  SdaqConfig inv = cfg;
  if (cfg.backend == Backend::CWT && inv.icwt_calibration <= 0.0) {
    inv.icwt_calibration = calibrate_icwt(cfg);
  }

  DecoupledSeries out;
  out.K = K;
  out.C = C;
  out.L = L;
  out.boundaries = part.boundaries;
  out.patterns.assign(static_cast<std::size_t>(K) * C * L, 0.0);
  out.band_energy.assign(static_cast<std::size_t>(K), 0.0);

  const auto col = column_energies(spec);
  double total = 0.0;
  for (double v : col) total += v;

  for (int k = 1; k <= K; ++k) {
    const auto masked = mask_subband(spec, part, k);
    const auto y = icwt(masked, inv);
    std::copy(y.begin(), y.end(),
              out.patterns.begin() +
                  static_cast<std::size_t>(k - 1) * C * L);
    double band = 0.0;
    for (int j = part.boundaries[static_cast<std::size_t>(k - 1)];
         j < part.boundaries[static_cast<std::size_t>(k)]; ++j) {
      band += col[static_cast<std::size_t>(j - 1)];
    }
    out.band_energy[static_cast<std::size_t>(k - 1)] =
        total > 0.0 ? band / total : 0.0;
  }
  return out;
}

}  // namespace pets
