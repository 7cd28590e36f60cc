#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "pets/common.hpp"

namespace pets {

/// Which transform produces the time-frequency image.
enum class Backend { CWT, FFT };

/// Mother wavelet for the CWT backend.
enum class Wavelet { Haar, Morlet };

/// Settings of the decomposition stage.
struct SdaqConfig {
  /// Number of frequency bands the axis [0, 0.5] is divided into.
  int lambda = 50;
  /// Energy thresholds, strictly increasing inside (0, 1).  K - 1
  /// thresholds produce K sub-bands.
  std::vector<double> mus = {0.7, 0.9};
  Backend backend = Backend::FFT;
  Wavelet wavelet = Wavelet::Haar;
  /// Calibration constant applied by the CWT inverse.  Leave at 0 to
  /// have it computed (and cached) by calibrate_icwt on demand.
  double icwt_calibration = 0.0;

  int K() const { return static_cast<int>(mus.size()) + 1; }
  /// Throws InvalidConfig on out-of-range settings.
  void validate() const;
};

/// Center frequency of a mother wavelet, in cycles per unit time:
/// 1.0 for Haar, 0.8125 for Morlet (carrier angular frequency 5).
/// Band j maps to scale a_j = F_c / freq_axis[j].
double wavelet_center_frequency(Wavelet w);

/// Time-frequency image of C channels of length L.
///
/// values holds the magnitude image, laid out [C, L, lambda]: channel,
/// then time, then band.  freq_axis[j-1] = j * 0.5 / lambda is the
/// upper edge of band j (bands are 1-based in the API).  Each channel
/// is demeaned before the transform; the removed means are kept in
/// mean_offsets so the inverse can restore them.
///
/// The complex state needed for inversion is retained:
///   - CWT: coeffs [C, L, lambda], one wavelet coefficient per band;
///   - FFT: spectrum [C, L], the full DFT of the demeaned channel.
struct Spectrogram {
  Backend backend = Backend::CWT;
  Wavelet wavelet = Wavelet::Haar;
  int C = 0;
  int L = 0;
  int lambda = 0;
  std::vector<double> values;
  std::vector<double> freq_axis;
  std::vector<double> scales;
  std::vector<double> mean_offsets;
  std::vector<std::complex<double>> coeffs;
  std::vector<std::complex<double>> spectrum;

  double value(int c, int i, int j) const {
    return values[(static_cast<std::size_t>(c) * L + i) * lambda + j];
  }
};

/// Band boundaries of a K-way partition: K + 1 ascending 1-based band
/// indices with boundaries.front() == 1 and boundaries.back() ==
/// lambda + 1.  Sub-band k covers bands [boundaries[k-1],
/// boundaries[k]).
struct BandPartition {
  std::vector<int> boundaries;
  int K() const { return static_cast<int>(boundaries.size()) - 1; }
};

/// Result of the full decomposition: K fluctuation patterns per
/// channel, patterns laid out [K, C, L].  Pattern 1 carries the
/// channel means; patterns are ordered low band to high band, which by
/// construction of the thresholds is descending captured energy.
struct DecoupledSeries {
  int K = 0;
  int C = 0;
  int L = 0;
  std::vector<double> patterns;
  std::vector<int> boundaries;
  /// Fraction of total image energy captured by each sub-band.
  std::vector<double> band_energy;

  double pattern_at(int k, int c, int t) const {
    return patterns[(static_cast<std::size_t>(k) * C + c) * L + t];
  }
};

/// Continuous wavelet transform of x ([C, L], row-major) on the band
/// grid: band j maps to scale a_j = F_c / freq_axis[j].  Correlation
/// uses zero padding at the boundaries.  Rows must have L >= 4.  The Haar kernel is integrated
/// exactly over sample cells and paired with its quadrature companion
/// so the coefficients are complex; Morlet samples the complex mother
/// directly.
Spectrogram cwt(const std::vector<double>& x, int C, int L,
                const SdaqConfig& cfg);

/// FFT magnitude image on the same band grid.  DFT bin p > 0 belongs
/// to the band whose frequency interval contains p / L; bin 0 joins
/// band 1.  values is constant along the time axis.
Spectrogram fft_spectrogram(const std::vector<double>& x, int C, int L,
                            const SdaqConfig& cfg);

/// Dispatches to cwt or fft_spectrogram on cfg.backend.
Spectrogram spectrogram(const std::vector<double>& x, int C, int L,
                        const SdaqConfig& cfg);

/// Smallest 1-based index b such that the cumulative sum of
/// column_energy through b reaches mu times the total.  Throws
/// DegenerateSpectrum when the total is not positive, InvalidInput
/// when mu is outside (0, 1).
int ami(const std::vector<double>& column_energy, double mu);

/// Applies ami at each threshold to the column energies of the image
/// (summed over channels and time) and converts the hit indices into
/// K + 1 strictly increasing boundaries.  Raw boundaries are pushed
/// right to keep every sub-band non-empty, then clamped so the bands
/// that follow still fit.  A zero-energy image (constant series) gets
/// evenly spread boundaries instead of an error, so constants still
/// decompose with the mean routed to pattern 1.
BandPartition partition_bands(const Spectrogram& spec,
                              const std::vector<double>& mus);

/// Restriction of the image to sub-band k (1-based): values and the
/// retained complex state outside the band are zeroed.  Channel means
/// stay only on sub-band 1.
Spectrogram mask_subband(const Spectrogram& spec, const BandPartition& part,
                         int k);

/// Inverse transform back to the time domain, [C, L] row-major.
/// The FFT backend inverts its retained spectrum exactly.  The CWT
/// backend uses the calibrated real-part sum over scales,
///   y(t) = c * sum_j Re(W(t, a_j)) / sqrt(a_j),
/// and adds the stored channel means back.
std::vector<double> icwt(const Spectrogram& spec, const SdaqConfig& cfg);

/// Least-squares scalar c fitting the raw (uncalibrated) CWT inverse
/// of unit sinusoid probes back to the probes themselves.  Probes are
/// placed at the band midpoints, length 96.  The result is positive,
/// depends only on (wavelet, lambda) and is cached; the FFT backend
/// needs no calibration and yields 1.
double calibrate_icwt(const SdaqConfig& cfg);

/// Full decomposition pipeline: spectrogram, band partition, per-band
/// masking and inversion.  With the FFT backend the patterns sum back
/// to the input to round-off accuracy.
DecoupledSeries sdaq_decompose(const std::vector<double>& x, int C, int L,
                               const SdaqConfig& cfg);

}  // namespace pets
