#include "pets/fft.hpp"

#include <cmath>
#include <cstdint>

#include "pets/common.hpp"

namespace pets {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
  std::size_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

/// In-place iterative radix-2 Cooley-Tukey; n must be a power of two.
void fft_pow2(std::vector<std::complex<double>>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = 2.0 * kPi / static_cast<double>(len) *
                       (inverse ? 1.0 : -1.0);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
  if (inverse) {
    const double inv = 1.0 / static_cast<double>(n);
    for (auto& v : a) v *= inv;
  }
}

/// Bluestein chirp-z: expresses a length-n DFT as a circular
/// convolution of size m = next_pow2(2n-1).
std::vector<std::complex<double>> fft_bluestein(
    const std::vector<std::complex<double>>& x, bool inverse) {
  const std::size_t n = x.size();
  const std::size_t m = next_pow2(2 * n - 1);
  const double sign = inverse ? 1.0 : -1.0;

  std::vector<std::complex<double>> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double kk = static_cast<double>(static_cast<std::int64_t>(k) *
                                          static_cast<std::int64_t>(k));
    const double ang = sign * kPi * kk / static_cast<double>(n);
    chirp[k] = std::complex<double>(std::cos(ang), std::sin(ang));
  }

  std::vector<std::complex<double>> a(m, {0.0, 0.0});
  std::vector<std::complex<double>> b(m, {0.0, 0.0});
  for (std::size_t k = 0; k < n; ++k) {
    a[k] = x[k] * chirp[k];
    b[k] = std::conj(chirp[k]);
    if (k != 0) b[m - k] = std::conj(chirp[k]);
  }
  fft_pow2(a, false);
  fft_pow2(b, false);
  for (std::size_t k = 0; k < m; ++k) a[k] *= b[k];
  fft_pow2(a, true);

  std::vector<std::complex<double>> out(n);
  for (std::size_t k = 0; k < n; ++k) out[k] = a[k] * chirp[k];
  if (inverse) {
    const double invn = 1.0 / static_cast<double>(n);
    for (auto& v : out) v *= invn;
  }
  return out;
}

}  // namespace

std::vector<std::complex<double>> fft(
    const std::vector<std::complex<double>>& x, bool inverse) {
  if (x.empty()) throw InvalidInput("fft: input is empty");
  if (x.size() == 1) return x;
  if (is_pow2(x.size())) {
    std::vector<std::complex<double>> a = x;
    fft_pow2(a, inverse);
    return a;
  }
  return fft_bluestein(x, inverse);
}

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
  std::vector<std::complex<double>> cx(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) cx[i] = {x[i], 0.0};
  return fft(cx, false);
}

std::vector<double> irfft(const std::vector<std::complex<double>>& spectrum) {
  std::vector<std::complex<double>> t = fft(spectrum, true);
  std::vector<double> out(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[i].real();
  return out;
}

}  // namespace pets
