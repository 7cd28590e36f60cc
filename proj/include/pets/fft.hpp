#pragma once

#include <complex>
#include <vector>

namespace pets {

/// Discrete Fourier transform of arbitrary length.
///
/// Forward: X[k] = sum_t x[t] exp(-2*pi*i*k*t/n).
/// Inverse: x[t] = (1/n) sum_k X[k] exp(+2*pi*i*k*t/n).
///
/// Power-of-two lengths use an iterative radix-2 kernel; other lengths
/// go through Bluestein's chirp-z reduction to a power-of-two size.
/// The implementation is pure C++ with a fixed operation order, so
/// results are bit-identical across runs on the same platform.
std::vector<std::complex<double>> fft(
    const std::vector<std::complex<double>>& x, bool inverse = false);

/// Forward DFT of a real signal; returns the full length-n complex
/// spectrum (Hermitian-symmetric).
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

/// Inverse DFT of a full complex spectrum, returning the real part.
/// The caller is responsible for Hermitian symmetry when a real
/// result is expected.
std::vector<double> irfft(const std::vector<std::complex<double>>& spectrum);

}  // namespace pets
