#pragma once

#include <complex>
#include <span>
#include <vector>

namespace qkd {

using Complex = std::complex<double>;

bool is_power_of_two(std::size_t n);
std::size_t next_power_of_two(std::size_t n);

/// In-place FFT (FFTW); `data.size()` must be a power of two.
/// The inverse is unnormalised.
void fft(std::span<Complex> data, bool inverse = false);

/// First n/2 + 1 bins of the DFT of `x` zero-padded (or truncated) to n.
std::vector<Complex> rfft(std::span<const double> x, std::size_t n);

/// Real inverse of a half spectrum of n/2 + 1 bins, normalised by 1/n.
/// Imaginary parts of the DC and Nyquist bins are ignored.
std::vector<double> irfft(std::span<const Complex> bins, std::size_t n);

/// Full linear convolution of two real sequences via FFT.
std::vector<double> convolve(std::span<const double> a,
                             std::span<const double> b);

}  // namespace qkd
