#pragma once

#include <span>
#include <vector>

#include "qkd/signal/audio.hpp"
#include "qkd/tensor/tensor.hpp"

namespace qkd {

/// Frame k covers samples [k*hop - offset, k*hop - offset + window_length)
/// where offset is window_length/2 when `center` is set (zero padding at
/// both ends) and 0 otherwise. Each frame is Hann-windowed and zero-padded
/// to fft_size.
struct StftConfig {
  std::size_t fft_size = 512;
  std::size_t hop = 320;
  std::size_t window_length = 400;
  bool center = false;

  /// Throws ConfigError for a non power-of-two FFT, a window longer than the
  /// FFT, a zero hop, or hop > window_length.
  void validate() const;
  std::size_t bins() const { return fft_size / 2 + 1; }
  std::size_t frame_count(std::size_t length) const;
  std::ptrdiff_t frame_start(std::size_t frame) const;
};

/// Periodic Hann window.
std::vector<double> hann_window(std::size_t length);

/// Magnitude and phase laid out bin-major: element (f, n) at f * frames + n.
struct StftFrame {
  std::vector<double> magnitude;
  std::vector<double> phase;
  std::size_t bins = 0;
  std::size_t frames = 0;
  StftConfig config;

  double mag(std::size_t f, std::size_t n) const {
    return magnitude[f * frames + n];
  }
};

StftFrame stft(std::span<const double> samples, const StftConfig& config);
inline StftFrame stft(const AudioClip& clip, const StftConfig& config) {
  return stft(clip.samples(), config);
}

/// Least-squares overlap-add inverse: sum_k w * frame_k / sum_k w^2.
/// Positions not covered by any window sample are zero.
std::vector<double> istft(const StftFrame& frame, std::size_t length);

namespace ops {

/// |STFT(x)| of a rank-1 signal as a differentiable [bins x frames] tensor.
Tensor stft_magnitude(const Tensor& signal, const StftConfig& config);

/// Differentiable (in the magnitude) inverse STFT using a fixed phase; the
/// phase span has bins * frames entries in the same layout.
Tensor istft_from_magnitude(const Tensor& magnitude,
                            std::span<const double> phase,
                            const StftConfig& config, std::size_t length);

}  // namespace ops

}  // namespace qkd
