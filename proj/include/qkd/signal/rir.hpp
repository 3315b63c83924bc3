#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qkd/signal/audio.hpp"

namespace qkd {

enum class RoomClass { kSmall, kMedium, kLarge };

std::string_view room_class_name(RoomClass room);
/// rt60 < 0.3 s small, 0.3-0.7 s medium, > 0.7 s large.
RoomClass room_class_for(double rt60_s);

struct Rir {
  std::string id;
  std::vector<double> taps;
  int sample_rate = kDefaultSampleRate;
  double rt60_s = 0.0;
  RoomClass room_class = RoomClass::kSmall;
};

/// Unit direct-path tap followed by Gaussian noise of standard deviation
/// 0.04 under the envelope exp(-t * 3 ln 10 / rt60), i.e. exactly -60 dB at
/// t = rt60. At 16 kHz the direct-to-reverberant ratio is about +7 dB at
/// rt60 0.1 s, 0 dB at 0.5 s and -4 dB at 1.2 s. Throws
/// ConfigError for rt60 outside [0.05, 2.0] s.
Rir synth_rir(double rt60_s, std::uint64_t seed,
              int sample_rate = kDefaultSampleRate);

/// Amplitude envelope used by synth_rir.
double rir_envelope(double t_s, double rt60_s);

/// Index of the direct-path tap: largest |tap| in the first 5 ms.
std::size_t direct_path_index(const Rir& rir);

/// Linear convolution truncated to the input length, aligned so the
/// direct-path tap maps input sample k to output sample k.
std::vector<double> convolve_rir(std::span<const double> x, const Rir& rir);

/// convolve_rir followed by peak renormalisation to 1 when the result
/// clips. Throws FormatError on a sample-rate mismatch.
AudioClip apply_rir(const AudioClip& speech, const Rir& rir,
                    double* renorm_scale = nullptr);

}  // namespace qkd
