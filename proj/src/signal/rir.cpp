#include "qkd/signal/rir.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "qkd/errors.hpp"
#include "qkd/rng.hpp"
#include "qkd/signal/fft.hpp"

namespace qkd {

namespace {

constexpr double kTailGain = 0.04;
constexpr double kTailClamp = 0.9;

}  // namespace

std::string_view room_class_name(RoomClass room) {
  switch (room) {
    case RoomClass::kSmall: return "small";
    case RoomClass::kMedium: return "medium";
    case RoomClass::kLarge: return "large";
  }
  return "unknown";
}

RoomClass room_class_for(double rt60_s) {
  if (rt60_s < 0.3) return RoomClass::kSmall;
  if (rt60_s <= 0.7) return RoomClass::kMedium;
  return RoomClass::kLarge;
}

double rir_envelope(double t_s, double rt60_s) {
  return std::exp(-t_s * 3.0 * std::log(10.0) / rt60_s);
}

Rir synth_rir(double rt60_s, std::uint64_t seed, int sample_rate) {
  if (!(rt60_s >= 0.05 && rt60_s <= 2.0)) {
    throw ConfigError("synth_rir: rt60 " + std::to_string(rt60_s) +
                      " s outside [0.05, 2.0]");
  }
  if (sample_rate <= 0) throw ConfigError("synth_rir: sample rate must be positive");
  Rng rng(seed, "rir");
  Rir rir;
  rir.sample_rate = sample_rate;
  rir.rt60_s = rt60_s;
  rir.room_class = room_class_for(rt60_s);
  const auto length = static_cast<std::size_t>(std::ceil(rt60_s * sample_rate)) + 1;
  rir.taps.resize(length);
  rir.taps[0] = 1.0;
  for (std::size_t i = 1; i < length; ++i) {
    const double t = static_cast<double>(i) / sample_rate;
    const double tap = kTailGain * rng.normal() * rir_envelope(t, rt60_s);
    rir.taps[i] = std::clamp(tap, -kTailClamp, kTailClamp);
  }
  char id[64];
  std::snprintf(id, sizeof id, "rir-%04d-%016llx",
                static_cast<int>(std::lround(rt60_s * 1000.0)),
                static_cast<unsigned long long>(seed));
  rir.id = id;
  return rir;
}

std::size_t direct_path_index(const Rir& rir) {
  if (rir.taps.empty()) throw ConfigError("rir '" + rir.id + "' has no taps");
  const auto window = std::max<std::size_t>(
      1, std::min(rir.taps.size(),
                  static_cast<std::size_t>(0.005 * rir.sample_rate)));
  std::size_t best = 0;
  for (std::size_t i = 1; i < window; ++i) {
    if (std::fabs(rir.taps[i]) > std::fabs(rir.taps[best])) best = i;
  }
  return best;
}

std::vector<double> convolve_rir(std::span<const double> x, const Rir& rir) {
  const auto full = convolve(x, rir.taps);
  const std::size_t d = direct_path_index(rir);
  std::vector<double> out(x.size(), 0.0);
  for (std::size_t k = 0; k < x.size() && k + d < full.size(); ++k) out[k] = full[k + d];
  return out;
}

AudioClip apply_rir(const AudioClip& speech, const Rir& rir, double* renorm_scale) {
  if (speech.sample_rate() != rir.sample_rate) {
    throw FormatError("apply_rir: sample rate " + std::to_string(speech.sample_rate()) +
                      " does not match rir '" + rir.id + "' at " +
                      std::to_string(rir.sample_rate));
  }
  auto out = convolve_rir(speech.samples(), rir);
  const double peak = peak_abs(out);
  double scale = 1.0;
  if (peak > 1.0) {
    scale = 1.0 / peak;
    for (double& v : out) v *= scale;
  }
  if (renorm_scale != nullptr) *renorm_scale = scale;
  return AudioClip(std::move(out), speech.sample_rate());
}

}  // namespace qkd
