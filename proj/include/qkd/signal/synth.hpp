#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

#include "qkd/signal/audio.hpp"

namespace qkd {

/// Samples per 20 ms label frame at 16 kHz; equals the encoder frame stride.
inline constexpr std::size_t kFrameHop = 320;

inline constexpr int kPhoneClasses = 9;
inline constexpr int kKeywordCount = 6;
inline constexpr int kPhonesPerKeyword = 4;

/// Phone classes: 0 silence, 1-5 vowels a i u e o, 6 nasal m, 7 s, 8 sh.
std::string_view phone_name(int phone);
/// Phone sequence of a keyword.
std::array<int, kPhonesPerKeyword> keyword_phones(int keyword);

struct SpeakerVoice {
  double f0_hz = 120.0;
  std::array<double, 3> formant_scale{1.0, 1.0, 1.0};
};

/// Deterministic voice for speaker `id`; mean f0 spreads over 90-240 Hz.
SpeakerVoice make_speaker(int id, std::uint64_t seed);

struct SpeechSpec {
  SpeakerVoice voice;
  int keyword = 0;
  double duration_s = 1.0;
  int sample_rate = kDefaultSampleRate;
};

struct LabeledClip {
  AudioClip clip;
  /// One phone class per 20 ms frame, taken at the frame centre.
  std::vector<int> frame_labels;
};

/// Harmonic source at the speaker f0 shaped by formant resonances, with
/// band-passed noise for fricatives. The keyword fixes the phone sequence
/// and the f0/energy contour; the seed jitters timing. Peak-normalised to 0.5.
/// Throws ConfigError for f0 outside [70, 300] Hz, duration < 0.2 s or an
/// unknown keyword.
LabeledClip synth_speech(const SpeechSpec& spec, std::uint64_t seed);

enum class NoiseFamily { kIndoor, kOutdoor, kTransport };
inline constexpr std::array<NoiseFamily, 3> kNoiseFamilies{
    NoiseFamily::kIndoor, NoiseFamily::kOutdoor, NoiseFamily::kTransport};

std::string_view noise_family_name(NoiseFamily family);
/// Throws ConfigError for an unknown name.
NoiseFamily parse_noise_family(std::string_view name);

/// Indoor: mains hum plus syllable-modulated babble. Outdoor: gusting
/// low-passed wind. Transport: engine pulse train through a resonance plus
/// road rumble. Peak-normalised to 0.5.
AudioClip synth_noise(NoiseFamily family, std::size_t length, std::uint64_t seed,
                      int sample_rate = kDefaultSampleRate);

}  // namespace qkd
