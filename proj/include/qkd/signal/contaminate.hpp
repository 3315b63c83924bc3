#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qkd/rng.hpp"
#include "qkd/signal/audio.hpp"
#include "qkd/signal/rir.hpp"
#include "qkd/signal/synth.hpp"

namespace qkd {

struct MixResult {
  AudioClip clip;
  double alpha = 0.0;
  /// Factor applied after mixing to bring the peak back to 1 (1 if unused).
  double renorm_scale = 1.0;
};

/// speech + alpha * noise with 10 log10(P_speech / P_alpha_noise) == snr_db,
/// powers as mean squares over the whole clip. The noise is looped or
/// trimmed to the speech length first. Throws MetricError for a zero-power
/// input, FormatError for mismatched rates, ConfigError for non-finite snr.
MixResult mix_at_snr(const AudioClip& speech, const AudioClip& noise, double snr_db);

/// The four training actions; evaluation conditions c, n, r, n+r map onto
/// the same values.
enum class Action { kNone, kNoise, kReverb, kNoiseReverb };
inline constexpr std::array<Action, 4> kActions{Action::kNone, Action::kNoise,
                                                Action::kReverb, Action::kNoiseReverb};

inline bool has_noise(Action a) { return a == Action::kNoise || a == Action::kNoiseReverb; }
inline bool has_reverb(Action a) { return a == Action::kReverb || a == Action::kNoiseReverb; }

/// "none", "noise", "reverb", "noise+reverb".
std::string_view action_name(Action a);
/// "c", "n", "r", "n+r".
std::string_view condition_name(Action a);
/// Accepts either spelling. Throws ConfigError otherwise.
Action parse_action(std::string_view name);

struct NoiseSource {
  std::string id;
  NoiseFamily family = NoiseFamily::kIndoor;
  AudioClip clip;
};

struct SnrRange {
  double low_db = 0.0;
  double high_db = 20.0;
};

/// Pools and ranges for contamination. With `fixed_action` unset the
/// action is drawn uniformly from the four; evaluation scenarios pin it.
struct ContaminationSpec {
  std::vector<NoiseSource> noise_pool;
  std::vector<Rir> rir_pool;
  SnrRange snr_range;
  std::optional<Action> fixed_action;

  /// Throws ConfigError if low > high, or a pool needed by the possible
  /// actions is empty.
  void validate() const;
};

/// Every random choice for one item, drawn before any signal processing.
struct ContaminationPlan {
  Action action = Action::kNone;
  std::optional<double> snr_db;
  std::optional<std::size_t> noise_index;
  std::size_t noise_offset = 0;
  std::optional<std::size_t> rir_index;
};

ContaminationPlan plan_contamination(const ContaminationSpec& spec,
                                     std::size_t clip_length, std::uint64_t seed);

struct NoisyView {
  AudioClip clip;
  Action action = Action::kNone;
  std::optional<double> snr_db;
  std::optional<std::string> rir_id;
  std::optional<double> rt60_s;
  std::optional<std::string> noise_id;
  std::optional<NoiseFamily> noise_family;
  std::uint64_t seed = 0;
  double renorm_scale = 1.0;
};

/// Per-item seed so parallel workers stay deterministic.
inline std::uint64_t item_seed(std::uint64_t global_seed, std::uint64_t epoch,
                               std::uint64_t index) {
  return derive_seed(global_seed, epoch, index);
}

/// Applies the plan drawn from `seed`. For noise+reverb the speech is
/// reverberated first and the noise mixed against the reverberant speech.
NoisyView contaminate(const AudioClip& clip, const ContaminationSpec& spec,
                      std::uint64_t seed);
NoisyView realize(const AudioClip& clip, const ContaminationSpec& spec,
                  const ContaminationPlan& plan, std::uint64_t seed);

/// One JSON object: {source, action, snr_db, rir_id, rt60_s, seed,
/// renorm_scale}; absent optionals are null.
std::string sidecar_json(const NoisyView& view, std::string_view source);

}  // namespace qkd
