#include "qkd/signal/contaminate.hpp"

#include <cmath>
#include <nlohmann/json.hpp>

#include "qkd/errors.hpp"

namespace qkd {

namespace {

std::vector<double> looped(std::span<const double> noise, std::size_t length,
                           std::size_t offset) {
  std::vector<double> out(length);
  for (std::size_t i = 0; i < length; ++i) out[i] = noise[(offset + i) % noise.size()];
  return out;
}

}  // namespace

MixResult mix_at_snr(const AudioClip& speech, const AudioClip& noise, double snr_db) {
  if (speech.sample_rate() != noise.sample_rate()) {
    throw FormatError("mix_at_snr: speech at " + std::to_string(speech.sample_rate()) +
                      " Hz, noise at " + std::to_string(noise.sample_rate()) + " Hz");
  }
  if (!std::isfinite(snr_db)) throw ConfigError("mix_at_snr: snr must be finite");
  const auto n = looped(noise.samples(), speech.size(), 0);
  const double ps = mean_square(speech.samples());
  const double pn = mean_square(n);
  if (ps <= 0.0) throw MetricError("mix_at_snr: speech has zero power");
  if (pn <= 0.0) throw MetricError("mix_at_snr: noise has zero power");
  MixResult r;
  r.alpha = std::sqrt(ps / (pn * std::pow(10.0, snr_db / 10.0)));
  std::vector<double> out(speech.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = speech.samples()[i] + r.alpha * n[i];
  const double peak = peak_abs(out);
  if (peak > 1.0) {
    r.renorm_scale = 1.0 / peak;
    for (double& v : out) v *= r.renorm_scale;
  }
  r.clip = AudioClip(std::move(out), speech.sample_rate());
  return r;
}

std::string_view action_name(Action a) {
  switch (a) {
    case Action::kNone: return "none";
    case Action::kNoise: return "noise";
    case Action::kReverb: return "reverb";
    case Action::kNoiseReverb: return "noise+reverb";
  }
  return "unknown";
}

std::string_view condition_name(Action a) {
  switch (a) {
    case Action::kNone: return "c";
    case Action::kNoise: return "n";
    case Action::kReverb: return "r";
    case Action::kNoiseReverb: return "n+r";
  }
  return "unknown";
}

Action parse_action(std::string_view name) {
  for (auto a : kActions) {
    if (name == action_name(a) || name == condition_name(a)) return a;
  }
  throw ConfigError("unknown contamination action '" + std::string(name) + "'");
}

void ContaminationSpec::validate() const {
  if (!(snr_range.low_db <= snr_range.high_db)) {
    throw ConfigError("snr range low " + std::to_string(snr_range.low_db) +
                      " exceeds high " + std::to_string(snr_range.high_db));
  }
  const bool any = !fixed_action.has_value();
  const bool noise = any || has_noise(*fixed_action);
  const bool reverb = any || has_reverb(*fixed_action);
  if (noise && noise_pool.empty()) throw ConfigError("contamination needs a non-empty noise pool");
  if (reverb && rir_pool.empty()) throw ConfigError("contamination needs a non-empty rir pool");
}

ContaminationPlan plan_contamination(const ContaminationSpec& spec,
                                     std::size_t clip_length, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed, "contaminate");
  ContaminationPlan plan;
  const auto drawn = kActions[rng.below(kActions.size())];
  plan.action = spec.fixed_action.value_or(drawn);
  const double u_snr = rng.uniform();
  const auto noise_pick = rng.next_u64();
  const auto offset_pick = rng.next_u64();
  const auto rir_pick = rng.next_u64();
  if (has_noise(plan.action)) {
    plan.snr_db = spec.snr_range.low_db + (spec.snr_range.high_db - spec.snr_range.low_db) * u_snr;
    plan.noise_index = noise_pick % spec.noise_pool.size();
    const std::size_t len = spec.noise_pool[*plan.noise_index].clip.size();
    plan.noise_offset = len > clip_length ? offset_pick % len : 0;
  }
  if (has_reverb(plan.action)) plan.rir_index = rir_pick % spec.rir_pool.size();
  return plan;
}

NoisyView realize(const AudioClip& clip, const ContaminationSpec& spec,
                  const ContaminationPlan& plan, std::uint64_t seed) {
  NoisyView view;
  view.action = plan.action;
  view.seed = seed;
  AudioClip current = clip;
  double scale = 1.0;
  if (has_reverb(plan.action)) {
    const Rir& rir = spec.rir_pool.at(*plan.rir_index);
    double s = 1.0;
    current = apply_rir(current, rir, &s);
    scale *= s;
    view.rir_id = rir.id;
    view.rt60_s = rir.rt60_s;
  }
  if (has_noise(plan.action)) {
    const NoiseSource& src = spec.noise_pool.at(*plan.noise_index);
    AudioClip segment(looped(src.clip.samples(), current.size(), plan.noise_offset),
                      src.clip.sample_rate());
    auto mixed = mix_at_snr(current, segment, *plan.snr_db);
    current = std::move(mixed.clip);
    scale *= mixed.renorm_scale;
    view.snr_db = plan.snr_db;
    view.noise_id = src.id;
    view.noise_family = src.family;
  }
  view.clip = std::move(current);
  view.renorm_scale = scale;
  return view;
}

NoisyView contaminate(const AudioClip& clip, const ContaminationSpec& spec,
                      std::uint64_t seed) {
  return realize(clip, spec, plan_contamination(spec, clip.size(), seed), seed);
}

std::string sidecar_json(const NoisyView& view, std::string_view source) {
  nlohmann::ordered_json j;
  j["source"] = std::string(source);
  j["action"] = std::string(action_name(view.action));
  j["snr_db"] = view.snr_db ? nlohmann::ordered_json(*view.snr_db) : nlohmann::ordered_json(nullptr);
  j["rir_id"] = view.rir_id ? nlohmann::ordered_json(*view.rir_id) : nlohmann::ordered_json(nullptr);
  j["rt60_s"] = view.rt60_s ? nlohmann::ordered_json(*view.rt60_s) : nlohmann::ordered_json(nullptr);
  j["seed"] = view.seed;
  j["renorm_scale"] = view.renorm_scale;
  if (view.noise_family) j["noise_family"] = std::string(noise_family_name(*view.noise_family));
  return j.dump();
}

}  // namespace qkd
