#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "qkd/eval/probe.hpp"
#include "qkd/eval/score.hpp"

namespace qkd {

/// One evaluation condition. `name` keys the report and the contamination
/// seeds, so every model sees identical deterioration.
struct ScenarioSpec {
  std::string name;
  Action action = Action::kNone;
  SnrRange snr{-5.0, 20.0};
};

/// c, n, r and n+r, with `snr` for the noisy ones.
std::vector<ScenarioSpec> default_scenarios(SnrRange snr = {-5.0, 20.0});

struct EvalConfig {
  std::uint64_t seed = 7;
  std::vector<ScenarioSpec> scenarios = default_scenarios();
  std::vector<ProbeTask> tasks{ProbeTask::kKws, ProbeTask::kSid, ProbeTask::kAsv};
};

/// The frozen student and whatever was trained on top of it.
struct EvalModels {
  std::string name = "student";
  const Student* student = nullptr;
  const LinearProbe* kws = nullptr;
  const LinearProbe* sid = nullptr;
  const MaskHead* enhancer = nullptr;
  /// Used for se when no mask head is given.
  const WaveformHead* waveform_enhancer = nullptr;
};

struct BreakdownRow {
  std::string scenario;
  std::string group;  // noise family or room class
  std::string task;
  std::string metric;
  double value = 0.0;
  std::size_t count = 0;
};

/// scenario -> task -> metric -> value
using ScenarioMetrics = std::map<std::string, std::map<std::string, std::map<std::string, double>>>;

struct RobustnessReport {
  std::string model;
  std::vector<std::string> scenario_order;
  ScenarioMetrics scenarios;
  std::vector<BreakdownRow> noise_type;
  std::vector<BreakdownRow> room_class;
  std::map<std::string, ScoreResult> score_per_group;
  /// Per-item SI-SDR improvement (dB) of the enhancer, per scenario.
  std::map<std::string, std::vector<double>> si_sdr_improvement;

  double metric(const std::string& scenario, const std::string& task, const std::string& metric) const;
  std::string to_json() const;
  /// model,task,metric,scenario,value
  std::string to_csv() const;
  static RobustnessReport from_json(const std::string& text);
  static RobustnessReport load(const std::filesystem::path& path);
};

/// Anchors for the per-scenario score: chance and perfect accuracy, EER
/// 0.5 and 0, SI-SDR improvement 0 and 20 dB.
std::vector<ScoreAnchor> default_anchors(std::size_t speakers);

/// Evaluates every task of `config` on the test set under each scenario.
/// Item i of scenario s is contaminated with seed derive(seed, s, i). Throws
/// ConfigError for a requested task without its probe or enhancer and
/// DataError for a test label the probe never saw.
RobustnessReport evaluate_scenarios(const EvalModels& models, const Corpus& test,
                                    const ContaminationSpec& pools, const EvalConfig& config,
                                    const std::vector<ScoreAnchor>& anchors = {});

/// Noisy copy of `u` under `scenario` for item `index`.
NoisyView scenario_view(const Utterance& u, const ContaminationSpec& pools,
                        const ScenarioSpec& scenario, std::uint64_t seed, std::size_t index);

struct DisentanglementResult {
  double silhouette = 0.0;
  std::vector<std::array<double, 2>> projection;
  std::vector<int> speakers;
};

/// Pooled final-hidden embeddings of `clips` under `scenario`, scored by the
/// speaker silhouette and projected to 2-D. Throws MetricError for a single
/// speaker.
DisentanglementResult disentanglement_probe(const Student& student, const Corpus& clips,
                                            const ContaminationSpec& pools,
                                            const ScenarioSpec& scenario, std::uint64_t seed);

}  // namespace qkd
