#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "qkd/distill/pretrain.hpp"
#include "qkd/distill/trainer.hpp"
#include "qkd/eval/probe.hpp"
#include "qkd/eval/robustness.hpp"
#include "qkd/signal/contaminate.hpp"
#include "qkd/signal/corpus.hpp"

namespace qkd {

/// Noise and RIR pool generation.
struct PoolSpec {
  int noise_per_family = 4;
  double noise_length_s = 2.0;
  int rir_count = 12;
  double rt60_low = 0.1;
  double rt60_high = 1.2;
  std::uint64_t noise_seed = 21;
  std::uint64_t rir_seed = 31;
};

struct DataSection {
  /// Loaded instead of the synthetic training corpus when set.
  std::optional<std::filesystem::path> train_manifest;
  std::optional<std::filesystem::path> probe_manifest;
  std::optional<std::filesystem::path> test_manifest;
  CorpusSpec train{};
  CorpusSpec probe{8, 3, 0.6, 11, 1, 100};
  CorpusSpec test{8, 6, 0.6, 12, 1, 100};
  PoolSpec train_pools{};
  PoolSpec eval_pools{4, 2.0, 36, 0.1, 1.2, 22, 32};
  SnrRange train_snr{0.0, 20.0};
};

struct TeacherSection {
  EncoderConfig encoder = default_teacher_config();
  /// Loaded instead of pretraining when set.
  std::optional<std::filesystem::path> checkpoint;
  PretrainConfig pretrain;
};

struct EnhancementSection {
  EnhancementKind kind = EnhancementKind::kNone;
  EnhancementLoss loss = EnhancementLoss::kL1;
  double beta = 1.0;
};

struct TrainSection {
  std::size_t batch_size = 8;
  std::uint64_t total_steps = 5000;
  std::uint64_t warmup_steps = 350;
  double peak_lr = 2e-4;
  ScheduleKind schedule = ScheduleKind::kWarmupDecay;
  double weight_decay = 0.0;
  double grad_clip = 5.0;
  std::uint64_t checkpoint_every = 500;
  bool export_heads = false;
};

struct DistillSection {
  std::vector<std::size_t> layers{2, 4, 6};
  double lambda_cos = 1.0;
  DistillMode mode = DistillMode::kLayerwise;
  bool contaminate = true;
  bool init_from_teacher = true;
};

struct EvalSection {
  std::uint64_t seed = 7;
  SnrRange snr{-5.0, 20.0};
  std::vector<ProbeTask> tasks{ProbeTask::kKws, ProbeTask::kSid, ProbeTask::kAsv};
  std::size_t probe_epochs = 300;
  double probe_lr = 0.05;
  double probe_weight_decay = 1e-3;
  double probe_validation_fraction = 0.2;
  std::size_t se_probe_steps = 300;
};

/// Every section of a run. `seed` drives teacher pretraining, distillation
/// and probes; scenario contamination uses eval.seed so that models are
/// compared on identical inputs.
struct RunConfig {
  std::uint64_t seed = 1;
  DataSection data;
  TeacherSection teacher;
  EncoderConfig student = default_student_config();
  DistillSection distill;
  EnhancementSection enhancement;
  TrainSection train;
  EvalSection eval;

  /// Throws ConfigError naming the first offending key.
  void validate() const;
};

/// Parses a JSON document onto the defaults. Unknown keys and ill-typed
/// values raise ConfigError naming their dotted path.
RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Every field with its effective value; parse_run_config inverts it.
std::string resolved_config_json(const RunConfig& config);

DistillConfig distill_config(const RunConfig& config);
StudentConfig student_config(const RunConfig& config);
ProbeSpec probe_spec(const RunConfig& config, ProbeTask task);
EvalConfig eval_config(const RunConfig& config);

std::vector<NoiseSource> build_noise_pool(const PoolSpec& spec);
std::vector<Rir> build_rir_pool(const PoolSpec& spec);

/// Corpora and pools a run draws on.
struct Experiment {
  Corpus train;
  Corpus probe;
  Corpus test;
  ContaminationSpec train_contamination;
  ContaminationSpec eval_pools;
};

/// Synthesises or loads each corpus and builds the pools.
Experiment build_experiment(const RunConfig& config);

}  // namespace qkd
