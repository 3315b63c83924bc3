#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qkd/distill/loss.hpp"
#include "qkd/models/checkpoint.hpp"
#include "qkd/models/enhancement.hpp"
#include "qkd/models/models.hpp"
#include "qkd/signal/contaminate.hpp"
#include "qkd/signal/corpus.hpp"
#include "qkd/tensor/optim.hpp"

namespace qkd {

struct DistillConfig {
  std::vector<std::size_t> layers{2, 4, 6};
  double lambda_cos = 1.0;
  DistillMode mode = DistillMode::kLayerwise;
  EnhancementKind enhancement = EnhancementKind::kNone;
  EnhancementLoss enh_loss = EnhancementLoss::kL1;
  double beta = 1.0;
  /// false feeds clean clips to the student (the plain Distiller).
  bool contaminate = true;
  std::size_t batch_size = 8;
  std::uint64_t total_steps = 5000;
  std::uint64_t warmup_steps = 350;
  double peak_lr = 2e-4;
  ScheduleKind schedule = ScheduleKind::kWarmupDecay;
  double weight_decay = 0.0;
  double grad_clip = 5.0;
  /// Copies the teacher's front end and lowest layers into the student.
  bool init_from_teacher = true;
  std::uint64_t seed = 1;

  /// Throws ConfigError on any violated invariant.
  void validate() const;
};

/// Student plus the optional enhancement head; the only trainable state.
struct DistillModels {
  Student student;
  std::optional<MaskHead> mask_head;
  std::optional<WaveformHead> waveform_head;

  nn::ParamList trainable() const;
  bool has_enhancement() const { return mask_head || waveform_head; }
};

/// Builds the student for `config` and, when requested, the enhancement
/// head. Parameter seeds derive from config.seed.
DistillModels make_distill_models(const DistillConfig& config, const StudentConfig& student,
                                  const Teacher& teacher);

/// Copies every teacher tensor whose name (with the "teacher." prefix
/// replaced) and shape match a student encoder tensor. Returns the count.
std::size_t init_student_from_teacher(Student& student, const Teacher& teacher);

/// One training item: clean reference, the student's input, and the
/// teacher's features of the clean clip at the configured layers.
struct DistillItem {
  std::span<const double> clean;
  std::span<const double> student_input;
  const std::vector<Tensor>* targets = nullptr;
};

/// Teacher features of `clean` at the 1-based `layers`.
std::vector<Tensor> teacher_targets(const Teacher& teacher, std::span<const double> clean,
                                    std::span<const std::size_t> layers);

struct ObjectiveParts {
  Tensor distill;
  Tensor enhancement;  // undefined when there is no enhancement head
  Tensor total;
};

/// (1/m) sum_i sum_l distill_loss(teacher_l(x_i), student_l(x_hat_i), lambda),
/// plus the batch-mean enhancement loss against the clean clip when a head
/// is present. total = distill + beta * enhancement.
ObjectiveParts distill_objective(std::span<const DistillItem> batch, const DistillModels& models,
                                 const DistillConfig& config);

/// The distillation term alone. Throws ConfigError for an empty batch.
Tensor feature_denoising_objective(std::span<const DistillItem> batch, const Student& student,
                                   const DistillConfig& config);

struct LossRecord {
  std::uint64_t step = 0;
  double lr = 0.0;
  double distill = 0.0;
  double enh = 0.0;
  double total = 0.0;
  double grad_norm = 0.0;
  double wall_ms = 0.0;
};

struct TrainState {
  std::uint64_t step = 0;
  AdamWState optimizer;
  LossRecord last;
};

/// Forward, one backward pass, clipping at config.grad_clip and one AdamW
/// update at lr_schedule(state.step). Throws TrainingError on a non-finite
/// loss or gradient and StateError once state.step reaches total_steps.
LossRecord train_step(std::span<const DistillItem> batch, DistillModels& models,
                      const DistillConfig& config, TrainState& state);

/// Data side of a run: the clean corpus and the contamination pools.
struct DistillData {
  const Corpus* corpus = nullptr;
  ContaminationSpec contamination;
};

/// Corpus indices of the batch for `step`: consecutive slices of per-epoch
/// permutations seeded by (seed, epoch). Also returns each item's epoch.
std::vector<std::pair<std::size_t, std::uint64_t>> batch_indices(std::uint64_t seed,
                                                                 std::size_t corpus_size,
                                                                 std::size_t batch_size,
                                                                 std::uint64_t step);

struct RunOptions {
  std::filesystem::path out_dir;
  /// Full-state checkpoint cadence in steps; 0 disables intermediate ones.
  std::uint64_t checkpoint_every = 500;
  /// Resume from a full-state checkpoint written by an earlier run.
  std::optional<std::filesystem::path> resume_from;
  /// Stop after this step (for tests of resumption); defaults to total.
  std::optional<std::uint64_t> stop_after;
  /// Keep prediction and enhancement heads in the exported checkpoint.
  bool export_heads = false;
  std::function<void(const LossRecord&)> on_step;
};

struct RunResult {
  DistillModels models;
  TrainState state;
  std::filesystem::path student_checkpoint;
  std::filesystem::path log_path;
  std::vector<std::filesystem::path> checkpoints;
};

/// Runs distillation steps from the current (possibly resumed) step to
/// total_steps. Writes train_log.jsonl, checkpoints/step_<n>.rdkd
/// (full state, f64) and student.rdkd (f32 export).
RunResult train_run(const DistillConfig& config, const StudentConfig& student,
                    const DistillData& data, const Teacher& teacher, const RunOptions& options);

/// Full-state records: parameters, AdamW moments and the step counter.
std::vector<CheckpointRecord> state_records(const DistillModels& models, const TrainState& state);
void restore_state(const std::vector<CheckpointRecord>& records, DistillModels& models,
                   TrainState& state);

/// Loads an exported or full-state checkpoint into a fresh student.
Student load_student(const std::filesystem::path& path, const StudentConfig& config);

/// Rebuilds the models of `config` for a teacher of width `teacher_dim` and
/// loads them from an exported or full-state checkpoint. Enhancement heads
/// missing from the file are dropped.
DistillModels load_distill_models(const std::filesystem::path& path, const DistillConfig& config,
                                  const StudentConfig& student, std::size_t teacher_dim);

}  // namespace qkd
