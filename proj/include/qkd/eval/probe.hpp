#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qkd/distill/loss.hpp"
#include "qkd/eval/metrics.hpp"
#include "qkd/models/enhancement.hpp"
#include "qkd/models/models.hpp"
#include "qkd/signal/contaminate.hpp"
#include "qkd/signal/corpus.hpp"

namespace qkd {

enum class ProbeTask { kKws, kSid, kAsv, kSe };
std::string_view probe_task_name(ProbeTask task);
ProbeTask parse_probe_task(std::string_view name);

/// Label of `u` for a classification task (keyword or speaker). Throws
/// ConfigError for asv and se.
int task_label(const Utterance& u, ProbeTask task);

/// Frame mean of the student's final hidden state.
std::vector<double> pooled_embedding(const Student& student, std::span<const double> samples);
PointSet pooled_embeddings(const Student& student, const Corpus& corpus);

struct ProbeSpec {
  ProbeTask task = ProbeTask::kKws;
  std::uint64_t seed = 1;
  std::size_t epochs = 300;
  double lr = 0.05;
  double weight_decay = 1e-3;
  /// Share of the clean set held out for validation.
  double validation_fraction = 0.2;

  void validate() const;
};

/// Standardisation followed by one affine layer and softmax.
struct LinearProbe {
  ProbeTask task = ProbeTask::kKws;
  std::vector<int> classes;  // label value of each output
  std::vector<double> mean;
  std::vector<double> scale;  // 1 / std, or 1 for constant features
  std::vector<double> weight;  // [dim x classes], row-major
  std::vector<double> bias;

  std::size_t dim() const { return mean.size(); }
  int predict(std::span<const double> embedding) const;
  std::vector<int> predict(const PointSet& points) const;
  bool knows(int label) const;

  std::string to_json() const;
  static LinearProbe from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static LinearProbe load(const std::filesystem::path& path);
};

struct ProbeResult {
  LinearProbe probe;
  double train_accuracy = 0.0;
  std::optional<double> validation_accuracy;
  std::size_t train_count = 0;
  std::size_t validation_count = 0;
};

/// Full-batch AdamW on standardised embeddings; deterministic in spec.seed.
/// Throws MetricError when labels and points disagree in count.
ProbeResult probe_train(const PointSet& points, std::span<const int> labels, const ProbeSpec& spec);
/// Pools the frozen student's clean features and trains on them.
ProbeResult probe_train(const Student& student, const ProbeSpec& spec, const Corpus& clean);

/// All same-speaker pairs plus as many distinct cross-speaker pairs drawn
/// with `seed` (or all of them when fewer exist), scored by cosine.
std::vector<Trial> asv_trials(const PointSet& embeddings, std::span<const int> speakers,
                              std::uint64_t seed);

struct SeProbeSpec {
  std::size_t steps = 300;
  std::size_t batch_size = 4;
  double lr = 1e-3;
  EnhancementLoss loss = EnhancementLoss::kL1;
  std::uint64_t seed = 1;
};

/// Trains a fresh mask head on the frozen student's features of contaminated
/// clean clips.
MaskHead train_se_probe(const Student& student, const Corpus& clean,
                        const ContaminationSpec& contamination, const SeProbeSpec& spec);

}  // namespace qkd
