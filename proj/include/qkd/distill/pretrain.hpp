#pragma once

#include <cstdint>
#include <filesystem>

#include "qkd/models/models.hpp"
#include "qkd/signal/corpus.hpp"
#include "qkd/tensor/nn.hpp"
#include "qkd/tensor/optim.hpp"

namespace qkd {

struct PretrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 8;
  double peak_lr = 1e-3;
  /// Fraction of all steps spent in linear warmup.
  double warmup_fraction = 0.1;
  double weight_decay = 0.01;
  double grad_clip = 5.0;
  std::uint64_t seed = 1;

  void validate() const;
};

struct PretrainResult {
  Teacher teacher;  // frozen
  /// Frame classifier on the final teacher layer, kept for evaluation only.
  nn::Linear classifier;
  std::size_t classes = 0;
  std::size_t steps = 0;
  double final_loss = 0.0;
  double train_accuracy = 0.0;
};

/// Trains the teacher with a per-frame phone classifier on clean speech,
/// then freezes it. Throws ConfigError when the labels span fewer than two
/// classes and DataError for an empty corpus or missing labels.
PretrainResult pretrain_teacher(const Corpus& data, const EncoderConfig& config,
                                const PretrainConfig& pretrain);

/// Frame accuracy of `classifier` over the teacher's final layer.
double frame_accuracy(const Teacher& teacher, const nn::Linear& classifier, const Corpus& data);

/// Writes every teacher parameter at f64.
void save_teacher(const std::filesystem::path& path, const Teacher& teacher);
/// Loads a teacher checkpoint into `config` and freezes it.
Teacher load_teacher(const std::filesystem::path& path, const EncoderConfig& config);

}  // namespace qkd
