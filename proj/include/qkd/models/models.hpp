#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "qkd/models/encoder.hpp"

namespace qkd {

/// Teacher defaults: 6 layers, D 64, 4 heads, ffn 128.
EncoderConfig default_teacher_config();
/// Student defaults: same shape with 2 layers.
EncoderConfig default_student_config();

class Teacher {
 public:
  Teacher() = default;
  Teacher(const EncoderConfig& config, std::uint64_t seed);

  /// Per-layer hiddens; records gradients only while unfrozen (pretraining).
  std::vector<Tensor> forward(std::span<const double> samples) const;
  /// Per-layer hiddens of a frozen teacher, never recorded on a graph.
  /// Throws StateError if the teacher has not been frozen.
  std::vector<Tensor> features(std::span<const double> samples) const;

  /// Clears requires_grad on every parameter.
  void freeze();
  bool frozen() const { return frozen_; }
  std::size_t num_layers() const { return encoder_.config().num_layers; }
  std::size_t hidden_dim() const { return encoder_.config().hidden_dim; }

  const Encoder& encoder() const { return encoder_; }
  nn::ParamList params() const;
  /// FNV-1a over parameter names and values.
  std::uint64_t hash() const;

 private:
  Encoder encoder_;
  bool frozen_ = false;
};

enum class DistillMode { kLayerwise, kL2L };
std::string_view distill_mode_name(DistillMode mode);
DistillMode parse_distill_mode(std::string_view name);

struct StudentConfig {
  EncoderConfig encoder = default_student_config();
  /// Teacher layers to predict, 1-based and strictly increasing.
  std::vector<std::size_t> target_layers{2, 4, 6};
  DistillMode mode = DistillMode::kLayerwise;
  std::size_t teacher_dim = 64;

  /// Throws ConfigError for an empty or unsorted layer set, or an l2l
  /// student whose depth differs from |L|.
  void validate() const;
};

struct StudentOutput {
  std::vector<Tensor> hiddens;      // per student layer, [T x D]
  std::vector<Tensor> predictions;  // per target layer, [T x D_teacher]
  Tensor final_hidden;              // [T x D]
};

/// Student encoder plus one affine prediction head per target layer. In
/// layerwise mode every head reads the final hidden; in l2l mode head k
/// reads student layer k.
class Student {
 public:
  Student() = default;
  Student(const StudentConfig& config, std::uint64_t seed);

  StudentOutput forward(std::span<const double> samples) const;
  /// Final hidden only; prediction heads are skipped.
  Tensor represent(std::span<const double> samples) const;

  const StudentConfig& config() const { return config_; }
  const Encoder& encoder() const { return encoder_; }
  std::vector<nn::Linear>& heads() { return heads_; }
  const std::vector<nn::Linear>& heads() const { return heads_; }

  nn::ParamList encoder_params() const;
  nn::ParamList head_params() const;
  nn::ParamList params() const;

 private:
  StudentConfig config_;
  Encoder encoder_;
  std::vector<nn::Linear> heads_;
};

/// FNV-1a over names and raw values; used for frozen-model fingerprints.
std::uint64_t params_hash(const nn::ParamList& params);

}  // namespace qkd
