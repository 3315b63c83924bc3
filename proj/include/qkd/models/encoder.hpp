#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "qkd/tensor/nn.hpp"

namespace qkd {

struct ConvStage {
  std::size_t channels = 64;
  std::size_t width = 4;
  std::size_t stride = 2;
  /// Symmetric zero padding; (width - stride) / 2 keeps L_out = floor(L / stride).
  std::size_t padding() const { return (width - stride) / 2; }
};

/// Strides (5, 4, 4, 2, 2) with widths stride + 2 * padding.
std::vector<ConvStage> default_conv_stack(std::size_t channels = 64);

inline constexpr std::size_t kSamplesPerFrame = 320;
inline constexpr std::size_t kMinClipSamples = 400;

struct EncoderConfig {
  std::vector<ConvStage> conv_stack = default_conv_stack();
  std::size_t hidden_dim = 64;
  std::size_t num_layers = 6;
  std::size_t num_heads = 4;
  std::size_t ffn_dim = 128;
  /// Length of the learned positional table; longer inputs are rejected.
  std::size_t max_frames = 160;

  /// Throws ConfigError unless the stride product is 320, every stage has
  /// width - stride even and non-negative, and hidden_dim % num_heads == 0.
  void validate() const;
  /// floor(samples / 320).
  static std::size_t frame_count(std::size_t samples) { return samples / kSamplesPerFrame; }
};

/// Per-clip standardisation to zero mean and unit variance (constant clips
/// are only centred).
std::vector<double> standardize(std::span<const double> samples);

/// Conv feature extractor (GELU after each stage), LayerNorm, projection to
/// hidden_dim, learned positional embedding, post-norm transformer stack.
class Encoder {
 public:
  Encoder() = default;
  Encoder(const EncoderConfig& config, std::uint64_t seed, const std::string& name);

  /// Hidden state after each transformer layer, each [T x D], T = floor(N/320).
  /// Throws ShapeError for clips shorter than 400 samples or longer than
  /// max_frames frames.
  std::vector<Tensor> forward(std::span<const double> samples) const;
  /// Conv features projected to hidden_dim, before the transformer.
  Tensor embed(std::span<const double> samples) const;

  void collect(nn::ParamList& out) const;
  /// Parameter groups for reporting: "<name>.conv", ".proj", ".layerK".
  std::vector<std::pair<std::string, nn::ParamList>> groups() const;
  const EncoderConfig& config() const { return config_; }
  const std::string& name() const { return name_; }

 private:
  EncoderConfig config_;
  std::string name_;
  std::vector<nn::Conv1d> convs_;
  nn::LayerNorm feature_norm_;
  nn::Linear projection_;
  Tensor positions_;
  std::vector<nn::TransformerLayer> layers_;
};

}  // namespace qkd
