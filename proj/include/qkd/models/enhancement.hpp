#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string_view>

#include "qkd/signal/stft.hpp"
#include "qkd/tensor/nn.hpp"

namespace qkd {

enum class EnhancementKind { kNone, kWaveform, kMask };
std::string_view enhancement_kind_name(EnhancementKind kind);
EnhancementKind parse_enhancement_kind(std::string_view name);

/// fft 512, window 400, hop 320, no centring.
StftConfig mask_stft_config();

struct MaskHeadConfig {
  std::size_t lstm_hidden = 32;
  std::size_t lstm_layers = 3;
};

/// 3-layer BiLSTM, affine map to 257 bins, sigmoid.
class MaskHead {
 public:
  MaskHead() = default;
  MaskHead(std::size_t input_dim, const MaskHeadConfig& config, std::uint64_t seed);

  /// [T x 257] mask in (0, 1).
  Tensor mask(const Tensor& final_hidden) const;
  /// istft(mask * |STFT(noisy)|, phase(noisy)) with the noisy length.
  Tensor enhance(const Tensor& final_hidden, std::span<const double> noisy) const;
  /// Applies a given [T x 257] mask. Throws ShapeError when the mask and
  /// STFT frame counts differ by more than one; otherwise trims to the
  /// shorter.
  static Tensor apply_mask(const Tensor& mask, std::span<const double> noisy);

  void collect(nn::ParamList& out) const;

 private:
  nn::BiLstm lstm_;
  nn::Linear output_;
};

struct WaveformHeadConfig {
  std::size_t lstm_hidden = 32;
  /// Channels after each of the seven transposed stages; the last is 1.
  std::array<std::size_t, 7> channels{32, 32, 16, 16, 8, 8, 1};
};

/// One BiLSTM layer and seven transposed convolutions with strides
/// (5, 4, 4, 2, 2, 1, 1), GELU between stages. Output is zero-padded at the
/// end to the requested length.
class WaveformHead {
 public:
  WaveformHead() = default;
  WaveformHead(std::size_t input_dim, const WaveformHeadConfig& config, std::uint64_t seed);

  /// [length]; throws ShapeError if length < 320 * T or length >= 320 * (T + 1).
  Tensor reconstruct(const Tensor& final_hidden, std::size_t length) const;

  void collect(nn::ParamList& out) const;
  std::vector<nn::ConvTranspose1d>& stages() { return stages_; }

 private:
  nn::BiLstm lstm_;
  std::vector<nn::ConvTranspose1d> stages_;
};

}  // namespace qkd
