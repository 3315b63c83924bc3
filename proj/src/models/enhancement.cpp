#include "qkd/models/enhancement.hpp"

#include <cstdlib>
#include <string>

#include "qkd/errors.hpp"
#include "qkd/models/encoder.hpp"
#include "qkd/tensor/ops.hpp"

namespace qkd {

namespace {

constexpr std::array<std::size_t, 7> kUpStrides{5, 4, 4, 2, 2, 1, 1};

// Width and crop giving exactly stride * T outputs.
std::pair<std::size_t, std::size_t> stage_geometry(std::size_t stride) {
  switch (stride) {
    case 1: return {3, 1};
    case 2: return {4, 1};
    case 4: return {8, 2};
    default: return {stride, 0};
  }
}

}  // namespace

std::string_view enhancement_kind_name(EnhancementKind kind) {
  switch (kind) {
    case EnhancementKind::kNone: return "none";
    case EnhancementKind::kWaveform: return "waveform";
    case EnhancementKind::kMask: return "mask";
  }
  return "unknown";
}

EnhancementKind parse_enhancement_kind(std::string_view name) {
  for (auto k : {EnhancementKind::kNone, EnhancementKind::kWaveform, EnhancementKind::kMask}) {
    if (enhancement_kind_name(k) == name) return k;
  }
  throw ConfigError("unknown enhancement head '" + std::string(name) +
                    "' (expected none, waveform or mask)");
}

StftConfig mask_stft_config() { return StftConfig{512, 320, 400, false}; }

MaskHead::MaskHead(std::size_t input_dim, const MaskHeadConfig& config, std::uint64_t seed)
    : lstm_(input_dim, config.lstm_hidden, config.lstm_layers, seed, "enhance.mask.lstm"),
      output_(2 * config.lstm_hidden, mask_stft_config().bins(), seed, "enhance.mask.out") {}

Tensor MaskHead::mask(const Tensor& final_hidden) const {
  return ops::sigmoid(output_.forward(lstm_.forward(final_hidden)));
}

Tensor MaskHead::apply_mask(const Tensor& mask, std::span<const double> noisy) {
  const auto cfg = mask_stft_config();
  if (mask.rank() != 2 || mask.dim(1) != cfg.bins()) {
    throw ShapeError("mask must be [T x " + std::to_string(cfg.bins()) + "], got " +
                     to_string(mask.shape()));
  }
  const StftFrame spec = stft(noisy, cfg);
  const std::size_t t_mask = mask.dim(0);
  if (t_mask > spec.frames + 1 || spec.frames > t_mask + 1) {
    throw ShapeError("mask has " + std::to_string(t_mask) + " frames, noisy STFT has " +
                     std::to_string(spec.frames));
  }
  const std::size_t frames = std::min(t_mask, spec.frames);
  std::vector<double> mag(spec.bins * frames), phase(spec.bins * frames);
  for (std::size_t f = 0; f < spec.bins; ++f) {
    for (std::size_t k = 0; k < frames; ++k) {
      mag[f * frames + k] = spec.magnitude[f * spec.frames + k];
      phase[f * frames + k] = spec.phase[f * spec.frames + k];
    }
  }
  const Tensor noisy_mag({spec.bins, frames}, std::move(mag));
  const Tensor m = ops::transpose(ops::slice(mask, 0, 0, frames));
  return ops::istft_from_magnitude(ops::mul(m, noisy_mag), phase, cfg, noisy.size());
}

Tensor MaskHead::enhance(const Tensor& final_hidden, std::span<const double> noisy) const {
  return apply_mask(mask(final_hidden), noisy);
}

void MaskHead::collect(nn::ParamList& out) const {
  lstm_.collect(out);
  output_.collect(out);
}

WaveformHead::WaveformHead(std::size_t input_dim, const WaveformHeadConfig& config,
                           std::uint64_t seed)
    : lstm_(input_dim, config.lstm_hidden, 1, seed, "enhance.wave.lstm") {
  if (config.channels.back() != 1) throw ConfigError("waveform head must end with 1 channel");
  std::size_t in = 2 * config.lstm_hidden;
  for (std::size_t i = 0; i < kUpStrides.size(); ++i) {
    const auto [width, crop] = stage_geometry(kUpStrides[i]);
    stages_.emplace_back(in, config.channels[i], width, kUpStrides[i], crop, seed,
                         "enhance.wave.up" + std::to_string(i));
    in = config.channels[i];
  }
}

Tensor WaveformHead::reconstruct(const Tensor& final_hidden, std::size_t length) const {
  const std::size_t frames = final_hidden.dim(0);
  const std::size_t produced = frames * kSamplesPerFrame;
  if (length < produced || length >= produced + kSamplesPerFrame) {
    throw ShapeError("waveform head: " + std::to_string(frames) + " frames cannot cover " +
                     std::to_string(length) + " samples");
  }
  Tensor h = ops::transpose(lstm_.forward(final_hidden));
  for (std::size_t i = 0; i < stages_.size(); ++i) {
    h = stages_[i].forward(h);
    if (i + 1 < stages_.size()) h = ops::gelu(h);
  }
  h = ops::reshape(h, {produced});
  return length > produced ? ops::pad_end(h, length - produced) : h;
}

void WaveformHead::collect(nn::ParamList& out) const {
  lstm_.collect(out);
  for (const auto& s : stages_) s.collect(out);
}

}  // namespace qkd
