#include "qkd/models/encoder.hpp"

#include <cmath>

#include "qkd/errors.hpp"
#include "qkd/tensor/ops.hpp"

namespace qkd {

std::vector<ConvStage> default_conv_stack(std::size_t channels) {
  return {{channels, 9, 5}, {channels, 8, 4}, {channels, 8, 4},
          {channels, 4, 2}, {channels, 4, 2}};
}

void EncoderConfig::validate() const {
  if (conv_stack.empty()) throw ConfigError("encoder: conv_stack is empty");
  std::size_t product = 1;
  for (std::size_t i = 0; i < conv_stack.size(); ++i) {
    const auto& s = conv_stack[i];
    const std::string where = "encoder: conv_stack[" + std::to_string(i) + "]";
    if (s.channels == 0 || s.stride == 0) throw ConfigError(where + " has zero channels or stride");
    if (s.width < s.stride || (s.width - s.stride) % 2 != 0) {
      throw ConfigError(where + ": width - stride must be even and >= 0");
    }
    product *= s.stride;
  }
  if (product != kSamplesPerFrame) {
    throw ConfigError("encoder: conv stride product " + std::to_string(product) +
                      " must be 320 (one frame per 20 ms)");
  }
  if (hidden_dim == 0 || num_heads == 0 || hidden_dim % num_heads != 0) {
    throw ConfigError("encoder: hidden_dim " + std::to_string(hidden_dim) +
                      " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (num_layers == 0) throw ConfigError("encoder: num_layers must be >= 1");
  if (ffn_dim == 0 || max_frames == 0) throw ConfigError("encoder: ffn_dim and max_frames must be positive");
}

std::vector<double> standardize(std::span<const double> samples) {
  double mean = 0.0;
  for (double v : samples) mean += v;
  mean /= static_cast<double>(samples.size());
  double var = 0.0;
  for (double v : samples) var += (v - mean) * (v - mean);
  var /= static_cast<double>(samples.size());
  const double inv = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (samples[i] - mean) * inv;
  return out;
}

Encoder::Encoder(const EncoderConfig& config, std::uint64_t seed, const std::string& name)
    : config_(config), name_(name) {
  config_.validate();
  std::size_t in = 1;
  for (std::size_t i = 0; i < config_.conv_stack.size(); ++i) {
    const auto& s = config_.conv_stack[i];
    convs_.emplace_back(in, s.channels, s.width, s.stride, s.padding(), seed,
                        name + ".conv" + std::to_string(i));
    in = s.channels;
  }
  feature_norm_ = nn::LayerNorm(in, name + ".feature_norm");
  projection_ = nn::Linear(in, config_.hidden_dim, seed, name + ".proj");
  positions_ = nn::init_uniform({config_.max_frames, config_.hidden_dim}, config_.hidden_dim,
                                seed, name + ".positions");
  for (std::size_t l = 0; l < config_.num_layers; ++l) {
    layers_.emplace_back(config_.hidden_dim, config_.num_heads, config_.ffn_dim, seed,
                         name + ".layer" + std::to_string(l + 1));
  }
}

Tensor Encoder::embed(std::span<const double> samples) const {
  if (samples.size() < kMinClipSamples) {
    throw ShapeError(name_ + ": clip of " + std::to_string(samples.size()) +
                     " samples is shorter than " + std::to_string(kMinClipSamples));
  }
  const std::size_t frames = EncoderConfig::frame_count(samples.size());
  if (frames > config_.max_frames) {
    throw ShapeError(name_ + ": " + std::to_string(frames) + " frames exceed max_frames " +
                     std::to_string(config_.max_frames));
  }
  Tensor h({1, samples.size()}, standardize(samples));
  for (const auto& conv : convs_) h = ops::gelu(conv.forward(h));
  h = feature_norm_.forward(ops::transpose(h));
  h = projection_.forward(h);
  return ops::add(h, ops::slice(positions_, 0, 0, frames));
}

std::vector<Tensor> Encoder::forward(std::span<const double> samples) const {
  Tensor h = embed(samples);
  std::vector<Tensor> hiddens;
  hiddens.reserve(layers_.size());
  for (const auto& layer : layers_) {
    h = layer.forward(h);
    hiddens.push_back(h);
  }
  return hiddens;
}

void Encoder::collect(nn::ParamList& out) const {
  for (auto& [group, params] : groups()) out.insert(out.end(), params.begin(), params.end());
}

std::vector<std::pair<std::string, nn::ParamList>> Encoder::groups() const {
  std::vector<std::pair<std::string, nn::ParamList>> g;
  nn::ParamList conv;
  for (const auto& c : convs_) c.collect(conv);
  feature_norm_.collect(conv);
  g.emplace_back(name_ + ".conv", std::move(conv));
  nn::ParamList proj;
  projection_.collect(proj);
  proj.push_back({positions_.name(), positions_});
  g.emplace_back(name_ + ".proj", std::move(proj));
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    nn::ParamList p;
    layers_[l].collect(p);
    g.emplace_back(name_ + ".layer" + std::to_string(l + 1), std::move(p));
  }
  return g;
}

}  // namespace qkd
