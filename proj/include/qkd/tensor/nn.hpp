#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qkd/tensor/tensor.hpp"

namespace qkd::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};
using ParamList = std::vector<NamedTensor>;

/// uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) drawn from the RNG stream
/// (seed, name); the tensor is named and requires a gradient.
Tensor init_uniform(Shape shape, std::size_t fan_in, std::uint64_t seed,
                    const std::string& name);
Tensor init_constant(Shape shape, double value, const std::string& name);

std::size_t count_scalars(const ParamList& params);

/// y = x W + b with W [in x out].
struct Linear {
  Linear() = default;
  Linear(std::size_t in, std::size_t out, std::uint64_t seed,
         const std::string& name);
  Tensor forward(const Tensor& x) const;
  void collect(ParamList& out) const;
  std::size_t in_features() const { return weight.dim(0); }
  std::size_t out_features() const { return weight.dim(1); }

  Tensor weight, bias;
};

struct LayerNorm {
  LayerNorm() = default;
  LayerNorm(std::size_t dim, const std::string& name);
  Tensor forward(const Tensor& x) const;
  void collect(ParamList& out) const;

  Tensor gain, bias;
};

struct Conv1d {
  Conv1d() = default;
  Conv1d(std::size_t in_channels, std::size_t out_channels, std::size_t width,
         std::size_t stride, std::size_t padding, std::uint64_t seed,
         const std::string& name);
  Tensor forward(const Tensor& x) const;
  void collect(ParamList& out) const;

  Tensor weight, bias;
  std::size_t stride = 1, padding = 0;
};

struct ConvTranspose1d {
  ConvTranspose1d() = default;
  ConvTranspose1d(std::size_t in_channels, std::size_t out_channels,
                  std::size_t width, std::size_t stride, std::size_t padding,
                  std::uint64_t seed, const std::string& name);
  Tensor forward(const Tensor& x) const;
  void collect(ParamList& out) const;

  Tensor weight, bias;
  std::size_t stride = 1, padding = 0;
};

/// One direction of one LSTM layer. Forget-gate bias starts at 1.
struct Lstm {
  Lstm() = default;
  Lstm(std::size_t input, std::size_t hidden, bool reverse, std::uint64_t seed,
       const std::string& name);
  Tensor forward(const Tensor& x) const;
  void collect(ParamList& out) const;
  std::size_t hidden() const { return w_hh.dim(0); }

  Tensor w_ih, w_hh, bias;
  bool reverse = false;
};

/// Stacked bidirectional LSTM: [T x D_in] -> [T x 2H].
struct BiLstm {
  BiLstm() = default;
  BiLstm(std::size_t input, std::size_t hidden, std::size_t layers,
         std::uint64_t seed, const std::string& name);
  Tensor forward(const Tensor& x) const;
  void collect(ParamList& out) const;
  std::size_t output_dim() const { return 2 * forward_dir.front().hidden(); }

  std::vector<Lstm> forward_dir, backward_dir;
};

/// Multi-head scaled dot-product self-attention.
struct MultiHeadAttention {
  MultiHeadAttention() = default;
  /// Throws ConfigError unless dim % heads == 0.
  MultiHeadAttention(std::size_t dim, std::size_t heads, std::uint64_t seed,
                     const std::string& name);
  /// When `weights` is non-null it receives one [T x T] matrix per head.
  Tensor forward(const Tensor& x, std::vector<Tensor>* weights = nullptr) const;
  void collect(ParamList& out) const;

  Linear query, key, value, output;
  std::size_t heads = 1;
};

/// Post-norm encoder layer:
///   h = LN(x + MHA(x));  y = LN(h + W2 gelu(W1 h)).
struct TransformerLayer {
  TransformerLayer() = default;
  TransformerLayer(std::size_t dim, std::size_t heads, std::size_t ffn_dim,
                   std::uint64_t seed, const std::string& name);
  Tensor forward(const Tensor& x, std::vector<Tensor>* weights = nullptr) const;
  /// The position-wise feed-forward block with its residual and norm.
  Tensor feed_forward(const Tensor& h) const;
  void collect(ParamList& out) const;

  MultiHeadAttention attention;
  LayerNorm norm1, norm2;
  Linear ffn_in, ffn_out;
};

}  // namespace qkd::nn
