#include "qkd/tensor/nn.hpp"

#include <cmath>

#include "qkd/errors.hpp"
#include "qkd/rng.hpp"
#include "qkd/tensor/ops.hpp"

namespace qkd::nn {

Tensor init_uniform(Shape shape, std::size_t fan_in, std::uint64_t seed,
                    const std::string& name) {
  Rng rng(seed, name);
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(numel(shape));
  for (double& v : values) v = rng.uniform(-bound, bound);
  Tensor t(std::move(shape), std::move(values), true);
  t.set_name(name);
  return t;
}

Tensor init_constant(Shape shape, double value, const std::string& name) {
  Tensor t = Tensor::full(std::move(shape), value, true);
  t.set_name(name);
  return t;
}

std::size_t count_scalars(const ParamList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

Linear::Linear(std::size_t in, std::size_t out, std::uint64_t seed,
               const std::string& name)
    : weight(init_uniform({in, out}, in, seed, name + ".weight")),
      bias(init_uniform({out}, in, seed, name + ".bias")) {}

Tensor Linear::forward(const Tensor& x) const {
  return ops::add(ops::matmul(x, weight), bias);
}

void Linear::collect(ParamList& out) const {
  out.push_back({weight.name(), weight});
  out.push_back({bias.name(), bias});
}

LayerNorm::LayerNorm(std::size_t dim, const std::string& name)
    : gain(init_constant({dim}, 1.0, name + ".gain")),
      bias(init_constant({dim}, 0.0, name + ".bias")) {}

Tensor LayerNorm::forward(const Tensor& x) const {
  return ops::layer_norm(x, gain, bias);
}

void LayerNorm::collect(ParamList& out) const {
  out.push_back({gain.name(), gain});
  out.push_back({bias.name(), bias});
}

Conv1d::Conv1d(std::size_t in_channels, std::size_t out_channels,
               std::size_t width, std::size_t stride_, std::size_t padding_,
               std::uint64_t seed, const std::string& name)
    : weight(init_uniform({out_channels, in_channels, width},
                          in_channels * width, seed, name + ".weight")),
      bias(init_uniform({out_channels}, in_channels * width, seed,
                        name + ".bias")),
      stride(stride_),
      padding(padding_) {}

Tensor Conv1d::forward(const Tensor& x) const {
  return ops::conv1d(x, weight, bias, stride, padding);
}

void Conv1d::collect(ParamList& out) const {
  out.push_back({weight.name(), weight});
  out.push_back({bias.name(), bias});
}

ConvTranspose1d::ConvTranspose1d(std::size_t in_channels,
                                 std::size_t out_channels, std::size_t width,
                                 std::size_t stride_, std::size_t padding_,
                                 std::uint64_t seed, const std::string& name)
    : weight(init_uniform({in_channels, out_channels, width},
                          in_channels * width, seed, name + ".weight")),
      bias(init_uniform({out_channels}, in_channels * width, seed,
                        name + ".bias")),
      stride(stride_),
      padding(padding_) {}

Tensor ConvTranspose1d::forward(const Tensor& x) const {
  return ops::conv_transpose1d(x, weight, bias, stride, padding);
}

void ConvTranspose1d::collect(ParamList& out) const {
  out.push_back({weight.name(), weight});
  out.push_back({bias.name(), bias});
}

Lstm::Lstm(std::size_t input, std::size_t hidden, bool reverse_,
           std::uint64_t seed, const std::string& name)
    : w_ih(init_uniform({input, 4 * hidden}, input, seed, name + ".w_ih")),
      w_hh(init_uniform({hidden, 4 * hidden}, hidden, seed, name + ".w_hh")),
      bias(init_uniform({4 * hidden}, hidden, seed, name + ".bias")),
      reverse(reverse_) {
  auto b = bias.mutable_values();
  for (std::size_t j = hidden; j < 2 * hidden; ++j) b[j] = 1.0;
}

Tensor Lstm::forward(const Tensor& x) const {
  return ops::lstm(x, w_ih, w_hh, bias, reverse);
}

void Lstm::collect(ParamList& out) const {
  out.push_back({w_ih.name(), w_ih});
  out.push_back({w_hh.name(), w_hh});
  out.push_back({bias.name(), bias});
}

BiLstm::BiLstm(std::size_t input, std::size_t hidden, std::size_t layers,
               std::uint64_t seed, const std::string& name) {
  if (layers == 0) throw ConfigError(name + ": BiLSTM needs at least 1 layer");
  for (std::size_t l = 0; l < layers; ++l) {
    const std::size_t in = l == 0 ? input : 2 * hidden;
    const std::string prefix = name + ".layer" + std::to_string(l);
    forward_dir.emplace_back(in, hidden, false, seed, prefix + ".fwd");
    backward_dir.emplace_back(in, hidden, true, seed, prefix + ".bwd");
  }
}

Tensor BiLstm::forward(const Tensor& x) const {
  Tensor h = x;
  for (std::size_t l = 0; l < forward_dir.size(); ++l) {
    const Tensor both[] = {forward_dir[l].forward(h),
                           backward_dir[l].forward(h)};
    h = ops::concat(both, 1);
  }
  return h;
}

void BiLstm::collect(ParamList& out) const {
  for (std::size_t l = 0; l < forward_dir.size(); ++l) {
    forward_dir[l].collect(out);
    backward_dir[l].collect(out);
  }
}

MultiHeadAttention::MultiHeadAttention(std::size_t dim, std::size_t heads_,
                                       std::uint64_t seed,
                                       const std::string& name)
    : heads(heads_) {
  if (heads == 0 || dim % heads != 0) {
    throw ConfigError(name + ": model dim " + std::to_string(dim) +
                      " not divisible by " + std::to_string(heads) + " heads");
  }
  query = Linear(dim, dim, seed, name + ".query");
  key = Linear(dim, dim, seed, name + ".key");
  value = Linear(dim, dim, seed, name + ".value");
  output = Linear(dim, dim, seed, name + ".output");
}

Tensor MultiHeadAttention::forward(const Tensor& x,
                                   std::vector<Tensor>* weights) const {
  const std::size_t dim = x.dim(1);
  const std::size_t head_dim = dim / heads;
  const double inv_scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  const Tensor q = query.forward(x);
  const Tensor k = key.forward(x);
  const Tensor v = value.forward(x);
  std::vector<Tensor> parts;
  parts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    const std::size_t start = h * head_dim;
    const Tensor qh = ops::slice(q, 1, start, head_dim);
    const Tensor kh = ops::slice(k, 1, start, head_dim);
    const Tensor vh = ops::slice(v, 1, start, head_dim);
    const Tensor scores =
        ops::scale(ops::matmul(qh, ops::transpose(kh)), inv_scale);
    const Tensor attn = ops::softmax(scores);
    if (weights) weights->push_back(attn);
    parts.push_back(ops::matmul(attn, vh));
  }
  return output.forward(ops::concat(parts, 1));
}

void MultiHeadAttention::collect(ParamList& out) const {
  query.collect(out);
  key.collect(out);
  value.collect(out);
  output.collect(out);
}

TransformerLayer::TransformerLayer(std::size_t dim, std::size_t heads,
                                   std::size_t ffn_dim, std::uint64_t seed,
                                   const std::string& name)
    : attention(dim, heads, seed, name + ".attention"),
      norm1(dim, name + ".norm1"),
      norm2(dim, name + ".norm2"),
      ffn_in(dim, ffn_dim, seed, name + ".ffn_in"),
      ffn_out(ffn_dim, dim, seed, name + ".ffn_out") {}

Tensor TransformerLayer::forward(const Tensor& x,
                                 std::vector<Tensor>* weights) const {
  if (x.rank() != 2) {
    throw ShapeError("transformer layer expects [T x D], got " +
                     to_string(x.shape()));
  }
  const Tensor h = norm1.forward(ops::add(x, attention.forward(x, weights)));
  return feed_forward(h);
}

Tensor TransformerLayer::feed_forward(const Tensor& h) const {
  const Tensor f = ffn_out.forward(ops::gelu(ffn_in.forward(h)));
  return norm2.forward(ops::add(h, f));
}

void TransformerLayer::collect(ParamList& out) const {
  attention.collect(out);
  norm1.collect(out);
  ffn_in.collect(out);
  ffn_out.collect(out);
  norm2.collect(out);
}

}  // namespace qkd::nn
