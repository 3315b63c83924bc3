#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qkd/tensor/tensor.hpp"

/// Differentiable operations. Every function records a backward closure in
/// the current Graph when at least one input requires a gradient.
namespace qkd::ops {

// Broadcasting binary arithmetic (numpy-style trailing-dimension rules).
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws DomainError when a divisor is exactly zero.
Tensor div(const Tensor& a, const Tensor& b);

Tensor add_scalar(const Tensor& a, double s);
Tensor scale(const Tensor& a, double s);

Tensor neg(const Tensor& a);
Tensor abs(const Tensor& a);
/// Throws DomainError for non-positive inputs.
Tensor log(const Tensor& a);
Tensor exp(const Tensor& a);
/// Exact (erf) form.
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor square(const Tensor& a);
/// Throws DomainError for negative inputs; the gradient at 0 is taken as 0.
Tensor sqrt(const Tensor& a);
/// max(a, floor); gradient flows only where a > floor.
Tensor clamp_min(const Tensor& a, double floor);

/// Sum of all elements, scalar result.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
/// Reduces one axis (removed from the result shape).
Tensor sum(const Tensor& a, std::size_t axis);
Tensor mean(const Tensor& a, std::size_t axis);

Tensor reshape(const Tensor& a, Shape shape);
/// Swaps the two trailing axes of a rank-2 or rank-3 tensor.
Tensor transpose(const Tensor& a);
Tensor slice(const Tensor& a, std::size_t axis, std::size_t start,
             std::size_t length);
Tensor concat(std::span<const Tensor> parts, std::size_t axis);
/// Appends `count` zeros along the last axis.
Tensor pad_end(const Tensor& a, std::size_t count);

/// [m x k] * [k x n]; a rank-3 lhs [B x m x k] is batched and the rhs may be
/// rank-2 (shared) or rank-3 with the same batch.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Softmax over the last axis.
Tensor softmax(const Tensor& a);
Tensor log_softmax(const Tensor& a);
/// Normalises over the last axis then applies gain and bias of that length.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);
/// Mean negative log-likelihood of `labels` under row-wise softmax(logits).
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

/// x [C_in x T], weight [C_out x C_in x K], bias [C_out] (may be undefined).
/// Output length floor((T + 2p - K) / stride) + 1.
Tensor conv1d(const Tensor& x, const Tensor& weight, const Tensor& bias,
              std::size_t stride, std::size_t padding = 0);
/// x [C_in x T], weight [C_in x C_out x K], bias [C_out] (may be undefined).
/// Output length (T - 1) * stride + K - 2p; `padding` crops both ends.
Tensor conv_transpose1d(const Tensor& x, const Tensor& weight,
                        const Tensor& bias, std::size_t stride,
                        std::size_t padding = 0);

/// One unidirectional LSTM pass. x [T x D], w_ih [D x 4H], w_hh [H x 4H],
/// bias [4H]; gate blocks ordered input, forget, cell, output. With
/// `reverse` the sequence is consumed back to front and outputs keep the
/// original time order. Returns hidden states [T x H].
Tensor lstm(const Tensor& x, const Tensor& w_ih, const Tensor& w_hh,
            const Tensor& bias, bool reverse);

}  // namespace qkd::ops
