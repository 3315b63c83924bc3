#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "qkd/tensor/tensor.hpp"

namespace qkd::testing {

using ScalarFn = std::function<Tensor(const std::vector<Tensor>&)>;

/// Leaf tensor with standard-normal entries.
Tensor random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = true,
                     double scale = 1.0);

/// Scalar projection sum(y * w) with fixed random weights, so every output
/// element contributes a distinct amount to the checked gradient.
Tensor project(const Tensor& y, std::uint64_t seed);

/// Norm-wise relative error ||g_auto - g_fd|| / max(||g_auto||, ||g_fd||),
/// with the gradients of every input that requires one stacked into a
/// single vector. Central differences of step h.
double gradient_error(const ScalarFn& f, std::vector<Tensor> inputs,
                      double h = 1e-5);

}  // namespace qkd::testing
