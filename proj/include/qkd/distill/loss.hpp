#pragma once

#include <span>
#include <string_view>

#include "qkd/tensor/tensor.hpp"

namespace qkd {

/// Mean over frames of (1/D) |a_t - b_t|_1 - lambda * log sigmoid(cos(a_t, b_t)),
/// with a 1e-12 floor on each norm in the cosine. Inputs are [T x D].
Tensor distill_loss(const Tensor& teacher, const Tensor& student, double lambda);

enum class EnhancementLoss { kL1, kL2, kMrStft };
std::string_view enhancement_loss_name(EnhancementLoss kind);
EnhancementLoss parse_enhancement_loss(std::string_view name);

/// Loss of an estimate against the clean reference. Lengths may differ by at
/// most one hop (320 samples), in which case both are trimmed to the shorter
/// one; larger differences are a ShapeError.
Tensor enhancement_loss(const Tensor& estimate, std::span<const double> reference,
                        EnhancementLoss kind);

}  // namespace qkd
