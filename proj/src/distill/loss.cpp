#include "qkd/distill/loss.hpp"

#include <cmath>
#include <string>

#include "qkd/errors.hpp"
#include <spdlog/spdlog.h>
#include "qkd/models/encoder.hpp"
#include "qkd/signal/metrics.hpp"
#include "qkd/tensor/ops.hpp"

namespace qkd {

namespace {

constexpr double kNormFloor = 1e-12;

// Row-wise cosine similarity of two [T x D] tensors, as a [T x 1] tensor.
Tensor cosine_rows(const Tensor& a, const Tensor& b) {
  const Tensor dot = ops::sum(ops::mul(a, b), 1);
  const Tensor na = ops::clamp_min(ops::sqrt(ops::clamp_min(ops::sum(ops::square(a), 1), kNormFloor * kNormFloor)), kNormFloor);
  const Tensor nb = ops::clamp_min(ops::sqrt(ops::clamp_min(ops::sum(ops::square(b), 1), kNormFloor * kNormFloor)), kNormFloor);
  return ops::div(dot, ops::mul(na, nb));
}

}  // namespace

Tensor distill_loss(const Tensor& teacher, const Tensor& student, double lambda) {
  if (teacher.shape() != student.shape() || teacher.rank() != 2 || teacher.dim(1) == 0) {
    throw ShapeError("distill_loss: teacher " + to_string(teacher.shape()) + " vs student " +
                     to_string(student.shape()));
  }
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw ConfigError("distill_loss: lambda must be finite and >= 0");
  }
  const Tensor l1 = ops::mean(ops::abs(ops::sub(teacher, student)), 1);
  Tensor per_frame = l1;
  if (lambda > 0.0) {
    // -log sigmoid(c) = log(1 + exp(-c)); c is bounded in [-1, 1].
    const Tensor cos = cosine_rows(teacher, student);
    const Tensor nls = ops::neg(ops::log(ops::sigmoid(cos)));
    per_frame = ops::add(l1, ops::scale(nls, lambda));
  }
  return ops::mean(per_frame);
}

std::string_view enhancement_loss_name(EnhancementLoss kind) {
  switch (kind) {
    case EnhancementLoss::kL1: return "l1";
    case EnhancementLoss::kL2: return "l2";
    case EnhancementLoss::kMrStft: return "mr_stft";
  }
  return "unknown";
}

EnhancementLoss parse_enhancement_loss(std::string_view name) {
  for (auto k : {EnhancementLoss::kL1, EnhancementLoss::kL2, EnhancementLoss::kMrStft}) {
    if (enhancement_loss_name(k) == name) return k;
  }
  throw ConfigError("unknown enhancement loss '" + std::string(name) +
                    "' (expected l1, l2 or mr_stft)");
}

Tensor enhancement_loss(const Tensor& estimate, std::span<const double> reference,
                        EnhancementLoss kind) {
  if (estimate.rank() != 1) {
    throw ShapeError("enhancement_loss: estimate must be rank 1, got " + to_string(estimate.shape()));
  }
  const std::size_t ne = estimate.numel(), nr = reference.size();
  const std::size_t gap = ne > nr ? ne - nr : nr - ne;
  if (gap > kSamplesPerFrame) {
    throw ShapeError("enhancement_loss: estimate has " + std::to_string(ne) +
                     " samples, reference " + std::to_string(nr));
  }
  const std::size_t n = std::min(ne, nr);
  if (gap > 0) {
    spdlog::warn("enhancement_loss: trimming " + std::to_string(gap) + " samples to align lengths");
  }
  const Tensor est = gap > 0 && ne > n ? ops::slice(estimate, 0, 0, n) : estimate;
  const Tensor ref({n}, std::vector<double>(reference.begin(), reference.begin() + static_cast<std::ptrdiff_t>(n)));
  switch (kind) {
    case EnhancementLoss::kL1: return ops::mean(ops::abs(ops::sub(est, ref)));
    case EnhancementLoss::kL2: return ops::mean(ops::square(ops::sub(est, ref)));
    case EnhancementLoss::kMrStft: return mr_stft_loss(est, ref);
  }
  throw ConfigError("enhancement_loss: unknown kind");
}

}  // namespace qkd
