#include "qkd/signal/metrics.hpp"

#include <cmath>

#include "qkd/errors.hpp"
#include "qkd/tensor/ops.hpp"

namespace qkd {

double si_sdr(std::span<const double> estimate, std::span<const double> reference,
              bool zero_mean) {
  if (estimate.size() != reference.size()) {
    throw ShapeError("si_sdr: estimate has " + std::to_string(estimate.size()) +
                     " samples, reference " + std::to_string(reference.size()));
  }
  if (reference.empty()) throw MetricError("si_sdr: empty signals");
  std::vector<double> s(reference.begin(), reference.end());
  std::vector<double> e(estimate.begin(), estimate.end());
  if (zero_mean) {
    double ms = 0.0, me = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
      ms += s[i];
      me += e[i];
    }
    ms /= static_cast<double>(s.size());
    me /= static_cast<double>(e.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] -= ms;
      e[i] -= me;
    }
  }
  double ss = 0.0, es = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    ss += s[i] * s[i];
    es += e[i] * s[i];
  }
  if (ss <= 0.0) throw MetricError("si_sdr: reference has zero power");
  const double a = es / ss;
  double target = 0.0, residual = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double t = a * s[i];
    target += t * t;
    residual += (e[i] - t) * (e[i] - t);
  }
  if (residual <= 0.0) return kSiSdrCapDb;
  if (target <= 0.0) return -kSiSdrCapDb;
  return std::clamp(10.0 * std::log10(target / residual), -kSiSdrCapDb, kSiSdrCapDb);
}

std::vector<StftConfig> mr_stft_resolutions() {
  return {{512, 50, 240, true}, {1024, 120, 600, true}, {2048, 240, 1200, true}};
}

namespace ops {

Tensor frobenius_norm(const Tensor& x) {
  double ss = 0.0;
  for (double v : x.values()) ss += v * v;
  const double norm = std::sqrt(ss);
  const bool rec = autograd::should_record({&x});
  Tensor result = Tensor::from_op({}, {norm}, rec);
  if (rec) {
    auto px = x.shared();
    Graph::current()->record("frobenius_norm", {x}, result,
                             [px, norm](std::span<const double> g) {
                               if (norm <= 0.0) return;
                               auto gx = autograd::grad_of(*px);
                               for (std::size_t i = 0; i < gx.size(); ++i) {
                                 gx[i] += g[0] * px->values[i] / norm;
                               }
                             });
  }
  return result;
}

}  // namespace ops

Tensor mr_stft_loss(const Tensor& estimate, const Tensor& reference,
                    std::span<const StftConfig> resolutions) {
  if (estimate.shape() != reference.shape() || estimate.rank() != 1) {
    throw ShapeError("mr_stft_loss: estimate " + to_string(estimate.shape()) +
                     " vs reference " + to_string(reference.shape()));
  }
  Tensor total = Tensor::scalar(0.0);
  for (const auto& cfg : resolutions) {
    const Tensor s_ref = ops::stft_magnitude(reference, cfg);
    const Tensor s_est = ops::stft_magnitude(estimate, cfg);
    const Tensor sc = ops::div(ops::frobenius_norm(ops::sub(s_ref, s_est)),
                               ops::clamp_min(ops::frobenius_norm(s_ref), kMagnitudeFloor));
    const Tensor mag = ops::mean(ops::abs(ops::sub(ops::log(ops::clamp_min(s_ref, kMagnitudeFloor)),
                                                   ops::log(ops::clamp_min(s_est, kMagnitudeFloor)))));
    total = ops::add(total, ops::add(sc, mag));
  }
  return total;
}

Tensor mr_stft_loss(const Tensor& estimate, const Tensor& reference) {
  const auto res = mr_stft_resolutions();
  return mr_stft_loss(estimate, reference, res);
}

double mr_stft_loss(std::span<const double> estimate, std::span<const double> reference) {
  NoGradGuard guard;
  const Tensor e({estimate.size()}, {estimate.begin(), estimate.end()});
  const Tensor r({reference.size()}, {reference.begin(), reference.end()});
  return mr_stft_loss(e, r).item();
}

}  // namespace qkd
