#include "qkd/tensor/optim.hpp"

#include <cmath>

#include "qkd/errors.hpp"

namespace qkd {

void adamw_step(nn::ParamList& params, AdamWState& state, double lr) {
  if (!(lr >= 0.0)) {
    throw ConfigError("adamw: learning rate must be >= 0, got " +
                      std::to_string(lr));
  }
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw TrainingError("adamw: non-finite gradient for parameter '" +
                            p.name + "'");
      }
    }
  }
  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(state.beta1, t);
  const double bc2 = 1.0 - std::pow(state.beta2, t);
  for (auto& p : params) {
    auto values = p.tensor.mutable_values();
    const auto grad = p.tensor.grad();
    auto& m = state.first_moment[p.name];
    auto& v = state.second_moment[p.name];
    if (m.size() != values.size()) m.assign(values.size(), 0.0);
    if (v.size() != values.size()) v.assign(values.size(), 0.0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double g = grad.empty() ? 0.0 : grad[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      values[i] -= lr * state.weight_decay * values[i];
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

double clip_grad_norm(nn::ParamList& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params) {
    for (double g : p.tensor.grad()) sq += g * g;
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const double s = max_norm / norm;
    for (auto& p : params) {
      for (double& g : p.tensor.mutable_grad()) g *= s;
    }
  }
  return norm;
}

void zero_grads(nn::ParamList& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

double lr_schedule(std::uint64_t step, double peak, std::uint64_t warmup_steps,
                   std::uint64_t total_steps, ScheduleKind kind) {
  if (total_steps == 0) throw ConfigError("lr_schedule: total_steps is 0");
  if (warmup_steps >= total_steps) {
    throw ConfigError("lr_schedule: warmup_steps must be < total_steps");
  }
  if (step > total_steps) {
    throw ConfigError("lr_schedule: step " + std::to_string(step) +
                      " beyond total_steps " + std::to_string(total_steps));
  }
  if (step <= warmup_steps) {
    if (kind == ScheduleKind::kHoldDecay || warmup_steps == 0) return peak;
    return peak * static_cast<double>(step) /
           static_cast<double>(warmup_steps);
  }
  return peak * static_cast<double>(total_steps - step) /
         static_cast<double>(total_steps - warmup_steps);
}

}  // namespace qkd
