#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "qkd/tensor/nn.hpp"

namespace qkd {

struct AdamWState {
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
  // Keyed by parameter name.
  std::map<std::string, std::vector<double>> first_moment;
  std::map<std::string, std::vector<double>> second_moment;
};

/// One AdamW update with decoupled weight decay:
///   p <- p - lr * wd * p - lr * m_hat / (sqrt(v_hat) + eps).
/// Parameters without a gradient buffer are treated as having a zero
/// gradient. Throws TrainingError naming the parameter on a non-finite
/// gradient and ConfigError on a negative learning rate.
void adamw_step(nn::ParamList& params, AdamWState& state, double lr);

/// Global L2 norm of all gradients; rescales them in place when it exceeds
/// `max_norm`. Returns the norm before clipping.
double clip_grad_norm(nn::ParamList& params, double max_norm);

void zero_grads(nn::ParamList& params);

enum class ScheduleKind {
  kWarmupDecay,  // 0 -> peak over warmup, then linear decay to 0
  kHoldDecay,    // peak held over warmup, then linear decay to 0
};

/// Learning rate at `step` of a run of `total_steps` updates.
double lr_schedule(std::uint64_t step, double peak, std::uint64_t warmup_steps,
                   std::uint64_t total_steps,
                   ScheduleKind kind = ScheduleKind::kWarmupDecay);

}  // namespace qkd
