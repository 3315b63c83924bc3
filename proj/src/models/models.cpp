#include "qkd/models/models.hpp"

#include <cstring>

#include "qkd/errors.hpp"
#include "qkd/rng.hpp"
#include "qkd/tensor/ops.hpp"

namespace qkd {

EncoderConfig default_teacher_config() { return EncoderConfig{}; }

EncoderConfig default_student_config() {
  EncoderConfig c;
  c.num_layers = 2;
  return c;
}

Teacher::Teacher(const EncoderConfig& config, std::uint64_t seed)
    : encoder_(config, seed, "teacher") {}

std::vector<Tensor> Teacher::forward(std::span<const double> samples) const {
  return encoder_.forward(samples);
}

std::vector<Tensor> Teacher::features(std::span<const double> samples) const {
  if (!frozen_) throw StateError("teacher must be frozen before it provides targets");
  NoGradGuard guard;
  return encoder_.forward(samples);
}

void Teacher::freeze() {
  for (auto& p : params()) p.tensor.set_requires_grad(false);
  frozen_ = true;
}

nn::ParamList Teacher::params() const {
  nn::ParamList out;
  encoder_.collect(out);
  return out;
}

std::uint64_t Teacher::hash() const { return params_hash(params()); }

std::string_view distill_mode_name(DistillMode mode) {
  return mode == DistillMode::kLayerwise ? "layerwise" : "l2l";
}

DistillMode parse_distill_mode(std::string_view name) {
  if (name == "layerwise") return DistillMode::kLayerwise;
  if (name == "l2l") return DistillMode::kL2L;
  throw ConfigError("unknown distillation mode '" + std::string(name) +
                    "' (expected layerwise or l2l)");
}

void StudentConfig::validate() const {
  encoder.validate();
  if (target_layers.empty()) throw ConfigError("student: target layer set is empty");
  for (std::size_t i = 0; i < target_layers.size(); ++i) {
    if (target_layers[i] == 0) throw ConfigError("student: target layers are 1-based");
    if (i > 0 && target_layers[i] <= target_layers[i - 1]) {
      throw ConfigError("student: target layers must be strictly increasing");
    }
  }
  if (mode == DistillMode::kL2L && encoder.num_layers != target_layers.size()) {
    throw ConfigError("student: l2l mode needs " + std::to_string(target_layers.size()) +
                      " student layers, config has " + std::to_string(encoder.num_layers));
  }
  if (teacher_dim == 0) throw ConfigError("student: teacher_dim must be positive");
}

Student::Student(const StudentConfig& config, std::uint64_t seed)
    : config_(config), encoder_(config.encoder, seed, "student") {
  config_.validate();
  for (std::size_t layer : config_.target_layers) {
    heads_.emplace_back(config_.encoder.hidden_dim, config_.teacher_dim, seed,
                        "student.head" + std::to_string(layer));
  }
}

StudentOutput Student::forward(std::span<const double> samples) const {
  StudentOutput out;
  out.hiddens = encoder_.forward(samples);
  out.final_hidden = out.hiddens.back();
  for (std::size_t k = 0; k < heads_.size(); ++k) {
    const Tensor& src =
        config_.mode == DistillMode::kLayerwise ? out.final_hidden : out.hiddens[k];
    out.predictions.push_back(heads_[k].forward(src));
  }
  return out;
}

Tensor Student::represent(std::span<const double> samples) const {
  return encoder_.forward(samples).back();
}

nn::ParamList Student::encoder_params() const {
  nn::ParamList out;
  encoder_.collect(out);
  return out;
}

nn::ParamList Student::head_params() const {
  nn::ParamList out;
  for (const auto& h : heads_) h.collect(out);
  return out;
}

nn::ParamList Student::params() const {
  auto out = encoder_params();
  auto heads = head_params();
  out.insert(out.end(), heads.begin(), heads.end());
  return out;
}

std::uint64_t params_hash(const nn::ParamList& params) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto feed = [&h](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 0x100000001b3ULL;
    }
  };
  for (const auto& p : params) {
    feed(p.name.data(), p.name.size());
    const auto v = p.tensor.values();
    feed(v.data(), v.size() * sizeof(double));
  }
  return h;
}

}  // namespace qkd
