#include "qkd/distill/pretrain.hpp"

#include <cmath>
#include <set>

#include <spdlog/spdlog.h>

#include "qkd/distill/trainer.hpp"
#include "qkd/errors.hpp"
#include "qkd/models/checkpoint.hpp"
#include "qkd/rng.hpp"
#include "qkd/tensor/ops.hpp"

namespace qkd {

void PretrainConfig::validate() const {
  if (epochs == 0) throw ConfigError("teacher.epochs must be >= 1");
  if (batch_size == 0) throw ConfigError("teacher.batch_size must be >= 1");
  if (!(peak_lr >= 0.0) || !std::isfinite(peak_lr)) throw ConfigError("teacher.peak_lr must be >= 0");
  if (!(warmup_fraction >= 0.0 && warmup_fraction < 1.0)) {
    throw ConfigError("teacher.warmup_fraction must be in [0, 1)");
  }
  if (!(weight_decay >= 0.0)) throw ConfigError("teacher.weight_decay must be >= 0");
  if (!(grad_clip > 0.0)) throw ConfigError("teacher.grad_clip must be > 0");
}

PretrainResult pretrain_teacher(const Corpus& data, const EncoderConfig& config,
                                const PretrainConfig& pretrain) {
  pretrain.validate();
  if (data.empty()) throw DataError("pretrain_teacher: empty corpus");
  std::set<int> labels;
  for (const auto& u : data) {
    if (u.frame_labels.size() != EncoderConfig::frame_count(u.clip.size())) {
      throw DataError("pretrain_teacher: '" + u.path + "' has " +
                      std::to_string(u.frame_labels.size()) + " labels for " +
                      std::to_string(EncoderConfig::frame_count(u.clip.size())) + " frames");
    }
    labels.insert(u.frame_labels.begin(), u.frame_labels.end());
  }
  if (labels.size() < 2) {
    throw ConfigError("pretrain_teacher: frame labels span " + std::to_string(labels.size()) +
                      " class(es); need at least 2");
  }
  if (*labels.begin() < 0) throw DataError("pretrain_teacher: negative frame label");

  PretrainResult r;
  r.classes = static_cast<std::size_t>(*labels.rbegin()) + 1;
  r.teacher = Teacher(config, derive_seed(pretrain.seed, fnv1a("teacher")));
  r.classifier = nn::Linear(config.hidden_dim, r.classes,
                            derive_seed(pretrain.seed, fnv1a("teacher-classifier")),
                            "teacher.classifier");
  nn::ParamList params = r.teacher.params();
  r.classifier.collect(params);

  const std::size_t steps_per_epoch = (data.size() + pretrain.batch_size - 1) / pretrain.batch_size;
  const std::uint64_t total = pretrain.epochs * steps_per_epoch;
  const auto warmup = static_cast<std::uint64_t>(pretrain.warmup_fraction * static_cast<double>(total));
  AdamWState opt;
  opt.weight_decay = pretrain.weight_decay;
  double smoothed = 0.0;
  for (std::uint64_t step = 0; step < total; ++step) {
    const auto picks = batch_indices(pretrain.seed, data.size(), pretrain.batch_size, step);
    zero_grads(params);
    double loss_value = 0.0;
    {
      Graph graph;
      Tensor sum;
      for (const auto& [index, epoch] : picks) {
        const auto& u = data[index];
        const Tensor logits = r.classifier.forward(r.teacher.forward(u.clip.samples()).back());
        const Tensor ce = ops::cross_entropy(logits, u.frame_labels);
        sum = sum.defined() ? ops::add(sum, ce) : ce;
      }
      const Tensor loss = ops::scale(sum, 1.0 / static_cast<double>(picks.size()));
      loss_value = loss.item();
      if (!std::isfinite(loss_value)) {
        throw TrainingError("pretrain_teacher: non-finite loss at step " + std::to_string(step));
      }
      graph.backward(loss);
    }
    clip_grad_norm(params, pretrain.grad_clip);
    adamw_step(params, opt, lr_schedule(step, pretrain.peak_lr, warmup, total));
    smoothed = step == 0 ? loss_value : 0.95 * smoothed + 0.05 * loss_value;
    if ((step + 1) % steps_per_epoch == 0) {
      spdlog::debug("teacher epoch {} loss {:.4f}", (step + 1) / steps_per_epoch, smoothed);
    }
  }
  zero_grads(params);
  r.steps = total;
  r.final_loss = smoothed;
  r.teacher.freeze();
  for (Tensor t : {r.classifier.weight, r.classifier.bias}) t.set_requires_grad(false);
  r.train_accuracy = frame_accuracy(r.teacher, r.classifier, data);
  spdlog::info("teacher pretrained: {} steps, loss {:.4f}, frame accuracy {:.4f}", total,
               smoothed, r.train_accuracy);
  return r;
}

double frame_accuracy(const Teacher& teacher, const nn::Linear& classifier, const Corpus& data) {
  NoGradGuard no_grad;
  std::size_t correct = 0, frames = 0;
  for (const auto& u : data) {
    const Tensor logits = classifier.forward(teacher.features(u.clip.samples()).back());
    const std::size_t t_count = logits.dim(0), c = logits.dim(1);
    const auto v = logits.values();
    for (std::size_t t = 0; t < t_count && t < u.frame_labels.size(); ++t) {
      const auto row = v.subspan(t * c, c);
      const auto best = std::max_element(row.begin(), row.end()) - row.begin();
      correct += best == u.frame_labels[t];
      ++frames;
    }
  }
  if (frames == 0) throw DataError("frame_accuracy: no labelled frames");
  return static_cast<double>(correct) / static_cast<double>(frames);
}

void save_teacher(const std::filesystem::path& path, const Teacher& teacher) {
  write_checkpoint(path, to_records(teacher.params(), DType::kF64));
}

Teacher load_teacher(const std::filesystem::path& path, const EncoderConfig& config) {
  Teacher t(config, 0);
  load_params(t.params(), read_checkpoint(path));
  t.freeze();
  return t;
}

}  // namespace qkd
