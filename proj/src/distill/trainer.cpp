#include "qkd/distill/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <unordered_map>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "qkd/errors.hpp"
#include "qkd/rng.hpp"
#include "qkd/tensor/ops.hpp"

namespace qkd {

namespace {

bool finite_nonneg(double x) { return std::isfinite(x) && x >= 0.0; }

struct BatchForward {
  Tensor distill;
  Tensor enhancement;
};

BatchForward forward_batch(std::span<const DistillItem> batch, const Student& student,
                           const DistillModels* heads, const DistillConfig& config) {
  if (batch.empty()) throw ConfigError("distillation batch is empty");
  const double inv_m = 1.0 / static_cast<double>(batch.size());
  const EnhancementKind kind = heads ? config.enhancement : EnhancementKind::kNone;
  Tensor distill_sum, enh_sum;
  for (const auto& item : batch) {
    if (!item.targets) throw StateError("distillation item has no teacher targets");
    const auto out = student.forward(item.student_input);
    if (item.targets->size() != out.predictions.size()) {
      throw ShapeError("teacher targets for " + std::to_string(item.targets->size()) +
                       " layers, student predicts " + std::to_string(out.predictions.size()));
    }
    for (std::size_t k = 0; k < out.predictions.size(); ++k) {
      const Tensor l = distill_loss((*item.targets)[k], out.predictions[k], config.lambda_cos);
      distill_sum = distill_sum.defined() ? ops::add(distill_sum, l) : l;
    }
    if (kind == EnhancementKind::kNone) continue;
    Tensor estimate;
    if (kind == EnhancementKind::kMask) {
      estimate = heads->mask_head->enhance(out.final_hidden, item.student_input);
    } else {
      estimate = heads->waveform_head->reconstruct(out.final_hidden, item.student_input.size());
    }
    const Tensor e = enhancement_loss(estimate, item.clean, config.enh_loss);
    enh_sum = enh_sum.defined() ? ops::add(enh_sum, e) : e;
  }
  BatchForward f;
  f.distill = ops::scale(distill_sum, inv_m);
  if (enh_sum.defined()) f.enhancement = ops::scale(enh_sum, inv_m);
  return f;
}

std::vector<std::size_t> epoch_permutation(std::uint64_t seed, std::uint64_t epoch,
                                           std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, epoch), "epoch-order");
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.below(i)]);
  }
  return perm;
}

const std::string kStepRecord = "state.step";
const std::string kAdamStepRecord = "adam.step";

std::filesystem::path step_checkpoint_path(const std::filesystem::path& dir, std::uint64_t step) {
  char name[40];
  std::snprintf(name, sizeof(name), "step_%06llu.rdkd", static_cast<unsigned long long>(step));
  return dir / "checkpoints" / name;
}

std::string log_line(const LossRecord& r) {
  nlohmann::ordered_json j;
  j["step"] = r.step;
  j["lr"] = r.lr;
  j["distill"] = r.distill;
  j["enh"] = r.enh;
  j["total"] = r.total;
  j["wall_ms"] = r.wall_ms;
  return j.dump();
}

// Keeps the log lines of steps up to `step` so a resumed run extends them.
std::string log_prefix(const std::filesystem::path& path, std::uint64_t step) {
  std::ifstream in(path);
  std::string kept, line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.contains("step")) continue;
    if (j["step"].get<std::uint64_t>() <= step) kept += line + "\n";
  }
  return kept;
}

}  // namespace

void DistillConfig::validate() const {
  if (layers.empty()) throw ConfigError("distill.layers must not be empty");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i] == 0) throw ConfigError("distill.layers are 1-based; got 0");
    if (i > 0 && layers[i] <= layers[i - 1]) {
      throw ConfigError("distill.layers must be strictly increasing");
    }
  }
  if (!finite_nonneg(lambda_cos)) throw ConfigError("distill.lambda_cos must be finite and >= 0");
  if (!finite_nonneg(beta)) throw ConfigError("distill.beta must be finite and >= 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (total_steps == 0) throw ConfigError("train.total_steps must be >= 1");
  if (warmup_steps >= total_steps) throw ConfigError("train.warmup_steps must be < total_steps");
  if (!finite_nonneg(peak_lr)) throw ConfigError("train.peak_lr must be finite and >= 0");
  if (!finite_nonneg(weight_decay)) throw ConfigError("train.weight_decay must be finite and >= 0");
  if (!(grad_clip > 0.0) || !std::isfinite(grad_clip)) {
    throw ConfigError("train.grad_clip must be finite and > 0");
  }
}

nn::ParamList DistillModels::trainable() const {
  nn::ParamList p = student.params();
  if (mask_head) mask_head->collect(p);
  if (waveform_head) waveform_head->collect(p);
  return p;
}

std::size_t init_student_from_teacher(Student& student, const Teacher& teacher) {
  std::unordered_map<std::string, Tensor> source;
  for (const auto& p : teacher.params()) source.emplace(p.name, p.tensor);
  const std::string& prefix = student.encoder().name();
  std::size_t copied = 0;
  for (auto& p : student.encoder_params()) {
    if (p.name.rfind(prefix + ".", 0) != 0) continue;
    const auto it = source.find(teacher.encoder().name() + p.name.substr(prefix.size()));
    if (it == source.end() || it->second.shape() != p.tensor.shape()) continue;
    Tensor dst = p.tensor;
    const auto src = it->second.values();
    std::copy(src.begin(), src.end(), dst.mutable_values().begin());
    ++copied;
  }
  return copied;
}

DistillModels make_distill_models(const DistillConfig& config, const StudentConfig& student,
                                  const Teacher& teacher) {
  config.validate();
  if (config.layers.back() > teacher.num_layers()) {
    throw ConfigError("distill.layers reaches layer " + std::to_string(config.layers.back()) +
                      " but the teacher has " + std::to_string(teacher.num_layers()));
  }
  StudentConfig sc = student;
  sc.target_layers = config.layers;
  sc.mode = config.mode;
  sc.teacher_dim = teacher.hidden_dim();
  DistillModels m;
  m.student = Student(sc, derive_seed(config.seed, fnv1a("student")));
  if (config.init_from_teacher) init_student_from_teacher(m.student, teacher);
  const std::size_t d = sc.encoder.hidden_dim;
  if (config.enhancement == EnhancementKind::kMask) {
    m.mask_head.emplace(d, MaskHeadConfig{}, derive_seed(config.seed, fnv1a("mask-head")));
  } else if (config.enhancement == EnhancementKind::kWaveform) {
    m.waveform_head.emplace(d, WaveformHeadConfig{},
                            derive_seed(config.seed, fnv1a("waveform-head")));
  }
  return m;
}

std::vector<Tensor> teacher_targets(const Teacher& teacher, std::span<const double> clean,
                                    std::span<const std::size_t> layers) {
  const auto all = teacher.features(clean);
  std::vector<Tensor> out;
  out.reserve(layers.size());
  for (std::size_t l : layers) {
    if (l == 0 || l > all.size()) {
      throw ConfigError("teacher layer " + std::to_string(l) + " out of range 1.." +
                        std::to_string(all.size()));
    }
    out.push_back(all[l - 1]);
  }
  return out;
}

Tensor feature_denoising_objective(std::span<const DistillItem> batch, const Student& student,
                                   const DistillConfig& config) {
  return forward_batch(batch, student, nullptr, config).distill;
}

ObjectiveParts distill_objective(std::span<const DistillItem> batch, const DistillModels& models,
                                 const DistillConfig& config) {
  if (config.enhancement != EnhancementKind::kNone && !models.has_enhancement()) {
    throw StateError("enhancement '" + std::string(enhancement_kind_name(config.enhancement)) +
                     "' configured but no head allocated");
  }
  auto f = forward_batch(batch, models.student, &models, config);
  ObjectiveParts parts;
  parts.distill = f.distill;
  parts.enhancement = f.enhancement;
  parts.total = f.enhancement.defined() ? ops::add(f.distill, ops::scale(f.enhancement, config.beta))
                                        : f.distill;
  return parts;
}

LossRecord train_step(std::span<const DistillItem> batch, DistillModels& models,
                      const DistillConfig& config, TrainState& state) {
  if (state.step >= config.total_steps) {
    throw StateError("train_step: step " + std::to_string(state.step) + " reached total_steps");
  }
  const auto start = std::chrono::steady_clock::now();
  nn::ParamList params = models.trainable();
  zero_grads(params);
  LossRecord rec;
  {
    Graph graph;
    ObjectiveParts parts;
    try {
      parts = distill_objective(batch, models, config);
    } catch (const DomainError& e) {
      throw TrainingError("non-finite forward pass at step " + std::to_string(state.step) + ": " +
                          e.what());
    }
    rec.distill = parts.distill.item();
    rec.enh = parts.enhancement.defined() ? parts.enhancement.item() : 0.0;
    rec.total = parts.total.item();
    if (!std::isfinite(rec.total)) {
      throw TrainingError("non-finite loss at step " + std::to_string(state.step));
    }
    graph.backward(parts.total);
  }
  rec.grad_norm = clip_grad_norm(params, config.grad_clip);
  rec.lr = lr_schedule(state.step, config.peak_lr, config.warmup_steps, config.total_steps,
                       config.schedule);
  state.optimizer.weight_decay = config.weight_decay;
  adamw_step(params, state.optimizer, rec.lr);
  zero_grads(params);
  state.step += 1;
  rec.step = state.step;
  rec.wall_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  state.last = rec;
  return rec;
}

std::vector<std::pair<std::size_t, std::uint64_t>> batch_indices(std::uint64_t seed,
                                                                 std::size_t corpus_size,
                                                                 std::size_t batch_size,
                                                                 std::uint64_t step) {
  if (corpus_size == 0) throw DataError("training corpus is empty");
  std::vector<std::pair<std::size_t, std::uint64_t>> out;
  out.reserve(batch_size);
  std::uint64_t cached_epoch = ~std::uint64_t{0};
  std::vector<std::size_t> perm;
  for (std::size_t j = 0; j < batch_size; ++j) {
    const std::uint64_t pos = step * batch_size + j;
    const std::uint64_t epoch = pos / corpus_size;
    if (epoch != cached_epoch) {
      perm = epoch_permutation(seed, epoch, corpus_size);
      cached_epoch = epoch;
    }
    out.emplace_back(perm[pos % corpus_size], epoch);
  }
  return out;
}

std::vector<CheckpointRecord> state_records(const DistillModels& models, const TrainState& state) {
  const nn::ParamList params = models.trainable();
  auto records = to_records(params, DType::kF64);
  for (const auto& p : params) {
    for (const auto* which : {&state.optimizer.first_moment, &state.optimizer.second_moment}) {
      const auto it = which->find(p.name);
      CheckpointRecord r;
      r.name = std::string(which == &state.optimizer.first_moment ? "adam.m." : "adam.v.") + p.name;
      r.dtype = DType::kF64;
      r.shape = p.tensor.shape();
      r.values = it != which->end() ? it->second : std::vector<double>(p.tensor.numel(), 0.0);
      records.push_back(std::move(r));
    }
  }
  records.push_back({kStepRecord, DType::kF64, {1}, {static_cast<double>(state.step)}});
  records.push_back(
      {kAdamStepRecord, DType::kF64, {1}, {static_cast<double>(state.optimizer.step)}});
  return records;
}

void restore_state(const std::vector<CheckpointRecord>& records, DistillModels& models,
                   TrainState& state) {
  const nn::ParamList params = models.trainable();
  load_params(params, records);
  std::unordered_map<std::string, const CheckpointRecord*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  const auto scalar = [&](const std::string& name) {
    const auto it = by_name.find(name);
    if (it == by_name.end() || it->second->values.size() != 1) {
      throw FormatError("resume checkpoint lacks '" + name + "'");
    }
    return static_cast<std::uint64_t>(it->second->values[0]);
  };
  state.step = scalar(kStepRecord);
  state.optimizer.step = scalar(kAdamStepRecord);
  state.optimizer.first_moment.clear();
  state.optimizer.second_moment.clear();
  for (const auto& p : params) {
    for (const char* prefix : {"adam.m.", "adam.v."}) {
      const auto it = by_name.find(prefix + p.name);
      if (it == by_name.end() || it->second->values.size() != p.tensor.numel()) {
        throw FormatError("resume checkpoint lacks optimizer moment '" + std::string(prefix) +
                          p.name + "'");
      }
      auto& dst = prefix[5] == 'm' ? state.optimizer.first_moment : state.optimizer.second_moment;
      dst[p.name] = it->second->values;
    }
  }
}

namespace {

bool has_all(const nn::ParamList& params, const std::vector<CheckpointRecord>& records) {
  return std::all_of(params.begin(), params.end(), [&](const auto& p) {
    return std::any_of(records.begin(), records.end(),
                       [&](const CheckpointRecord& r) { return r.name == p.name; });
  });
}

}  // namespace

Student load_student(const std::filesystem::path& path, const StudentConfig& config) {
  const auto records = read_checkpoint(path);
  Student s(config, 0);
  load_params(s.encoder_params(), records);
  if (has_all(s.head_params(), records)) load_params(s.head_params(), records);
  return s;
}

DistillModels load_distill_models(const std::filesystem::path& path, const DistillConfig& config,
                                  const StudentConfig& student, std::size_t teacher_dim) {
  config.validate();
  const auto records = read_checkpoint(path);
  StudentConfig sc = student;
  sc.target_layers = config.layers;
  sc.mode = config.mode;
  sc.teacher_dim = teacher_dim;
  DistillModels m;
  m.student = Student(sc, 0);
  load_params(m.student.encoder_params(), records);
  if (has_all(m.student.head_params(), records)) load_params(m.student.head_params(), records);
  const std::size_t d = sc.encoder.hidden_dim;
  if (config.enhancement == EnhancementKind::kMask) {
    MaskHead head(d, MaskHeadConfig{}, 0);
    nn::ParamList p;
    head.collect(p);
    if (has_all(p, records)) {
      load_params(p, records);
      m.mask_head = std::move(head);
    }
  } else if (config.enhancement == EnhancementKind::kWaveform) {
    WaveformHead head(d, WaveformHeadConfig{}, 0);
    nn::ParamList p;
    head.collect(p);
    if (has_all(p, records)) {
      load_params(p, records);
      m.waveform_head = std::move(head);
    }
  }
  return m;
}

RunResult train_run(const DistillConfig& config, const StudentConfig& student,
                    const DistillData& data, const Teacher& teacher, const RunOptions& options) {
  config.validate();
  if (!teacher.frozen()) throw StateError("train_run: the teacher must be frozen");
  if (!data.corpus || data.corpus->empty()) throw DataError("train_run: empty training corpus");
  const Corpus& corpus = *data.corpus;
  if (config.contaminate) data.contamination.validate();

  RunResult result;
  result.models = make_distill_models(config, student, teacher);
  TrainState& state = result.state;
  if (options.resume_from) {
    restore_state(read_checkpoint(*options.resume_from), result.models, state);
    spdlog::info("resumed from {} at step {}", options.resume_from->string(), state.step);
  }
  const std::uint64_t stop = std::min(options.stop_after.value_or(config.total_steps),
                                      config.total_steps);

  std::filesystem::create_directories(options.out_dir / "checkpoints");
  result.log_path = options.out_dir / "train_log.jsonl";
  const std::string kept = state.step > 0 ? log_prefix(result.log_path, state.step) : "";
  std::ofstream log(result.log_path, std::ios::trunc);
  log << kept;

  std::vector<std::optional<std::vector<Tensor>>> targets(corpus.size());
  std::string last_good = options.resume_from ? options.resume_from->string() : "none";
  std::vector<NoisyView> views;
  std::vector<DistillItem> items;
  try {
    while (state.step < stop) {
      const auto picks = batch_indices(config.seed, corpus.size(), config.batch_size, state.step);
      views.clear();
      views.reserve(picks.size());
      items.clear();
      for (const auto& [index, epoch] : picks) {
        const AudioClip& clip = corpus[index].clip;
        if (!targets[index]) targets[index] = teacher_targets(teacher, clip.samples(), config.layers);
        if (config.contaminate) {
          views.push_back(contaminate(clip, data.contamination,
                                      item_seed(config.seed, epoch, index)));
        }
      }
      for (std::size_t j = 0; j < picks.size(); ++j) {
        const auto& clip = corpus[picks[j].first].clip;
        items.push_back({clip.samples(),
                         config.contaminate ? views[j].clip.samples() : clip.samples(),
                         &*targets[picks[j].first]});
      }
      const LossRecord rec = train_step(items, result.models, config, state);
      log << log_line(rec) << '\n' << std::flush;
      if (options.on_step) options.on_step(rec);
      if (options.checkpoint_every > 0 && state.step % options.checkpoint_every == 0) {
        const auto path = step_checkpoint_path(options.out_dir, state.step);
        write_checkpoint(path, state_records(result.models, state));
        result.checkpoints.push_back(path);
        last_good = path.string();
      }
    }
  } catch (const TrainingError& e) {
    throw TrainingError(std::string(e.what()) + "; last good checkpoint: " + last_good);
  }

  if (state.step == config.total_steps) {
    nn::ParamList exported = result.models.student.encoder_params();
    if (options.export_heads) {
      const auto heads = result.models.trainable();
      const std::size_t n = exported.size();
      exported.insert(exported.end(), heads.begin() + static_cast<std::ptrdiff_t>(n), heads.end());
    }
    result.student_checkpoint = options.out_dir / "student.rdkd";
    write_checkpoint(result.student_checkpoint, to_records(exported, DType::kF32));
  }
  return result;
}

}  // namespace qkd
