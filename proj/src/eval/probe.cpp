#include "qkd/eval/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "qkd/distill/trainer.hpp"
#include "qkd/errors.hpp"
#include "qkd/rng.hpp"
#include "qkd/signal/audio.hpp"
#include "qkd/tensor/nn.hpp"
#include "qkd/tensor/ops.hpp"
#include "qkd/tensor/optim.hpp"

namespace qkd {

std::string_view probe_task_name(ProbeTask task) {
  switch (task) {
    case ProbeTask::kKws: return "kws";
    case ProbeTask::kSid: return "sid";
    case ProbeTask::kAsv: return "asv";
    case ProbeTask::kSe: return "se";
  }
  return "unknown";
}

ProbeTask parse_probe_task(std::string_view name) {
  for (auto t : {ProbeTask::kKws, ProbeTask::kSid, ProbeTask::kAsv, ProbeTask::kSe}) {
    if (probe_task_name(t) == name) return t;
  }
  throw ConfigError("unknown probe task '" + std::string(name) + "' (expected kws, sid, asv or se)");
}

int task_label(const Utterance& u, ProbeTask task) {
  switch (task) {
    case ProbeTask::kKws: return u.keyword;
    case ProbeTask::kSid: return u.speaker;
    default: break;
  }
  throw ConfigError("task '" + std::string(probe_task_name(task)) + "' has no class labels");
}

std::vector<double> pooled_embedding(const Student& student, std::span<const double> samples) {
  NoGradGuard no_grad;
  const Tensor h = student.represent(samples);
  const std::size_t t = h.dim(0), d = h.dim(1);
  std::vector<double> out(d, 0.0);
  const auto v = h.values();
  for (std::size_t i = 0; i < t; ++i) {
    for (std::size_t j = 0; j < d; ++j) out[j] += v[i * d + j];
  }
  for (auto& x : out) x /= static_cast<double>(t);
  return out;
}

PointSet pooled_embeddings(const Student& student, const Corpus& corpus) {
  PointSet p;
  p.count = corpus.size();
  p.dim = student.config().encoder.hidden_dim;
  p.values.reserve(p.count * p.dim);
  for (const auto& u : corpus) {
    const auto e = pooled_embedding(student, u.clip.samples());
    p.values.insert(p.values.end(), e.begin(), e.end());
  }
  return p;
}

void ProbeSpec::validate() const {
  if (task == ProbeTask::kAsv || task == ProbeTask::kSe) {
    throw ConfigError("probe training applies to kws and sid only");
  }
  if (epochs == 0) throw ConfigError("probe.epochs must be >= 1");
  if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("probe.lr must be > 0");
  if (!(weight_decay >= 0.0)) throw ConfigError("probe.weight_decay must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("probe.validation_fraction must be in [0, 1)");
  }
}

int LinearProbe::predict(std::span<const double> embedding) const {
  if (embedding.size() != dim()) {
    throw ShapeError("probe expects " + std::to_string(dim()) + " features, got " +
                     std::to_string(embedding.size()));
  }
  const std::size_t c = classes.size();
  std::vector<double> logits(bias);
  for (std::size_t j = 0; j < dim(); ++j) {
    const double x = (embedding[j] - mean[j]) * scale[j];
    for (std::size_t k = 0; k < c; ++k) logits[k] += x * weight[j * c + k];
  }
  const auto best = std::max_element(logits.begin(), logits.end()) - logits.begin();
  return classes[static_cast<std::size_t>(best)];
}

std::vector<int> LinearProbe::predict(const PointSet& points) const {
  std::vector<int> out(points.count);
  for (std::size_t i = 0; i < points.count; ++i) out[i] = predict(points.row(i));
  return out;
}

bool LinearProbe::knows(int label) const {
  return std::find(classes.begin(), classes.end(), label) != classes.end();
}

std::string LinearProbe::to_json() const {
  nlohmann::ordered_json j;
  j["task"] = probe_task_name(task);
  j["classes"] = classes;
  j["mean"] = mean;
  j["scale"] = scale;
  j["weight"] = weight;
  j["bias"] = bias;
  return j.dump(1);
}

LinearProbe LinearProbe::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    LinearProbe p;
    p.task = parse_probe_task(j.at("task").get<std::string>());
    p.classes = j.at("classes").get<std::vector<int>>();
    p.mean = j.at("mean").get<std::vector<double>>();
    p.scale = j.at("scale").get<std::vector<double>>();
    p.weight = j.at("weight").get<std::vector<double>>();
    p.bias = j.at("bias").get<std::vector<double>>();
    if (p.scale.size() != p.mean.size() || p.bias.size() != p.classes.size() ||
        p.weight.size() != p.mean.size() * p.classes.size()) {
      throw FormatError("probe: inconsistent array sizes");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("probe: ") + e.what());
  }
}

void LinearProbe::save(const std::filesystem::path& path) const { write_text_atomic(path, to_json()); }

LinearProbe LinearProbe::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open probe " + path.string());
  return from_json({std::istreambuf_iterator<char>(in), {}});
}

ProbeResult probe_train(const PointSet& points, std::span<const int> labels, const ProbeSpec& spec) {
  spec.validate();
  if (labels.size() != points.count || points.count == 0) {
    throw MetricError("probe_train: " + std::to_string(labels.size()) + " labels for " +
                      std::to_string(points.count) + " points");
  }
  const std::size_t n = points.count, d = points.dim;

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(spec.seed, "probe-split");
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  const auto n_val = static_cast<std::size_t>(std::floor(spec.validation_fraction * static_cast<double>(n)));
  const std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(train.begin(), train.end());

  ProbeResult r;
  LinearProbe& p = r.probe;
  p.task = spec.task;
  const std::set<int> distinct = [&] {
    std::set<int> s;
    for (std::size_t i : train) s.insert(labels[i]);
    return s;
  }();
  p.classes.assign(distinct.begin(), distinct.end());
  const std::size_t c = p.classes.size();

  p.mean.assign(d, 0.0);
  p.scale.assign(d, 1.0);
  for (std::size_t i : train) {
    for (std::size_t j = 0; j < d; ++j) p.mean[j] += points.row(i)[j];
  }
  for (auto& m : p.mean) m /= static_cast<double>(train.size());
  for (std::size_t j = 0; j < d; ++j) {
    double var = 0.0;
    for (std::size_t i : train) var += std::pow(points.row(i)[j] - p.mean[j], 2);
    const double sd = std::sqrt(var / static_cast<double>(train.size()));
    if (sd > 1e-12) p.scale[j] = 1.0 / sd;
  }

  std::vector<double> x(train.size() * d);
  std::vector<int> y(train.size());
  for (std::size_t r_i = 0; r_i < train.size(); ++r_i) {
    const auto row = points.row(train[r_i]);
    for (std::size_t j = 0; j < d; ++j) x[r_i * d + j] = (row[j] - p.mean[j]) * p.scale[j];
    y[r_i] = static_cast<int>(std::find(p.classes.begin(), p.classes.end(), labels[train[r_i]]) -
                              p.classes.begin());
  }
  const Tensor features({train.size(), d}, x);
  nn::Linear layer(d, c, derive_seed(spec.seed, fnv1a("probe")), "probe");
  nn::ParamList params;
  layer.collect(params);
  AdamWState opt;
  opt.weight_decay = spec.weight_decay;
  for (std::size_t epoch = 0; epoch < spec.epochs; ++epoch) {
    zero_grads(params);
    {
      Graph graph;
      graph.backward(ops::cross_entropy(layer.forward(features), y));
    }
    adamw_step(params, opt, spec.lr);
  }
  zero_grads(params);
  p.weight.assign(layer.weight.values().begin(), layer.weight.values().end());
  p.bias.assign(layer.bias.values().begin(), layer.bias.values().end());

  const auto subset_accuracy = [&](const std::vector<std::size_t>& idx) {
    std::vector<int> pred, truth;
    for (std::size_t i : idx) {
      pred.push_back(p.predict(points.row(i)));
      truth.push_back(labels[i]);
    }
    return accuracy(pred, truth);
  };
  r.train_count = train.size();
  r.validation_count = val.size();
  r.train_accuracy = subset_accuracy(train);
  if (!val.empty()) r.validation_accuracy = subset_accuracy(val);
  return r;
}

ProbeResult probe_train(const Student& student, const ProbeSpec& spec, const Corpus& clean) {
  spec.validate();
  if (clean.empty()) throw DataError("probe_train: empty corpus");
  std::vector<int> labels;
  for (const auto& u : clean) labels.push_back(task_label(u, spec.task));
  return probe_train(pooled_embeddings(student, clean), labels, spec);
}

namespace {

double cosine(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    dot += a[j] * b[j];
    na += a[j] * a[j];
    nb += b[j] * b[j];
  }
  return dot / (std::max(std::sqrt(na), 1e-12) * std::max(std::sqrt(nb), 1e-12));
}

}  // namespace

std::vector<Trial> asv_trials(const PointSet& embeddings, std::span<const int> speakers,
                              std::uint64_t seed) {
  if (speakers.size() != embeddings.count) {
    throw MetricError("asv_trials: " + std::to_string(speakers.size()) + " labels for " +
                      std::to_string(embeddings.count) + " embeddings");
  }
  const std::size_t n = embeddings.count;
  std::vector<Trial> trials;
  std::vector<std::pair<std::size_t, std::size_t>> cross;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (speakers[i] == speakers[j]) {
        trials.push_back({cosine(embeddings.row(i), embeddings.row(j)), true});
      } else {
        cross.emplace_back(i, j);
      }
    }
  }
  const std::size_t want = std::min(trials.size(), cross.size());
  // Partial Fisher-Yates picks `want` distinct cross pairs.
  Rng rng(seed, "asv-trials");
  for (std::size_t k = 0; k < want; ++k) {
    std::swap(cross[k], cross[k + rng.below(cross.size() - k)]);
    const auto [i, j] = cross[k];
    trials.push_back({cosine(embeddings.row(i), embeddings.row(j)), false});
  }
  return trials;
}

MaskHead train_se_probe(const Student& student, const Corpus& clean,
                        const ContaminationSpec& contamination, const SeProbeSpec& spec) {
  if (clean.empty()) throw DataError("train_se_probe: empty corpus");
  if (spec.steps == 0 || spec.batch_size == 0) throw ConfigError("se probe needs steps and batch size");
  contamination.validate();
  MaskHead head(student.config().encoder.hidden_dim, MaskHeadConfig{},
                derive_seed(spec.seed, fnv1a("se-probe")));
  nn::ParamList params;
  head.collect(params);
  AdamWState opt;
  const std::uint64_t warmup = spec.steps / 10;
  for (std::uint64_t step = 0; step < spec.steps; ++step) {
    const auto picks = batch_indices(spec.seed, clean.size(), spec.batch_size, step);
    std::vector<NoisyView> views;
    std::vector<Tensor> hidden;
    for (const auto& [index, epoch] : picks) {
      views.push_back(contaminate(clean[index].clip, contamination, item_seed(spec.seed, epoch, index)));
      NoGradGuard no_grad;
      hidden.push_back(student.represent(views.back().clip.samples()).detach());
    }
    zero_grads(params);
    {
      Graph graph;
      Tensor sum;
      for (std::size_t k = 0; k < picks.size(); ++k) {
        const Tensor est = head.enhance(hidden[k], views[k].clip.samples());
        const Tensor l = enhancement_loss(est, clean[picks[k].first].clip.samples(), spec.loss);
        sum = sum.defined() ? ops::add(sum, l) : l;
      }
      graph.backward(ops::scale(sum, 1.0 / static_cast<double>(picks.size())));
    }
    clip_grad_norm(params, 5.0);
    adamw_step(params, opt, lr_schedule(step, spec.lr, warmup, spec.steps));
  }
  zero_grads(params);
  return head;
}

}  // namespace qkd
