#include "qkd/cli/config.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>

#include "qkd/errors.hpp"

namespace qkd {
namespace {

using nlohmann::json;

std::string_view schedule_name(ScheduleKind kind) {
  return kind == ScheduleKind::kWarmupDecay ? "warmup_decay" : "hold_decay";
}

ScheduleKind parse_schedule(std::string_view name) {
  if (name == "warmup_decay") return ScheduleKind::kWarmupDecay;
  if (name == "hold_decay") return ScheduleKind::kHoldDecay;
  throw ConfigError("unknown schedule '" + std::string(name) + "'");
}

/// One JSON object under a dotted path; remembers which keys were read.
class Section {
 public:
  Section(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  std::string key_path(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

  const json* find(const std::string& key) {
    const auto it = node_.find(key);
    if (it == node_.end()) return nullptr;
    seen_.insert(key);
    return &*it;
  }

  Section child(const std::string& key) {
    const json* v = find(key);
    static const json empty = json::object();
    return Section(v ? *v : empty, key_path(key));
  }

  template <class T>
  void read(const std::string& key, T& out) {
    const json* v = find(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) throw ConfigError("expected a boolean");
        out = v->get<bool>();
      } else if constexpr (std::is_integral_v<T>) {
        if (!v->is_number_integer()) throw ConfigError("expected an integer");
        if constexpr (std::is_unsigned_v<T>) {
          if (v->is_number_unsigned() == false && v->get<std::int64_t>() < 0) {
            throw ConfigError("expected a non-negative integer");
          }
        }
        out = v->get<T>();
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v->is_number()) throw ConfigError("expected a number");
        out = v->get<T>();
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v->is_string()) throw ConfigError("expected a string");
        out = v->get<std::string>();
      } else {
        static_assert(sizeof(T) == 0, "unsupported config type");
      }
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + key_path(key) + "': " + e.what());
    }
  }

  void read_path(const std::string& key, std::optional<std::filesystem::path>& out) {
    const json* v = find(key);
    if (!v || v->is_null()) return;
    if (!v->is_string()) throw ConfigError("config key '" + key_path(key) + "': expected a string");
    out = v->get<std::string>();
  }

  template <class Parse>
  void read_enum(const std::string& key, Parse parse) {
    std::string name;
    const json* v = node_.contains(key) ? &node_.at(key) : nullptr;
    if (!v) return;
    read(key, name);
    try {
      parse(name);
    } catch (const ConfigError& e) {
      throw ConfigError("config key '" + key_path(key) + "': " + e.what());
    }
  }

  /// Rejects keys nobody asked for.
  void finish() const {
    for (const auto& [key, value] : node_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + key_path(key) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "config key '" + path_ + "'"; }

  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_corpus(Section s, CorpusSpec& c) {
  s.read("speakers", c.speakers);
  s.read("repeats", c.repeats);
  s.read("duration_s", c.duration_s);
  s.read("seed", c.seed);
  s.read("voice_seed", c.voice_seed);
  s.read("first_speaker", c.first_speaker);
  s.finish();
}

json corpus_json(const CorpusSpec& c) {
  return {{"speakers", c.speakers}, {"repeats", c.repeats},         {"duration_s", c.duration_s},
          {"seed", c.seed},         {"voice_seed", c.voice_seed}, {"first_speaker", c.first_speaker}};
}

void read_pools(Section s, PoolSpec& p) {
  s.read("noise_per_family", p.noise_per_family);
  s.read("noise_length_s", p.noise_length_s);
  s.read("rir_count", p.rir_count);
  s.read("rt60_low", p.rt60_low);
  s.read("rt60_high", p.rt60_high);
  s.read("noise_seed", p.noise_seed);
  s.read("rir_seed", p.rir_seed);
  s.finish();
}

json pools_json(const PoolSpec& p) {
  return {{"noise_per_family", p.noise_per_family},
          {"noise_length_s", p.noise_length_s},
          {"rir_count", p.rir_count},
          {"rt60_low", p.rt60_low},
          {"rt60_high", p.rt60_high},
          {"noise_seed", p.noise_seed},
          {"rir_seed", p.rir_seed}};
}

void read_snr(Section s, SnrRange& r) {
  s.read("low_db", r.low_db);
  s.read("high_db", r.high_db);
  s.finish();
}

json snr_json(const SnrRange& r) { return {{"low_db", r.low_db}, {"high_db", r.high_db}}; }

void read_encoder(Section s, EncoderConfig& e) {
  std::size_t channels = e.conv_stack.front().channels;
  s.read("conv_channels", channels);
  e.conv_stack = default_conv_stack(channels);
  s.read("hidden_dim", e.hidden_dim);
  s.read("num_layers", e.num_layers);
  s.read("num_heads", e.num_heads);
  s.read("ffn_dim", e.ffn_dim);
  s.read("max_frames", e.max_frames);
  s.finish();
}

json encoder_json(const EncoderConfig& e) {
  return {{"conv_channels", e.conv_stack.front().channels},
          {"hidden_dim", e.hidden_dim},
          {"num_layers", e.num_layers},
          {"num_heads", e.num_heads},
          {"ffn_dim", e.ffn_dim},
          {"max_frames", e.max_frames}};
}

json path_json(const std::optional<std::filesystem::path>& p) {
  return p ? json(p->string()) : json(nullptr);
}

void check(bool ok, const std::string& key, const std::string& message) {
  if (!ok) throw ConfigError("config key '" + key + "': " + message);
}

void check_corpus(const CorpusSpec& c, const std::string& key) {
  check(c.speakers >= 1, key + ".speakers", "must be at least 1");
  check(c.repeats >= 1, key + ".repeats", "must be at least 1");
  check(std::isfinite(c.duration_s) && c.duration_s * kDefaultSampleRate >= kMinClipSamples,
        key + ".duration_s", "clips must hold at least 400 samples");
}

void check_pools(const PoolSpec& p, const std::string& key) {
  check(p.noise_per_family >= 1, key + ".noise_per_family", "must be at least 1");
  check(p.noise_length_s > 0.0, key + ".noise_length_s", "must be positive");
  check(p.rir_count >= 1, key + ".rir_count", "must be at least 1");
  check(p.rt60_low > 0.0 && p.rt60_low <= p.rt60_high, key + ".rt60_low",
        "needs 0 < rt60_low <= rt60_high");
}

Corpus corpus_from(const std::optional<std::filesystem::path>& manifest, const CorpusSpec& spec) {
  return manifest ? load_corpus(*manifest) : synth_corpus(spec);
}

}  // namespace

void RunConfig::validate() const {
  check_corpus(data.train, "data.train");
  check_corpus(data.probe, "data.probe");
  check_corpus(data.test, "data.test");
  check_pools(data.train_pools, "data.train_pools");
  check_pools(data.eval_pools, "data.eval_pools");
  check(data.train_snr.low_db <= data.train_snr.high_db, "data.train_snr", "low_db exceeds high_db");
  check(eval.snr.low_db <= eval.snr.high_db, "eval.snr", "low_db exceeds high_db");
  check(!eval.tasks.empty(), "eval.tasks", "must not be empty");
  const auto rethrow = [](const std::string& key, auto&& fn) {
    try {
      fn();
    } catch (const ConfigError& e) {
      throw ConfigError("config section '" + key + "': " + e.what());
    }
  };
  rethrow("teacher.encoder", [&] { teacher.encoder.validate(); });
  rethrow("teacher.pretrain", [&] { teacher.pretrain.validate(); });
  rethrow("student", [&] { student.validate(); });
  rethrow("student", [&] { student_config(*this).validate(); });
  rethrow("distill", [&] { distill_config(*this).validate(); });
  check(distill.layers.back() <= teacher.encoder.num_layers, "distill.layers",
        "exceeds the teacher depth " + std::to_string(teacher.encoder.num_layers));
  rethrow("eval", [&] { probe_spec(*this, ProbeTask::kKws).validate(); });
}

RunConfig parse_run_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig c;
  Section root(doc, "");
  root.read("seed", c.seed);
  {
    Section d = root.child("data");
    d.read_path("train_manifest", c.data.train_manifest);
    d.read_path("probe_manifest", c.data.probe_manifest);
    d.read_path("test_manifest", c.data.test_manifest);
    read_corpus(d.child("train"), c.data.train);
    read_corpus(d.child("probe"), c.data.probe);
    read_corpus(d.child("test"), c.data.test);
    read_pools(d.child("train_pools"), c.data.train_pools);
    read_pools(d.child("eval_pools"), c.data.eval_pools);
    read_snr(d.child("train_snr"), c.data.train_snr);
    d.finish();
  }
  {
    Section t = root.child("teacher");
    read_encoder(t.child("encoder"), c.teacher.encoder);
    t.read_path("checkpoint", c.teacher.checkpoint);
    Section p = t.child("pretrain");
    p.read("epochs", c.teacher.pretrain.epochs);
    p.read("batch_size", c.teacher.pretrain.batch_size);
    p.read("peak_lr", c.teacher.pretrain.peak_lr);
    p.read("warmup_fraction", c.teacher.pretrain.warmup_fraction);
    p.read("weight_decay", c.teacher.pretrain.weight_decay);
    p.read("grad_clip", c.teacher.pretrain.grad_clip);
    p.finish();
    t.finish();
  }
  {
    Section s = root.child("student");
    read_encoder(s.child("encoder"), c.student);
    s.finish();
  }
  {
    Section d = root.child("distill");
    if (const json* layers = d.find("layers")) {
      if (!layers->is_array()) throw ConfigError("config key 'distill.layers': expected an array");
      c.distill.layers.clear();
      for (const auto& l : *layers) {
        if (!l.is_number_unsigned()) {
          throw ConfigError("config key 'distill.layers': expected non-negative integers");
        }
        c.distill.layers.push_back(l.get<std::size_t>());
      }
    }
    d.read("lambda_cos", c.distill.lambda_cos);
    d.read_enum("mode", [&](const std::string& n) { c.distill.mode = parse_distill_mode(n); });
    d.read("contaminate", c.distill.contaminate);
    d.read("init_from_teacher", c.distill.init_from_teacher);
    d.finish();
  }
  {
    Section e = root.child("enhancement");
    e.read_enum("kind", [&](const std::string& n) { c.enhancement.kind = parse_enhancement_kind(n); });
    e.read_enum("loss", [&](const std::string& n) { c.enhancement.loss = parse_enhancement_loss(n); });
    e.read("beta", c.enhancement.beta);
    e.finish();
  }
  {
    Section t = root.child("train");
    t.read("batch_size", c.train.batch_size);
    t.read("total_steps", c.train.total_steps);
    t.read("warmup_steps", c.train.warmup_steps);
    t.read("peak_lr", c.train.peak_lr);
    t.read_enum("schedule", [&](const std::string& n) { c.train.schedule = parse_schedule(n); });
    t.read("weight_decay", c.train.weight_decay);
    t.read("grad_clip", c.train.grad_clip);
    t.read("checkpoint_every", c.train.checkpoint_every);
    t.read("export_heads", c.train.export_heads);
    t.finish();
  }
  {
    Section e = root.child("eval");
    e.read("seed", c.eval.seed);
    read_snr(e.child("snr"), c.eval.snr);
    if (const json* tasks = e.find("tasks")) {
      if (!tasks->is_array()) throw ConfigError("config key 'eval.tasks': expected an array");
      c.eval.tasks.clear();
      for (const auto& t : *tasks) {
        if (!t.is_string()) throw ConfigError("config key 'eval.tasks': expected task names");
        try {
          c.eval.tasks.push_back(parse_probe_task(t.get<std::string>()));
        } catch (const ConfigError& err) {
          throw ConfigError(std::string("config key 'eval.tasks': ") + err.what());
        }
      }
    }
    e.read("probe_epochs", c.eval.probe_epochs);
    e.read("probe_lr", c.eval.probe_lr);
    e.read("probe_weight_decay", c.eval.probe_weight_decay);
    e.read("probe_validation_fraction", c.eval.probe_validation_fraction);
    e.read("se_probe_steps", c.eval.se_probe_steps);
    e.finish();
  }
  root.finish();
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_run_config(ss.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

std::string resolved_config_json(const RunConfig& c) {
  json tasks = json::array();
  for (auto t : c.eval.tasks) tasks.push_back(probe_task_name(t));
  const json doc = {
      {"seed", c.seed},
      {"data",
       {{"train_manifest", path_json(c.data.train_manifest)},
        {"probe_manifest", path_json(c.data.probe_manifest)},
        {"test_manifest", path_json(c.data.test_manifest)},
        {"train", corpus_json(c.data.train)},
        {"probe", corpus_json(c.data.probe)},
        {"test", corpus_json(c.data.test)},
        {"train_pools", pools_json(c.data.train_pools)},
        {"eval_pools", pools_json(c.data.eval_pools)},
        {"train_snr", snr_json(c.data.train_snr)}}},
      {"teacher",
       {{"encoder", encoder_json(c.teacher.encoder)},
        {"checkpoint", path_json(c.teacher.checkpoint)},
        {"pretrain",
         {{"epochs", c.teacher.pretrain.epochs},
          {"batch_size", c.teacher.pretrain.batch_size},
          {"peak_lr", c.teacher.pretrain.peak_lr},
          {"warmup_fraction", c.teacher.pretrain.warmup_fraction},
          {"weight_decay", c.teacher.pretrain.weight_decay},
          {"grad_clip", c.teacher.pretrain.grad_clip}}}}},
      {"student", {{"encoder", encoder_json(c.student)}}},
      {"distill",
       {{"layers", c.distill.layers},
        {"lambda_cos", c.distill.lambda_cos},
        {"mode", distill_mode_name(c.distill.mode)},
        {"contaminate", c.distill.contaminate},
        {"init_from_teacher", c.distill.init_from_teacher}}},
      {"enhancement",
       {{"kind", enhancement_kind_name(c.enhancement.kind)},
        {"loss", enhancement_loss_name(c.enhancement.loss)},
        {"beta", c.enhancement.beta}}},
      {"train",
       {{"batch_size", c.train.batch_size},
        {"total_steps", c.train.total_steps},
        {"warmup_steps", c.train.warmup_steps},
        {"peak_lr", c.train.peak_lr},
        {"schedule", schedule_name(c.train.schedule)},
        {"weight_decay", c.train.weight_decay},
        {"grad_clip", c.train.grad_clip},
        {"checkpoint_every", c.train.checkpoint_every},
        {"export_heads", c.train.export_heads}}},
      {"eval",
       {{"seed", c.eval.seed},
        {"snr", snr_json(c.eval.snr)},
        {"tasks", tasks},
        {"probe_epochs", c.eval.probe_epochs},
        {"probe_lr", c.eval.probe_lr},
        {"probe_weight_decay", c.eval.probe_weight_decay},
        {"probe_validation_fraction", c.eval.probe_validation_fraction},
        {"se_probe_steps", c.eval.se_probe_steps}}}};
  return doc.dump(2) + "\n";
}

DistillConfig distill_config(const RunConfig& c) {
  DistillConfig d;
  d.layers = c.distill.layers;
  d.lambda_cos = c.distill.lambda_cos;
  d.mode = c.distill.mode;
  d.enhancement = c.enhancement.kind;
  d.enh_loss = c.enhancement.loss;
  d.beta = c.enhancement.beta;
  d.contaminate = c.distill.contaminate;
  d.batch_size = c.train.batch_size;
  d.total_steps = c.train.total_steps;
  d.warmup_steps = c.train.warmup_steps;
  d.peak_lr = c.train.peak_lr;
  d.schedule = c.train.schedule;
  d.weight_decay = c.train.weight_decay;
  d.grad_clip = c.train.grad_clip;
  d.init_from_teacher = c.distill.init_from_teacher;
  d.seed = c.seed;
  return d;
}

StudentConfig student_config(const RunConfig& c) {
  StudentConfig s;
  s.encoder = c.student;
  s.target_layers = c.distill.layers;
  s.mode = c.distill.mode;
  s.teacher_dim = c.teacher.encoder.hidden_dim;
  return s;
}

ProbeSpec probe_spec(const RunConfig& c, ProbeTask task) {
  ProbeSpec p;
  p.task = task;
  p.seed = c.seed;
  p.epochs = c.eval.probe_epochs;
  p.lr = c.eval.probe_lr;
  p.weight_decay = c.eval.probe_weight_decay;
  p.validation_fraction = c.eval.probe_validation_fraction;
  return p;
}

EvalConfig eval_config(const RunConfig& c) {
  EvalConfig e;
  e.seed = c.eval.seed;
  e.scenarios = default_scenarios(c.eval.snr);
  e.tasks = c.eval.tasks;
  return e;
}

std::vector<NoiseSource> build_noise_pool(const PoolSpec& p) {
  return make_noise_pool(p.noise_per_family, p.noise_length_s, p.noise_seed);
}

std::vector<Rir> build_rir_pool(const PoolSpec& p) {
  return make_rir_pool(p.rir_count, p.rt60_low, p.rt60_high, p.rir_seed);
}

Experiment build_experiment(const RunConfig& c) {
  Experiment e;
  e.train = corpus_from(c.data.train_manifest, c.data.train);
  e.probe = corpus_from(c.data.probe_manifest, c.data.probe);
  e.test = corpus_from(c.data.test_manifest, c.data.test);
  e.train_contamination.noise_pool = build_noise_pool(c.data.train_pools);
  e.train_contamination.rir_pool = build_rir_pool(c.data.train_pools);
  e.train_contamination.snr_range = c.data.train_snr;
  e.eval_pools.noise_pool = build_noise_pool(c.data.eval_pools);
  e.eval_pools.rir_pool = build_rir_pool(c.data.eval_pools);
  return e;
}

}  // namespace qkd
