#include "qkd/cli/app.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <CLI11.hpp>
#include <Eigen/Core>
#include <fmt/format.h>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <nlohmann/json.hpp>
#include <optional>
#include <set>
#include <sstream>

#include "qkd/cli/config.hpp"
#include "qkd/cli/exit_codes.hpp"
#include "qkd/cli/svg.hpp"
#include "qkd/errors.hpp"
#include "qkd/eval/metrics.hpp"
#include "qkd/eval/score.hpp"
#include "qkd/signal/audio.hpp"
#include "qkd/signal/corpus.hpp"

namespace qkd {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

struct Common {
  int threads = 1;
  std::optional<std::uint64_t> seed;
  fs::path out;
};

void add_common(CLI::App* cmd, Common& common, bool out_required) {
  cmd->add_option("--threads", common.threads, "Worker threads")->check(CLI::PositiveNumber);
  cmd->add_option("--seed", common.seed, "Global seed");
  auto* out = cmd->add_option("--out", common.out, "Output directory");
  if (out_required) out->required();
}

void setup_logging() {
  static const auto logger = [] {
    auto l = spdlog::stderr_color_mt("qkd");
    spdlog::set_default_logger(l);
    return l;
  }();
  const char* env = std::getenv("RD_LOG_LEVEL");
  const std::string level = env ? env : "info";
  if (level == "error") {
    logger->set_level(spdlog::level::err);
  } else if (level == "info") {
    logger->set_level(spdlog::level::info);
  } else if (level == "debug") {
    logger->set_level(spdlog::level::debug);
  } else {
    throw ConfigError("RD_LOG_LEVEL must be error, info or debug, got '" + level + "'");
  }
}

RunConfig load_config(const std::optional<fs::path>& path, const Common& common) {
  RunConfig c = path ? load_run_config(*path) : RunConfig{};
  if (common.seed) c.seed = *common.seed;
  return c;
}

void write_resolved(const fs::path& out, const RunConfig& config) {
  fs::create_directories(out);
  write_text_atomic(out / "config.resolved.json", resolved_config_json(config));
}

void write_json(const fs::path& path, const json& doc) { write_text_atomic(path, doc.dump(2) + "\n"); }

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

PretrainConfig pretrain_config(const RunConfig& c) {
  PretrainConfig p = c.teacher.pretrain;
  p.seed = c.seed;
  return p;
}

Teacher obtain_teacher(const RunConfig& c, const Experiment& exp, const fs::path& out) {
  if (c.teacher.checkpoint) return load_teacher(*c.teacher.checkpoint, c.teacher.encoder);
  spdlog::info("pretraining teacher on {} clips", exp.train.size());
  auto result = pretrain_teacher(exp.train, c.teacher.encoder, pretrain_config(c));
  save_teacher(out / "teacher.rdkd", result.teacher);
  return std::move(result.teacher);
}

// ------------------------------------------------------------------ synth

struct SynthArgs {
  Common common;
  std::optional<fs::path> config;
  std::string split = "train";
  std::optional<int> speakers, repeats, first_speaker;
  std::optional<double> duration;
  std::optional<std::uint64_t> voice_seed;
};

int run_synth(const SynthArgs& a) {
  const RunConfig c = a.config ? load_run_config(*a.config) : RunConfig{};
  CorpusSpec spec = a.split == "train" ? c.data.train : a.split == "probe" ? c.data.probe : c.data.test;
  if (a.speakers) spec.speakers = *a.speakers;
  if (a.repeats) spec.repeats = *a.repeats;
  if (a.first_speaker) spec.first_speaker = *a.first_speaker;
  if (a.duration) spec.duration_s = *a.duration;
  if (a.voice_seed) spec.voice_seed = *a.voice_seed;
  if (a.common.seed) spec.seed = *a.common.seed;
  const Corpus corpus = synth_corpus(spec);
  save_corpus(a.common.out, corpus);
  std::cout << "wrote " << corpus.size() << " clips to " << (a.common.out / "manifest.csv").string()
            << "\n";
  return 0;
}

// ------------------------------------------------------- pretrain-teacher

struct ConfigArgs {
  Common common;
  std::optional<fs::path> config;
};

int run_pretrain(const ConfigArgs& a) {
  const RunConfig c = load_config(a.config, a.common);
  write_resolved(a.common.out, c);
  const Experiment exp = build_experiment(c);
  const auto result = pretrain_teacher(exp.train, c.teacher.encoder, pretrain_config(c));
  save_teacher(a.common.out / "teacher.rdkd", result.teacher);
  json metrics = {{"steps", result.steps},
                  {"final_loss", result.final_loss},
                  {"train_frame_accuracy", result.train_accuracy}};
  const bool labelled = std::all_of(exp.probe.begin(), exp.probe.end(),
                                    [](const Utterance& u) { return !u.frame_labels.empty(); });
  if (labelled && !exp.probe.empty()) {
    metrics["heldout_frame_accuracy"] = frame_accuracy(result.teacher, result.classifier, exp.probe);
  }
  write_json(a.common.out / "teacher_metrics.json", metrics);
  std::cout << metrics.dump() << "\n";
  return 0;
}

// ---------------------------------------------------------------- distill

struct DistillArgs {
  Common common;
  fs::path config;
  std::optional<fs::path> teacher;
  std::optional<fs::path> resume;
  std::optional<std::uint64_t> stop_after;
};

int run_distill(const DistillArgs& a) {
  RunConfig c = load_config(a.config, a.common);
  if (a.teacher) c.teacher.checkpoint = *a.teacher;
  write_resolved(a.common.out, c);
  const Experiment exp = build_experiment(c);
  const Teacher teacher = obtain_teacher(c, exp, a.common.out);
  DistillData data{&exp.train, exp.train_contamination};
  RunOptions opts;
  opts.out_dir = a.common.out;
  opts.checkpoint_every = c.train.checkpoint_every;
  opts.resume_from = a.resume;
  opts.stop_after = a.stop_after;
  opts.export_heads = c.train.export_heads;
  opts.on_step = [total = c.train.total_steps](const LossRecord& r) {
    const auto line = fmt::format("step {}/{} lr {:.3g} distill {:.4f} enh {:.4f} total {:.4f}",
                                  r.step + 1, total, r.lr, r.distill, r.enh, r.total);
    if ((r.step + 1) % 100 == 0 || r.step + 1 == total) {
      spdlog::info(line);
    } else {
      spdlog::debug(line);
    }
  };
  const RunResult result = train_run(distill_config(c), student_config(c), data, teacher, opts);
  if (!result.student_checkpoint.empty()) std::cout << result.student_checkpoint.string() << "\n";
  return 0;
}

// ------------------------------------------------------------ contaminate

struct ContaminateArgs {
  Common common;
  fs::path manifest;
  std::optional<fs::path> config;
  std::vector<std::string> conditions{"c", "n", "r", "n+r"};
  std::optional<double> snr_low, snr_high;
};

int run_contaminate(const ContaminateArgs& a) {
  const RunConfig c = a.config ? load_run_config(*a.config) : RunConfig{};
  const std::uint64_t seed = a.common.seed.value_or(c.eval.seed);
  const SnrRange snr{a.snr_low.value_or(c.eval.snr.low_db), a.snr_high.value_or(c.eval.snr.high_db)};
  if (snr.low_db > snr.high_db) throw ConfigError("--snr-low exceeds --snr-high");
  const Corpus corpus = load_corpus(a.manifest);
  ContaminationSpec pools;
  pools.noise_pool = build_noise_pool(c.data.eval_pools);
  pools.rir_pool = build_rir_pool(c.data.eval_pools);
  for (const auto& name : a.conditions) {
    const ScenarioSpec scenario{name, parse_action(name), snr};
    const fs::path dir = a.common.out / std::string(condition_name(scenario.action));
    Corpus noisy = corpus;
    std::vector<std::string> sidecars;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      NoisyView view = scenario_view(corpus[i], pools, scenario, seed, i);
      sidecars.push_back(sidecar_json(view, corpus[i].path));
      noisy[i].clip = std::move(view.clip);
    }
    save_corpus(dir, noisy);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      write_text_atomic(dir / (corpus[i].path + ".json"), sidecars[i] + "\n");
    }
    std::cout << "wrote " << noisy.size() << " clips to " << dir.string() << "\n";
  }
  return 0;
}

// ------------------------------------------------------- evaluate / probe

struct EvaluateArgs {
  Common common;
  fs::path config;
  fs::path student;
  std::string name = "student";
  std::optional<fs::path> kws_probe, sid_probe;
};

json disentanglement_json(const DisentanglementResult& d) {
  json points = json::array();
  for (const auto& p : d.projection) points.push_back({p[0], p[1]});
  return {{"silhouette", d.silhouette}, {"speakers", d.speakers}, {"projection", points}};
}

bool wants(const std::vector<ProbeTask>& tasks, ProbeTask t) {
  return std::find(tasks.begin(), tasks.end(), t) != tasks.end();
}

LinearProbe probe_for(const RunConfig& c, const Student& student, const Corpus& probe_set,
                      ProbeTask task, const std::optional<fs::path>& given, const fs::path& out) {
  if (given) return LinearProbe::load(*given);
  const auto r = probe_train(student, probe_spec(c, task), probe_set);
  spdlog::info("{} probe: train accuracy {:.3f}, validation {:.3f}", probe_task_name(task),
               r.train_accuracy, r.validation_accuracy.value_or(-1.0));
  r.probe.save(out / ("probe_" + std::string(probe_task_name(task)) + ".json"));
  return r.probe;
}

int run_evaluate(const EvaluateArgs& a) {
  const RunConfig c = load_config(a.config, a.common);
  write_resolved(a.common.out, c);
  const Experiment exp = build_experiment(c);
  const DistillModels models =
      load_distill_models(a.student, distill_config(c), student_config(c), c.teacher.encoder.hidden_dim);
  EvalConfig ec = eval_config(c);
  EvalModels em;
  em.name = a.name;
  em.student = &models.student;
  std::optional<LinearProbe> kws, sid;
  if (wants(ec.tasks, ProbeTask::kKws)) {
    kws = probe_for(c, models.student, exp.probe, ProbeTask::kKws, a.kws_probe, a.common.out);
    em.kws = &*kws;
  }
  if (wants(ec.tasks, ProbeTask::kSid)) {
    sid = probe_for(c, models.student, exp.probe, ProbeTask::kSid, a.sid_probe, a.common.out);
    em.sid = &*sid;
  }
  std::optional<MaskHead> se_probe;
  if (models.mask_head) {
    em.enhancer = &*models.mask_head;
  } else if (models.waveform_head) {
    em.waveform_enhancer = &*models.waveform_head;
  }
  if (em.enhancer || em.waveform_enhancer) {
    if (!wants(ec.tasks, ProbeTask::kSe)) ec.tasks.push_back(ProbeTask::kSe);
  } else if (wants(ec.tasks, ProbeTask::kSe)) {
    SeProbeSpec sp;
    sp.steps = c.eval.se_probe_steps;
    sp.seed = c.seed;
    se_probe = train_se_probe(models.student, exp.probe, exp.train_contamination, sp);
    em.enhancer = &*se_probe;
  }
  std::set<int> speakers;
  for (const auto& u : exp.test) speakers.insert(u.speaker);
  const auto report = evaluate_scenarios(em, exp.test, exp.eval_pools, ec, default_anchors(speakers.size()));
  write_text_atomic(a.common.out / "report.json", report.to_json());
  write_text_atomic(a.common.out / "report.csv", report.to_csv());
  if (speakers.size() >= 2) {
    json d = {{"model", a.name}, {"conditions", json::object()}};
    const ScenarioSpec clean{"c", Action::kNone, {}};
    const ScenarioSpec noisy{"n0", Action::kNoise, {0.0, 0.0}};
    for (const auto* s : {&clean, &noisy}) {
      d["conditions"][s->name] =
          disentanglement_json(disentanglement_probe(models.student, exp.test, exp.eval_pools, *s, ec.seed));
    }
    write_json(a.common.out / "disentanglement.json", d);
  } else {
    spdlog::warn("disentanglement skipped: the test set has a single speaker");
  }
  for (const auto& s : report.scenario_order) {
    std::string line = s + ":";
    for (const auto& [task, metrics] : report.scenarios.at(s)) {
      const std::string key = task == "asv" ? "eer" : task == "se" ? "si_sdr_improvement" : "accuracy";
      if (metrics.count(key)) line += fmt::format(" {} {} {:.4f}", task, key, metrics.at(key));
    }
    std::cout << line << "\n";
  }
  return 0;
}

struct ProbeArgs {
  Common common;
  fs::path config;
  fs::path student;
  std::string task = "kws";
};

int run_probe(const ProbeArgs& a) {
  const RunConfig c = load_config(a.config, a.common);
  write_resolved(a.common.out, c);
  const ProbeTask task = parse_probe_task(a.task);
  const Experiment exp = build_experiment(c);
  const Student student = load_student(a.student, student_config(c));
  json result = {{"task", a.task}};
  if (task == ProbeTask::kKws || task == ProbeTask::kSid) {
    const auto r = probe_train(student, probe_spec(c, task), exp.probe);
    r.probe.save(a.common.out / ("probe_" + a.task + ".json"));
    const PointSet test = pooled_embeddings(student, exp.test);
    std::vector<int> labels;
    for (const auto& u : exp.test) labels.push_back(task_label(u, task));
    result["train_accuracy"] = r.train_accuracy;
    result["validation_accuracy"] = r.validation_accuracy ? json(*r.validation_accuracy) : json(nullptr);
    result["test_accuracy"] = accuracy(r.probe.predict(test), labels);
  } else if (task == ProbeTask::kAsv) {
    const PointSet test = pooled_embeddings(student, exp.test);
    std::vector<int> speakers;
    for (const auto& u : exp.test) speakers.push_back(u.speaker);
    result["test_eer"] = eer(asv_trials(test, speakers, c.seed));
  } else {
    SeProbeSpec sp;
    sp.steps = c.eval.se_probe_steps;
    sp.seed = c.seed;
    const MaskHead head = train_se_probe(student, exp.probe, exp.train_contamination, sp);
    EvalConfig ec = eval_config(c);
    ec.scenarios = {{"n", Action::kNoise, c.eval.snr}};
    ec.tasks = {ProbeTask::kSe};
    EvalModels em;
    em.student = &student;
    em.enhancer = &head;
    const auto report = evaluate_scenarios(em, exp.test, exp.eval_pools, ec);
    result["test_si_sdr_improvement"] = report.metric("n", "se", "si_sdr_improvement");
  }
  write_json(a.common.out / "probe_result.json", result);
  std::cout << result.dump() << "\n";
  return 0;
}

// ------------------------------------------------------------------ score

struct ScoreArgs {
  fs::path table, anchors;
  std::optional<std::string> upstream;
};

int run_score(const ScoreArgs& a) {
  const ScoreTable table = read_score_table(a.table, a.anchors);
  const std::vector<std::string> models = a.upstream ? std::vector{*a.upstream} : score_models(table);
  for (const auto& m : models) {
    const ScoreResult r = score(table, m);
    if (r.out_of_range) spdlog::warn("score of {} lies outside [0, 1000]", m);
    if (a.upstream) {
      std::cout << fmt::format("{:.1f}", r.value) << "\n";
    } else {
      std::cout << m << "\t" << fmt::format("{:.1f}", r.value) << (r.out_of_range ? "\tout_of_range" : "")
                << "\n";
    }
  }
  return 0;
}

// ----------------------------------------------------------------- report

struct ReportArgs {
  Common common;
  std::vector<fs::path> inputs;
  std::vector<fs::path> train_logs;
  std::vector<fs::path> disentanglement;
};

std::string slug(std::string s) {
  for (auto& ch : s) {
    if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
  }
  return s;
}

void breakdown_chart(const std::vector<RobustnessReport>& reports, const std::string& kind,
                     const fs::path& out) {
  std::map<std::string, std::map<std::string, double>> by_series;
  std::vector<std::string> groups;
  for (const auto& r : reports) {
    for (const auto& row : kind == "noise_type" ? r.noise_type : r.room_class) {
      if (row.task != "kws") continue;
      by_series[r.model + " " + row.scenario][row.group] = row.value;
      if (std::find(groups.begin(), groups.end(), row.group) == groups.end()) groups.push_back(row.group);
    }
  }
  if (by_series.empty()) return;
  BarChart chart{"kws accuracy by " + kind, "accuracy", groups, {}, {}};
  for (const auto& [series, values] : by_series) {
    chart.series.push_back(series);
    std::vector<double> row;
    for (const auto& g : groups) row.push_back(values.count(g) ? values.at(g) : std::nan(""));
    chart.values.push_back(row);
  }
  write_text_atomic(out / (kind + "_kws.svg"), render_svg(chart));
}

int run_report(const ReportArgs& a) {
  fs::create_directories(a.common.out);
  std::vector<RobustnessReport> reports;
  for (const auto& p : a.inputs) {
    try {
      reports.push_back(RobustnessReport::load(p));
    } catch (const Error& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
  }
  std::string csv = "model,task,metric,scenario,value\n";
  for (const auto& r : reports) {
    const std::string body = r.to_csv();
    csv += body.substr(body.find('\n') + 1);
  }
  write_text_atomic(a.common.out / "report.csv", csv);

  std::map<std::pair<std::string, std::string>, bool> metrics;
  std::vector<std::string> scenarios;
  for (const auto& r : reports) {
    for (const auto& s : r.scenario_order) {
      if (std::find(scenarios.begin(), scenarios.end(), s) == scenarios.end()) scenarios.push_back(s);
      for (const auto& [task, values] : r.scenarios.at(s)) {
        for (const auto& [metric, v] : values) metrics[{task, metric}] = true;
      }
    }
  }
  std::size_t charts = 0;
  for (const auto& [key, unused] : metrics) {
    const auto& [task, metric] = key;
    BarChart chart{task + " " + metric + " per scenario", metric, scenarios, {}, {}};
    for (const auto& r : reports) {
      chart.series.push_back(r.model);
      std::vector<double> row;
      for (const auto& s : scenarios) {
        const auto it = r.scenarios.find(s);
        double v = std::nan("");
        if (it != r.scenarios.end() && it->second.count(task) && it->second.at(task).count(metric)) {
          v = it->second.at(task).at(metric);
        }
        row.push_back(v);
      }
      chart.values.push_back(row);
    }
    write_text_atomic(a.common.out / (slug(task + "_" + metric) + ".svg"), render_svg(chart));
    ++charts;
  }
  breakdown_chart(reports, "noise_type", a.common.out);
  breakdown_chart(reports, "room_class", a.common.out);

  if (!a.train_logs.empty()) {
    LineChart chart{"training loss", "step", "total loss", {}, {}};
    for (const auto& p : a.train_logs) {
      std::istringstream lines(read_text(p));
      std::vector<std::array<double, 2>> points;
      std::string line;
      while (std::getline(lines, line)) {
        if (line.empty()) continue;
        try {
          const json j = json::parse(line);
          points.push_back({j.at("step").get<double>(), j.at("total").get<double>()});
        } catch (const json::exception& e) {
          throw FormatError(p.string() + ": " + e.what());
        }
      }
      chart.series.push_back(p.parent_path().filename().string());
      chart.points.push_back(std::move(points));
    }
    write_text_atomic(a.common.out / "training_loss.svg", render_svg(chart));
  }
  for (const auto& p : a.disentanglement) {
    try {
      const json d = json::parse(read_text(p));
      const std::string model = d.at("model");
      for (const auto& [cond, v] : d.at("conditions").items()) {
        ScatterChart chart;
        chart.title = fmt::format("{} {} (silhouette {:.3f})", model, cond, v.at("silhouette").get<double>());
        std::map<int, int> colour;
        for (const auto& s : v.at("speakers")) colour.emplace(s.get<int>(), static_cast<int>(colour.size()));
        for (const auto& s : v.at("speakers")) chart.groups.push_back(colour.at(s.get<int>()));
        for (const auto& q : v.at("projection")) chart.points.push_back({q.at(0), q.at(1)});
        write_text_atomic(a.common.out / (slug("pca_" + model + "_" + cond) + ".svg"), render_svg(chart));
      }
    } catch (const json::exception& e) {
      throw FormatError(p.string() + ": " + e.what());
    }
  }
  std::cout << "wrote " << charts << " scenario charts to " << a.common.out.string() << "\n";
  return 0;
}

}  // namespace

int cli_dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Robust speech representation distillation toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Write a synthetic keyword corpus with a manifest");
  add_common(synth_cmd, synth.common, true);
  synth_cmd->add_option("--config", synth.config, "Run config supplying the corpus spec");
  synth_cmd->add_option("--split", synth.split, "Corpus of the config to draw")
      ->check(CLI::IsMember({"train", "probe", "test"}));
  synth_cmd->add_option("--speakers", synth.speakers);
  synth_cmd->add_option("--repeats", synth.repeats);
  synth_cmd->add_option("--duration", synth.duration, "Clip length in seconds");
  synth_cmd->add_option("--first-speaker", synth.first_speaker);
  synth_cmd->add_option("--voice-seed", synth.voice_seed);

  ConfigArgs pretrain;
  auto* pretrain_cmd = app.add_subcommand("pretrain-teacher", "Pretrain and freeze the teacher");
  add_common(pretrain_cmd, pretrain.common, true);
  pretrain_cmd->add_option("--config", pretrain.config, "Run config (JSON)");

  DistillArgs distill;
  auto* distill_cmd = app.add_subcommand("distill", "Distil a student from the teacher");
  add_common(distill_cmd, distill.common, true);
  distill_cmd->add_option("--config", distill.config, "Run config (JSON)")->required();
  distill_cmd->add_option("--teacher", distill.teacher, "Frozen teacher checkpoint");
  distill_cmd->add_option("--resume", distill.resume, "Full-state checkpoint to resume from")
      ;
  distill_cmd->add_option("--stop-after", distill.stop_after, "Stop after this many steps");

  ContaminateArgs contaminate;
  auto* contaminate_cmd = app.add_subcommand("contaminate", "Materialise scenario test sets with sidecars");
  add_common(contaminate_cmd, contaminate.common, true);
  contaminate_cmd->add_option("--manifest", contaminate.manifest)->required();
  contaminate_cmd->add_option("--config", contaminate.config, "Run config for pools and SNR")
      ;
  contaminate_cmd->add_option("--conditions", contaminate.conditions, "Any of c, n, r, n+r")->delimiter(',');
  contaminate_cmd->add_option("--snr-low", contaminate.snr_low);
  contaminate_cmd->add_option("--snr-high", contaminate.snr_high);

  EvaluateArgs evaluate;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "Robustness report of a student checkpoint");
  add_common(evaluate_cmd, evaluate.common, true);
  evaluate_cmd->add_option("--config", evaluate.config)->required();
  evaluate_cmd->add_option("--student", evaluate.student)->required();
  evaluate_cmd->add_option("--name", evaluate.name, "Model name in the report");
  evaluate_cmd->add_option("--kws-probe", evaluate.kws_probe);
  evaluate_cmd->add_option("--sid-probe", evaluate.sid_probe);

  ScoreArgs score_args;
  auto* score_cmd = app.add_subcommand("score", "Aggregate score of upstream models");
  score_cmd->add_option("--table", score_args.table)->required();
  score_cmd->add_option("--anchors", score_args.anchors)->required();
  score_cmd->add_option("--upstream", score_args.upstream, "Model to score (all when omitted)");

  ProbeArgs probe;
  auto* probe_cmd = app.add_subcommand("probe", "Train and test one probe on a frozen student");
  add_common(probe_cmd, probe.common, true);
  probe_cmd->add_option("--config", probe.config)->required();
  probe_cmd->add_option("--student", probe.student)->required();
  probe_cmd->add_option("--task", probe.task)->check(CLI::IsMember({"kws", "sid", "asv", "se"}));

  ReportArgs report;
  auto* report_cmd = app.add_subcommand("report", "Render reports to CSV and SVG charts");
  add_common(report_cmd, report.common, true);
  report_cmd->add_option("--input", report.inputs, "report.json files")->required();
  report_cmd->add_option("--train-log", report.train_logs, "train_log.jsonl files");
  report_cmd->add_option("--disentanglement", report.disentanglement, "disentanglement.json files")
      ;

  std::vector<const char*> argv;
  for (const auto& s : args) argv.push_back(s.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  CLI::App* cmd = app.get_subcommands().front();
  try {
    setup_logging();
    if (const auto* threads = cmd->get_option_no_throw("--threads"); threads && threads->count()) {
      Eigen::setNbThreads(threads->as<int>());
    }
    if (cmd == synth_cmd) return run_synth(synth);
    if (cmd == pretrain_cmd) return run_pretrain(pretrain);
    if (cmd == distill_cmd) return run_distill(distill);
    if (cmd == contaminate_cmd) return run_contaminate(contaminate);
    if (cmd == evaluate_cmd) return run_evaluate(evaluate);
    if (cmd == score_cmd) return run_score(score_args);
    if (cmd == probe_cmd) return run_probe(probe);
    return run_report(report);
  } catch (const std::exception& e) {
    std::cerr << "qkd " << cmd->get_name() << ": error: " << e.what() << "\n";
    return static_cast<int>(exit_code_for(e));
  }
}

}  // namespace qkd
