#include "qkd/eval/robustness.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "qkd/errors.hpp"
#include "qkd/rng.hpp"
#include "qkd/signal/metrics.hpp"
#include "qkd/signal/rir.hpp"

namespace qkd {

namespace {

using ojson = nlohmann::ordered_json;

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct GroupTally {
  std::size_t count = 0;
  std::size_t kws_hits = 0;
  std::size_t sid_hits = 0;
};

void add_breakdown(std::vector<BreakdownRow>& out, const std::string& scenario,
                   const std::string& group, const GroupTally& g, bool kws, bool sid) {
  const double n = static_cast<double>(g.count);
  if (kws) out.push_back({scenario, group, "kws", "accuracy", static_cast<double>(g.kws_hits) / n, g.count});
  if (sid) out.push_back({scenario, group, "sid", "accuracy", static_cast<double>(g.sid_hits) / n, g.count});
  if (!kws && !sid) out.push_back({scenario, group, "items", "count", n, g.count});
}

bool higher_is_better(const std::string& task, const std::string& metric) {
  return !(task == "asv" && metric == "eer");
}

ojson breakdown_json(const std::vector<BreakdownRow>& rows) {
  ojson a = ojson::array();
  for (const auto& r : rows) {
    a.push_back({{"scenario", r.scenario}, {"group", r.group}, {"task", r.task},
                 {"metric", r.metric}, {"value", r.value}, {"count", r.count}});
  }
  return a;
}

std::vector<BreakdownRow> breakdown_from_json(const nlohmann::json& a) {
  std::vector<BreakdownRow> rows;
  for (const auto& r : a) {
    rows.push_back({r.at("scenario").get<std::string>(), r.at("group").get<std::string>(),
                    r.at("task").get<std::string>(), r.at("metric").get<std::string>(),
                    r.at("value").get<double>(), r.at("count").get<std::size_t>()});
  }
  return rows;
}

}  // namespace

std::vector<ScenarioSpec> default_scenarios(SnrRange snr) {
  std::vector<ScenarioSpec> out;
  for (Action a : kActions) out.push_back({std::string(condition_name(a)), a, snr});
  return out;
}

std::vector<ScoreAnchor> default_anchors(std::size_t speakers) {
  if (speakers < 2) throw ConfigError("default_anchors: need at least two speakers");
  return {{"kws", "accuracy", 1.0 / kKeywordCount, 1.0},
          {"sid", "accuracy", 1.0 / static_cast<double>(speakers), 1.0},
          {"asv", "eer", 0.5, 0.0},
          {"se", "si_sdr_improvement", 0.0, 20.0}};
}

NoisyView scenario_view(const Utterance& u, const ContaminationSpec& pools,
                        const ScenarioSpec& scenario, std::uint64_t seed, std::size_t index) {
  ContaminationSpec spec = pools;
  spec.fixed_action = scenario.action;
  spec.snr_range = scenario.snr;
  return contaminate(u.clip, spec, derive_seed(seed, fnv1a(scenario.name), index));
}

RobustnessReport evaluate_scenarios(const EvalModels& models, const Corpus& test,
                                    const ContaminationSpec& pools, const EvalConfig& config,
                                    const std::vector<ScoreAnchor>& anchors) {
  if (!models.student) throw ConfigError("evaluate_scenarios: no student");
  if (test.empty()) throw DataError("evaluate_scenarios: empty test set");
  if (config.scenarios.empty()) throw ConfigError("evaluate_scenarios: no scenarios");
  const auto wants = [&](ProbeTask t) {
    return std::find(config.tasks.begin(), config.tasks.end(), t) != config.tasks.end();
  };
  const bool do_kws = wants(ProbeTask::kKws), do_sid = wants(ProbeTask::kSid);
  const bool do_asv = wants(ProbeTask::kAsv), do_se = wants(ProbeTask::kSe);
  if (do_kws && !models.kws) throw ConfigError("evaluate_scenarios: kws requested without a kws probe");
  if (do_sid && !models.sid) throw ConfigError("evaluate_scenarios: sid requested without a sid probe");
  if (do_se && !models.enhancer && !models.waveform_enhancer) {
    throw ConfigError("evaluate_scenarios: se requested without an enhancement head");
  }
  for (const auto& u : test) {
    if (do_kws && !models.kws->knows(u.keyword)) {
      throw DataError("test item '" + u.path + "' has keyword " + std::to_string(u.keyword) +
                      " unknown to the kws probe");
    }
    if (do_sid && !models.sid->knows(u.speaker)) {
      throw DataError("test item '" + u.path + "' has speaker " + std::to_string(u.speaker) +
                      " unknown to the sid probe");
    }
  }

  const Student& student = *models.student;
  const std::size_t dim = student.config().encoder.hidden_dim;
  RobustnessReport report;
  report.model = models.name;
  for (const auto& scenario : config.scenarios) {
    if (report.scenarios.count(scenario.name)) {
      throw ConfigError("duplicate scenario '" + scenario.name + "'");
    }
    report.scenario_order.push_back(scenario.name);
    auto& metrics = report.scenarios[scenario.name];

    PointSet emb;
    emb.count = test.size();
    emb.dim = dim;
    emb.values.reserve(test.size() * dim);
    std::vector<int> speakers, keywords;
    std::vector<std::optional<NoiseFamily>> families;
    std::vector<std::optional<RoomClass>> rooms;
    std::vector<double> se_out, se_in;
    for (std::size_t i = 0; i < test.size(); ++i) {
      const auto view = scenario_view(test[i], pools, scenario, config.seed, i);
      NoGradGuard no_grad;
      const Tensor h = student.represent(view.clip.samples());
      const std::size_t t = h.dim(0);
      std::vector<double> pooled(dim, 0.0);
      for (std::size_t f = 0; f < t; ++f) {
        for (std::size_t j = 0; j < dim; ++j) pooled[j] += h[f * dim + j];
      }
      for (auto& v : pooled) emb.values.push_back(v / static_cast<double>(t));
      speakers.push_back(test[i].speaker);
      keywords.push_back(test[i].keyword);
      families.push_back(view.noise_family);
      rooms.push_back(view.rt60_s ? std::optional(room_class_for(*view.rt60_s)) : std::nullopt);
      if (do_se && scenario.action != Action::kNone) {
        const Tensor enhanced =
            models.enhancer ? models.enhancer->enhance(h, view.clip.samples())
                            : models.waveform_enhancer->reconstruct(h, view.clip.size());
        const auto clean = test[i].clip.samples();
        se_out.push_back(si_sdr(enhanced.values(), clean));
        se_in.push_back(si_sdr(view.clip.samples(), clean));
      }
    }

    std::vector<int> kws_pred, sid_pred;
    if (do_kws) {
      kws_pred = models.kws->predict(emb);
      metrics["kws"]["accuracy"] = accuracy(kws_pred, keywords);
    }
    if (do_sid) {
      sid_pred = models.sid->predict(emb);
      metrics["sid"]["accuracy"] = accuracy(sid_pred, speakers);
    }
    if (do_asv) {
      metrics["asv"]["eer"] =
          eer(asv_trials(emb, speakers, derive_seed(config.seed, fnv1a(scenario.name), fnv1a("asv"))));
    }
    if (!se_out.empty()) {
      std::vector<double> gain(se_out.size());
      double sum_out = 0.0, sum_in = 0.0;
      for (std::size_t i = 0; i < gain.size(); ++i) {
        gain[i] = se_out[i] - se_in[i];
        sum_out += se_out[i];
        sum_in += se_in[i];
      }
      const double n = static_cast<double>(gain.size());
      auto& se = metrics["se"];
      se["si_sdr"] = sum_out / n;
      se["si_sdr_input"] = sum_in / n;
      se["si_sdr_improvement"] = (sum_out - sum_in) / n;
      std::vector<double> sorted = gain;
      std::sort(sorted.begin(), sorted.end());
      const auto quantile = [&](double q) {
        const double pos = q * (n - 1.0);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
        return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
      };
      se["improvement_min"] = sorted.front();
      se["improvement_p25"] = quantile(0.25);
      se["improvement_median"] = quantile(0.5);
      se["improvement_p75"] = quantile(0.75);
      se["improvement_max"] = sorted.back();
      se["improved_fraction"] =
          static_cast<double>(std::count_if(gain.begin(), gain.end(), [](double g) { return g > 0.0; })) / n;
      report.si_sdr_improvement[scenario.name] = std::move(gain);
    }

    const auto tally = [&](auto key_of, auto names, std::vector<BreakdownRow>& out) {
      std::map<int, GroupTally> groups;
      for (std::size_t i = 0; i < test.size(); ++i) {
        const auto key = key_of(i);
        if (!key) continue;
        auto& g = groups[static_cast<int>(*key)];
        ++g.count;
        if (do_kws) g.kws_hits += kws_pred[i] == keywords[i];
        if (do_sid) g.sid_hits += sid_pred[i] == speakers[i];
      }
      for (const auto& [k, g] : groups) add_breakdown(out, scenario.name, names(k), g, do_kws, do_sid);
    };
    if (has_noise(scenario.action)) {
      tally([&](std::size_t i) { return families[i]; },
            [](int k) { return std::string(noise_family_name(static_cast<NoiseFamily>(k))); },
            report.noise_type);
    }
    if (has_reverb(scenario.action)) {
      tally([&](std::size_t i) { return rooms[i]; },
            [](int k) { return std::string(room_class_name(static_cast<RoomClass>(k))); },
            report.room_class);
    }

    if (!anchors.empty()) {
      ScoreTable table;
      table.anchors = anchors;
      for (const auto& [task, values] : metrics) {
        for (const auto& [metric, value] : values) {
          const bool anchored = std::any_of(anchors.begin(), anchors.end(), [&](const ScoreAnchor& a) {
            return a.task == task && a.metric == metric;
          });
          if (anchored) table.rows.push_back({models.name, task, metric, value, higher_is_better(task, metric)});
        }
      }
      if (!table.rows.empty()) report.score_per_group[scenario.name] = score(table, models.name);
    }
  }
  return report;
}

double RobustnessReport::metric(const std::string& scenario, const std::string& task,
                                const std::string& metric) const {
  const auto s = scenarios.find(scenario);
  if (s == scenarios.end()) throw MetricError("report has no scenario '" + scenario + "'");
  const auto t = s->second.find(task);
  if (t == s->second.end()) throw MetricError("scenario '" + scenario + "' has no task '" + task + "'");
  const auto m = t->second.find(metric);
  if (m == t->second.end()) throw MetricError("task '" + task + "' has no metric '" + metric + "'");
  return m->second;
}

std::string RobustnessReport::to_json() const {
  ojson j;
  j["model"] = model;
  ojson sc = ojson::object();
  for (const auto& name : scenario_order) {
    ojson tasks = ojson::object();
    for (const auto& [task, values] : scenarios.at(name)) {
      ojson m = ojson::object();
      for (const auto& [metric, value] : values) m[metric] = value;
      tasks[task] = m;
    }
    sc[name] = tasks;
  }
  j["scenarios"] = sc;
  j["breakdowns"] = {{"noise_type", breakdown_json(noise_type)},
                     {"room_class", breakdown_json(room_class)}};
  ojson scores = ojson::object();
  for (const auto& name : scenario_order) {
    const auto it = score_per_group.find(name);
    if (it == score_per_group.end()) continue;
    scores[name] = {{"score", it->second.value}, {"out_of_range", it->second.out_of_range}};
  }
  j["score_per_group"] = scores;
  ojson dist = ojson::object();
  for (const auto& name : scenario_order) {
    const auto it = si_sdr_improvement.find(name);
    if (it != si_sdr_improvement.end()) dist[name] = it->second;
  }
  j["si_sdr_improvement"] = dist;
  return j.dump(2) + "\n";
}

std::string RobustnessReport::to_csv() const {
  std::string out = "model,task,metric,scenario,value\n";
  for (const auto& name : scenario_order) {
    for (const auto& [task, values] : scenarios.at(name)) {
      for (const auto& [metric, value] : values) {
        out += model + "," + task + "," + metric + "," + name + "," + format_number(value) + "\n";
      }
    }
  }
  return out;
}

RobustnessReport RobustnessReport::from_json(const std::string& text) {
  try {
    const auto j = nlohmann::ordered_json::parse(text);
    RobustnessReport r;
    r.model = j.at("model").get<std::string>();
    for (const auto& [name, tasks] : j.at("scenarios").items()) {
      r.scenario_order.push_back(name);
      auto& dst = r.scenarios[name];
      for (const auto& [task, values] : tasks.items()) {
        for (const auto& [metric, value] : values.items()) dst[task][metric] = value.get<double>();
      }
    }
    const auto& b = j.at("breakdowns");
    r.noise_type = breakdown_from_json(b.at("noise_type"));
    r.room_class = breakdown_from_json(b.at("room_class"));
    for (const auto& [name, s] : j.at("score_per_group").items()) {
      r.score_per_group[name] = {s.at("score").get<double>(), s.at("out_of_range").get<bool>()};
    }
    if (j.contains("si_sdr_improvement")) {
      for (const auto& [name, v] : j.at("si_sdr_improvement").items()) {
        r.si_sdr_improvement[name] = v.get<std::vector<double>>();
      }
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("robustness report: ") + e.what());
  }
}

RobustnessReport RobustnessReport::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open report " + path.string());
  return from_json({std::istreambuf_iterator<char>(in), {}});
}

DisentanglementResult disentanglement_probe(const Student& student, const Corpus& clips,
                                            const ContaminationSpec& pools,
                                            const ScenarioSpec& scenario, std::uint64_t seed) {
  DisentanglementResult r;
  PointSet emb;
  emb.count = clips.size();
  emb.dim = student.config().encoder.hidden_dim;
  for (std::size_t i = 0; i < clips.size(); ++i) {
    const auto view = scenario_view(clips[i], pools, scenario, seed, i);
    const auto e = pooled_embedding(student, view.clip.samples());
    emb.values.insert(emb.values.end(), e.begin(), e.end());
    r.speakers.push_back(clips[i].speaker);
  }
  r.silhouette = silhouette(emb, r.speakers);
  r.projection = pca_2d(emb);
  return r;
}

}  // namespace qkd
