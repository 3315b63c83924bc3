#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>

#include "qkd/cli/app.hpp"
#include "qkd/cli/config.hpp"
#include "qkd/cli/exit_codes.hpp"
#include "qkd/cli/svg.hpp"
#include "qkd/errors.hpp"
#include "qkd/signal/audio.hpp"
#include "qkd/signal/corpus.hpp"

namespace qkd {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("qkd_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "qkd");
  return cli_dispatch(args);
}

struct Captured {
  int code;
  std::string out;
  std::string err;
};

Captured run_captured(std::vector<std::string> args) {
  testing::internal::CaptureStdout();
  testing::internal::CaptureStderr();
  const int code = run(std::move(args));
  return {code, testing::internal::GetCapturedStdout(), testing::internal::GetCapturedStderr()};
}

/// Small enough that pretraining plus a short distillation takes seconds.
json tiny_config() {
  const json encoder_t = {{"conv_channels", 8}, {"hidden_dim", 16}, {"num_layers", 2},
                          {"num_heads", 2},     {"ffn_dim", 24}};
  const json encoder_s = {{"conv_channels", 8}, {"hidden_dim", 16}, {"num_layers", 1},
                          {"num_heads", 2},     {"ffn_dim", 24}};
  const json corpus = {{"speakers", 2}, {"repeats", 1}, {"duration_s", 0.4}};
  return {{"seed", 3},
          {"data",
           {{"train", corpus},
            {"probe", {{"speakers", 2}, {"repeats", 2}, {"duration_s", 0.4}, {"first_speaker", 100}, {"seed", 11}}},
            {"test", {{"speakers", 2}, {"repeats", 1}, {"duration_s", 0.4}, {"first_speaker", 100}, {"seed", 12}}},
            {"train_pools", {{"noise_per_family", 1}, {"noise_length_s", 1.0}, {"rir_count", 3}}},
            {"eval_pools", {{"noise_per_family", 1}, {"noise_length_s", 1.0}, {"rir_count", 3}, {"noise_seed", 5}, {"rir_seed", 6}}}}},
          {"teacher", {{"encoder", encoder_t}, {"pretrain", {{"epochs", 1}, {"batch_size", 4}}}}},
          {"student", {{"encoder", encoder_s}}},
          {"distill", {{"layers", {1, 2}}}},
          {"enhancement", {{"kind", "mask"}}},
          {"train", {{"batch_size", 2}, {"total_steps", 12}, {"warmup_steps", 2}, {"checkpoint_every", 6}}},
          {"eval", {{"probe_epochs", 30}}}};
}

fs::path write_config(const fs::path& dir, const json& doc) {
  const fs::path p = dir / "config.json";
  write_text_atomic(p, doc.dump(2));
  return p;
}

// ----------------------------------------------------------------- config

TEST(RunConfig, DefaultsResolveAndRoundTrip) {
  const RunConfig defaults = parse_run_config("{}");
  const std::string text = resolved_config_json(defaults);
  EXPECT_EQ(resolved_config_json(parse_run_config(text)), text);
  const json doc = json::parse(text);
  EXPECT_EQ(doc["train"]["total_steps"], 5000);
  EXPECT_EQ(doc["distill"]["layers"], json({2, 4, 6}));
  EXPECT_EQ(doc["enhancement"]["kind"], "none");
  EXPECT_TRUE(doc["teacher"]["checkpoint"].is_null());
}

TEST(RunConfig, NonDefaultValuesSurviveTheEcho) {
  const RunConfig c = parse_run_config(tiny_config().dump());
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.student.hidden_dim, 16u);
  EXPECT_EQ(c.enhancement.kind, EnhancementKind::kMask);
  EXPECT_EQ(c.distill.layers, (std::vector<std::size_t>{1, 2}));
  const std::string text = resolved_config_json(c);
  EXPECT_EQ(resolved_config_json(parse_run_config(text)), text);
  EXPECT_EQ(distill_config(c).seed, 3u);
  EXPECT_EQ(student_config(c).teacher_dim, 16u);
}

TEST(RunConfig, UnknownKeysAreRejectedWithTheirPath) {
  try {
    parse_run_config(R"({"train": {"lr_sched": "cosine"}})");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("train.lr_sched"), std::string::npos) << e.what();
  }
  try {
    parse_run_config(R"({"data": {"train": {"speakerz": 3}}})");
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("data.train.speakerz"), std::string::npos) << e.what();
  }
  EXPECT_THROW(parse_run_config(R"({"colour": 1})"), ConfigError);
}

TEST(RunConfig, IllTypedAndInvalidValuesNameTheKey) {
  const auto message = [](const std::string& text) {
    try {
      parse_run_config(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message(R"({"train": {"total_steps": "many"}})").find("train.total_steps"), std::string::npos);
  EXPECT_NE(message(R"({"train": {"batch_size": -1}})").find("train.batch_size"), std::string::npos);
  EXPECT_NE(message(R"({"enhancement": {"kind": "spectral"}})").find("enhancement.kind"), std::string::npos);
  EXPECT_NE(message(R"({"distill": {"layers": [2, 9]}})").find("distill.layers"), std::string::npos);
  EXPECT_NE(message(R"({"data": {"test": {"duration_s": 0.01}}})").find("data.test.duration_s"),
            std::string::npos);
  EXPECT_NE(message(R"({"eval": {"tasks": ["asr"]}})").find("eval.tasks"), std::string::npos);
  EXPECT_NE(message("{not json").find("JSON"), std::string::npos);
}

TEST(ExitCodes, ErrorClassesMapToTheirCodes) {
  EXPECT_EQ(exit_code_for(ConfigError("x")), ExitCode::kConfig);
  EXPECT_EQ(exit_code_for(DataError("x")), ExitCode::kData);
  EXPECT_EQ(exit_code_for(FormatError("x")), ExitCode::kData);
  EXPECT_EQ(exit_code_for(MetricError("x")), ExitCode::kData);
  EXPECT_EQ(exit_code_for(TrainingError("x")), ExitCode::kNumeric);
  EXPECT_EQ(exit_code_for(DomainError("x")), ExitCode::kNumeric);
}

// ------------------------------------------------------------------- svg

TEST(Svg, BarChartHasOneRectPerFiniteValue) {
  BarChart chart{"t <1>", "acc", {"c", "n"}, {"a", "b", "c"}, {{0.5, 1.0}, {0.2, -0.1}, {0.3, std::nan("")}}};
  const std::string svg = render_svg(chart);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("t &lt;1&gt;"), std::string::npos);
  std::size_t bars = 0;
  for (std::size_t p = svg.find("<title>"); p != std::string::npos; p = svg.find("<title>", p + 1)) ++bars;
  EXPECT_EQ(bars, 5u);
  EXPECT_EQ(svg.substr(svg.size() - 7), "</svg>\n");
  EXPECT_EQ(render_svg(chart), svg);
}

TEST(Svg, LineAndScatterChartsRender) {
  LineChart line{"loss", "step", "total", {"run"}, {{{0, 2.0}, {1, 1.5}, {2, 1.2}}}};
  EXPECT_NE(render_svg(line).find("<polyline"), std::string::npos);
  ScatterChart scatter{"pca", {{0, 0}, {1, 1}, {2, -1}}, {0, 1, 1}};
  const std::string s = render_svg(scatter);
  std::size_t circles = 0;
  for (std::size_t p = s.find("<circle"); p != std::string::npos; p = s.find("<circle", p + 1)) ++circles;
  EXPECT_EQ(circles, 3u);
}

// -------------------------------------------------------------- dispatch

TEST(Cli, UsageErrorsExitWithOne) {
  EXPECT_EQ(run_captured({"frobnicate"}).code, 1);
  EXPECT_EQ(run_captured({}).code, 1);
  EXPECT_EQ(run_captured({"synth"}).code, 1);
  EXPECT_EQ(run_captured({"synth", "--out", "x", "--threads", "0"}).code, 1);
  EXPECT_EQ(run_captured({"--help"}).code, 0);
}

TEST(Cli, ScorePrintsThousandForAModelAtSota) {
  const fs::path dir = scratch("score");
  write_text_atomic(dir / "t.csv",
                    "model,task,metric,value,higher_is_better\n"
                    "M,kws,accuracy,0.97,true\nM,asv,eer,0.02,false\n"
                    "B,kws,accuracy,0.6,true\nB,asv,eer,0.3,false\n");
  write_text_atomic(dir / "a.csv", "task,metric,base,sota\nkws,accuracy,0.6,0.97\nasv,eer,0.3,0.02\n");
  const auto r = run_captured({"score", "--table", (dir / "t.csv").string(), "--anchors",
                               (dir / "a.csv").string(), "--upstream", "M"});
  EXPECT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "1000.0\n");
  const auto all = run_captured({"score", "--table", (dir / "t.csv").string(), "--anchors",
                                 (dir / "a.csv").string()});
  EXPECT_EQ(all.out, "M\t1000.0\nB\t0.0\n");
  const auto missing = run_captured({"score", "--table", (dir / "nope.csv").string(), "--anchors",
                                     (dir / "a.csv").string()});
  EXPECT_EQ(missing.code, 3);
  EXPECT_NE(missing.err.find("nope.csv"), std::string::npos) << missing.err;
}

TEST(Cli, UnknownConfigKeyExitsWithTwoNamingTheKey) {
  const fs::path dir = scratch("badkey");
  json doc = tiny_config();
  doc["train"]["lr_sched"] = "cosine";
  const auto r = run_captured({"distill", "--config", write_config(dir, doc).string(), "--out",
                               (dir / "run").string()});
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("train.lr_sched"), std::string::npos) << r.err;
  EXPECT_NE(r.err.find("config.json"), std::string::npos) << r.err;
}

TEST(Cli, InvalidLogLevelIsAConfigError) {
  const fs::path dir = scratch("loglevel");
  setenv("RD_LOG_LEVEL", "chatty", 1);
  const auto r = run_captured({"synth", "--out", dir.string(), "--speakers", "1", "--repeats", "1"});
  unsetenv("RD_LOG_LEVEL");
  EXPECT_EQ(r.code, 2);
  EXPECT_NE(r.err.find("RD_LOG_LEVEL"), std::string::npos);
}

TEST(Cli, SynthAndContaminateWriteManifestsAndSidecars) {
  const fs::path dir = scratch("contaminate");
  ASSERT_EQ(run_captured({"synth", "--out", (dir / "clean").string(), "--speakers", "2", "--repeats",
                          "1", "--duration", "0.4", "--seed", "4"})
                .code,
            0);
  const Corpus clean = load_corpus(dir / "clean" / "manifest.csv");
  ASSERT_EQ(clean.size(), 2u * 6u);
  const auto r = run_captured({"contaminate", "--manifest", (dir / "clean" / "manifest.csv").string(),
                               "--out", (dir / "sets").string(), "--conditions", "c,n+r", "--seed", "9"});
  ASSERT_EQ(r.code, 0) << r.err;
  const Corpus same = load_corpus(dir / "sets" / "c" / "manifest.csv");
  const Corpus noisy = load_corpus(dir / "sets" / "n+r" / "manifest.csv");
  ASSERT_EQ(noisy.size(), clean.size());
  for (std::size_t i = 0; i < clean.size(); ++i) {
    EXPECT_EQ(same[i].clip.samples().size(), clean[i].clip.samples().size());
    EXPECT_TRUE(std::equal(same[i].clip.samples().begin(), same[i].clip.samples().end(),
                           clean[i].clip.samples().begin()));
    const json side = json::parse(slurp(dir / "sets" / "n+r" / (clean[i].path + ".json")));
    EXPECT_EQ(side["action"], "noise+reverb");
    EXPECT_EQ(side["source"], clean[i].path);
    EXPECT_TRUE(side["snr_db"].is_number());
    EXPECT_TRUE(side["rir_id"].is_string());
    const json plain = json::parse(slurp(dir / "sets" / "c" / (clean[i].path + ".json")));
    EXPECT_TRUE(plain["snr_db"].is_null());
  }
  const fs::path again = dir / "again";
  ASSERT_EQ(run_captured({"contaminate", "--manifest", (dir / "clean" / "manifest.csv").string(),
                          "--out", again.string(), "--conditions", "n+r", "--seed", "9"})
                .code,
            0);
  EXPECT_EQ(slurp(again / "n+r" / clean[3].path), slurp(dir / "sets" / "n+r" / clean[3].path));
}

class CliPipeline : public testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = scratch("pipeline");
    config_ = write_config(dir_, tiny_config());
    const auto t = run_captured({"pretrain-teacher", "--config", config_.string(), "--out",
                                 (dir_ / "teacher").string()});
    ASSERT_EQ(t.code, 0) << t.err;
    for (const char* name : {"a", "b"}) {
      const auto r = run_captured({"distill", "--config", config_.string(), "--out",
                                   (dir_ / name).string()});
      ASSERT_EQ(r.code, 0) << r.err;
    }
  }

  static inline fs::path dir_;
  static inline fs::path config_;
};

TEST_F(CliPipeline, PretrainWritesTeacherAndMetrics) {
  EXPECT_TRUE(fs::exists(dir_ / "teacher" / "teacher.rdkd"));
  const json m = json::parse(slurp(dir_ / "teacher" / "teacher_metrics.json"));
  EXPECT_GT(m["steps"].get<int>(), 0);
  EXPECT_TRUE(m.contains("heldout_frame_accuracy"));
}

TEST_F(CliPipeline, DistillTwiceGivesByteIdenticalCheckpoints) {
  const std::string a = slurp(dir_ / "a" / "student.rdkd");
  ASSERT_FALSE(a.empty());
  EXPECT_EQ(a, slurp(dir_ / "b" / "student.rdkd"));
  EXPECT_EQ(slurp(dir_ / "a" / "checkpoints" / "step_000012.rdkd"),
            slurp(dir_ / "b" / "checkpoints" / "step_000012.rdkd"));
  EXPECT_EQ(slurp(dir_ / "a" / "teacher.rdkd"), slurp(dir_ / "teacher" / "teacher.rdkd"));
}

TEST_F(CliPipeline, ResolvedConfigReproducesTheRun) {
  const fs::path echo = dir_ / "a" / "config.resolved.json";
  EXPECT_EQ(resolved_config_json(load_run_config(echo)), slurp(echo));
  const auto r = run_captured({"distill", "--config", echo.string(), "--out", (dir_ / "echo").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(slurp(dir_ / "echo" / "student.rdkd"), slurp(dir_ / "a" / "student.rdkd"));
}

TEST_F(CliPipeline, SeedFlagChangesTheRun) {
  const auto r = run_captured({"distill", "--config", config_.string(), "--teacher",
                               (dir_ / "teacher" / "teacher.rdkd").string(), "--seed", "4", "--out",
                               (dir_ / "seed4").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(slurp(dir_ / "seed4" / "student.rdkd"), slurp(dir_ / "a" / "student.rdkd"));
  EXPECT_EQ(json::parse(slurp(dir_ / "seed4" / "config.resolved.json"))["seed"], 4);
}

TEST_F(CliPipeline, EvaluateProbeAndReport) {
  json doc = tiny_config();
  doc["train"]["export_heads"] = true;
  const fs::path cfg = write_config(dir_ / "a", doc);
  const fs::path student = dir_ / "a" / "checkpoints" / "step_000012.rdkd";
  const auto e = run_captured({"evaluate", "--config", cfg.string(), "--student", student.string(),
                               "--name", "tiny", "--out", (dir_ / "eval").string()});
  ASSERT_EQ(e.code, 0) << e.err;
  const auto report = RobustnessReport::load(dir_ / "eval" / "report.json");
  EXPECT_EQ(report.model, "tiny");
  EXPECT_TRUE(report.scenarios.at("n").count("se"));
  EXPECT_TRUE(fs::exists(dir_ / "eval" / "probe_kws.json"));
  EXPECT_TRUE(fs::exists(dir_ / "eval" / "disentanglement.json"));

  const auto again = run_captured({"evaluate", "--config", cfg.string(), "--student", student.string(),
                                   "--name", "tiny", "--out", (dir_ / "eval2").string()});
  ASSERT_EQ(again.code, 0);
  EXPECT_EQ(slurp(dir_ / "eval2" / "report.json"), slurp(dir_ / "eval" / "report.json"));

  const auto p = run_captured({"probe", "--config", config_.string(), "--student",
                               (dir_ / "a" / "student.rdkd").string(), "--task", "sid", "--out",
                               (dir_ / "probe").string()});
  ASSERT_EQ(p.code, 0) << p.err;
  const json pr = json::parse(slurp(dir_ / "probe" / "probe_result.json"));
  EXPECT_GE(pr["test_accuracy"].get<double>(), 0.0);
  EXPECT_LE(pr["test_accuracy"].get<double>(), 1.0);

  const auto rep = run_captured({"report", "--input", (dir_ / "eval" / "report.json").string(),
                                 "--train-log", (dir_ / "a" / "train_log.jsonl").string(),
                                 "--disentanglement", (dir_ / "eval" / "disentanglement.json").string(),
                                 "--out", (dir_ / "plots").string()});
  ASSERT_EQ(rep.code, 0) << rep.err;
  EXPECT_EQ(slurp(dir_ / "plots" / "report.csv"), slurp(dir_ / "eval" / "report.csv"));
  for (const char* f : {"kws_accuracy.svg", "asv_eer.svg", "se_si_sdr_improvement.svg",
                        "noise_type_kws.svg", "room_class_kws.svg", "training_loss.svg", "pca_tiny_n0.svg"}) {
    EXPECT_TRUE(fs::exists(dir_ / "plots" / f)) << f;
  }
}

TEST_F(CliPipeline, CorruptCheckpointIsADataError) {
  const fs::path bad = dir_ / "bad.rdkd";
  std::string bytes = slurp(dir_ / "a" / "student.rdkd");
  bytes[bytes.size() / 2] ^= 0x5a;
  write_text_atomic(bad, bytes);
  const auto r = run_captured({"probe", "--config", config_.string(), "--student", bad.string(), "--out",
                               (dir_ / "badprobe").string()});
  EXPECT_EQ(r.code, 3);
  const auto missing = run_captured({"evaluate", "--config", config_.string(), "--student",
                                     (dir_ / "absent.rdkd").string(), "--out", (dir_ / "x").string()});
  EXPECT_EQ(missing.code, 3);
  EXPECT_NE(missing.err.find("absent.rdkd"), std::string::npos) << missing.err;
}

}  // namespace
}  // namespace qkd
