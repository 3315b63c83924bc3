#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "qkd/errors.hpp"
#include "qkd/models/checkpoint.hpp"
#include "qkd/models/enhancement.hpp"
#include "qkd/models/models.hpp"
#include "qkd/models/param_report.hpp"
#include "qkd/rng.hpp"
#include "qkd/signal/stft.hpp"
#include "qkd/tensor/ops.hpp"
#include "test_util.hpp"

namespace qkd {
namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed, "models-test");
  std::vector<double> x(n);
  for (auto& v : x) v = scale * rng.normal();
  return x;
}

EncoderConfig tiny_encoder(std::size_t layers) {
  EncoderConfig c;
  c.conv_stack = default_conv_stack(8);
  c.hidden_dim = 16;
  c.num_heads = 2;
  c.ffn_dim = 24;
  c.num_layers = layers;
  return c;
}

StudentConfig tiny_student(DistillMode mode = DistillMode::kLayerwise) {
  StudentConfig c;
  c.encoder = tiny_encoder(mode == DistillMode::kL2L ? 3 : 2);
  c.teacher_dim = 12;
  c.mode = mode;
  return c;
}

TEST(Encoder, OneSecondGivesFiftyFrames) {
  const Student s(StudentConfig{}, 1);
  const auto out = s.forward(noise(16000, 1));
  EXPECT_EQ(out.final_hidden.shape(), (Shape{50, 64}));
  ASSERT_EQ(out.predictions.size(), 3u);
  for (const auto& p : out.predictions) EXPECT_EQ(p.shape(), (Shape{50, 64}));
}

TEST(Encoder, FrameCountIsFloorOfSamplesOver320) {
  const Student s(tiny_student(), 1);
  for (std::size_t n : {400u, 639u, 640u, 961u, 3200u, 3519u}) {
    EXPECT_EQ(s.represent(noise(n, n)).dim(0), n / 320) << n;
  }
  EXPECT_THROW(s.represent(noise(399, 1)), ShapeError);
}

TEST(Encoder, ConfigValidation) {
  EncoderConfig c = tiny_encoder(1);
  c.num_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_encoder(1);
  c.conv_stack.pop_back();
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_encoder(1);
  c.conv_stack[0].width = 6;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Student, ZeroHeadsGiveZeroPredictions) {
  Student s(tiny_student(), 4);
  for (auto& h : s.heads()) {
    for (double& v : h.weight.mutable_values()) v = 0.0;
    for (double& v : h.bias.mutable_values()) v = 0.0;
  }
  const auto out = s.forward(noise(2000, 2));
  for (const auto& p : out.predictions) {
    for (double v : p.values()) EXPECT_EQ(v, 0.0);
  }
}

TEST(Student, ConvGradientMatchesFiniteDifferences) {
  const Student s(tiny_student(), 7);
  const auto x = noise(1600, 3);
  nn::ParamList conv;
  for (const auto& p : s.encoder_params()) {
    if (p.name.find(".conv") != std::string::npos) conv.push_back(p);
  }
  ASSERT_FALSE(conv.empty());
  std::vector<Tensor> inputs;
  for (const auto& p : conv) inputs.push_back(p.tensor);
  const auto f = [&](const std::vector<Tensor>&) {
    const auto out = s.forward(x);
    Tensor total = testing::project(out.predictions[0], 11);
    for (std::size_t k = 1; k < out.predictions.size(); ++k) {
      total = ops::add(total, testing::project(out.predictions[k], 11 + k));
    }
    return total;
  };
  EXPECT_LT(testing::gradient_error(f, inputs), 1e-4);
}

TEST(Student, L2LHeadsReadTheirOwnLayer) {
  Student s(tiny_student(DistillMode::kL2L), 9);
  const auto x = noise(1600, 5);
  const auto out = s.forward(x);
  ASSERT_EQ(out.predictions.size(), 3u);
  for (std::size_t k = 0; k < 3; ++k) {
    const Tensor expect = s.heads()[k].forward(out.hiddens[k]);
    for (std::size_t i = 0; i < expect.numel(); ++i) {
      EXPECT_DOUBLE_EQ(out.predictions[k][i], expect[i]);
    }
  }
  const Student layerwise(tiny_student(), 9);
  const auto lw = layerwise.forward(x);
  ASSERT_EQ(lw.predictions.size(), out.predictions.size());
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(lw.predictions[k].shape(), out.predictions[k].shape());
}

TEST(Student, L2LDepthMustMatchLayerSet) {
  StudentConfig c = tiny_student(DistillMode::kL2L);
  c.encoder.num_layers = 2;
  EXPECT_THROW(Student(c, 0), ConfigError);
  c = tiny_student();
  c.target_layers = {4, 2};
  EXPECT_THROW(c.validate(), ConfigError);
  c.target_layers = {};
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Teacher, FrozenTeacherIsDeterministicAndUnrecorded) {
  Teacher t(tiny_encoder(3), 2);
  EXPECT_THROW(t.features(noise(800, 1)), StateError);
  t.freeze();
  const auto x = noise(3200, 8);
  Graph g;
  const auto a = t.features(x);
  const auto b = t.features(x);
  EXPECT_TRUE(g.nodes().empty());
  ASSERT_EQ(a.size(), 3u);
  for (std::size_t l = 0; l < a.size(); ++l) {
    EXPECT_FALSE(a[l].requires_grad());
    EXPECT_EQ(std::vector<double>(a[l].values().begin(), a[l].values().end()),
              std::vector<double>(b[l].values().begin(), b[l].values().end()));
  }
  EXPECT_EQ(t.hash(), t.hash());
}

TEST(Teacher, FramesMatchStudentAcrossDurations) {
  Teacher t(tiny_encoder(2), 2);
  t.freeze();
  const Student s(tiny_student(), 3);
  for (double d = 0.2; d <= 3.0; d += 0.35) {
    const auto n = static_cast<std::size_t>(d * 16000) + 17;
    const auto x = noise(n, n);
    EXPECT_EQ(t.features(x).back().dim(0), s.represent(x).dim(0)) << n;
  }
}

TEST(Teacher, GradientsStayAbsentThroughDistillationGraph) {
  Teacher t(tiny_encoder(2), 2);
  t.freeze();
  const Student s(tiny_student(), 3);
  const auto x = noise(1600, 4);
  Graph g;
  const auto target = t.features(x).back();
  const auto out = s.forward(x);
  g.backward(ops::sum(ops::square(ops::sub(ops::slice(out.predictions[0], 1, 0, 12),
                                           ops::slice(target, 1, 0, 12)))));
  for (const auto& p : t.params()) EXPECT_FALSE(p.tensor.has_grad()) << p.name;
  bool any = false;
  for (const auto& p : s.encoder_params()) any = any || p.tensor.has_grad();
  EXPECT_TRUE(any);
}

// --------------------------------------------------------------------------
// Enhancement heads

double rel_error(std::span<const double> a, std::span<const double> b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

TEST(MaskHead, UnitMaskReproducesStftRoundTrip) {
  const auto x = noise(8000, 5);
  const auto cfg = mask_stft_config();
  const auto reference = istft(stft(x, cfg), x.size());
  const Tensor ones = Tensor::full({25, cfg.bins()}, 1.0);
  const Tensor y = MaskHead::apply_mask(ones, x);
  ASSERT_EQ(y.numel(), x.size());
  EXPECT_LT(rel_error(y.values(), reference), 1e-6);
}

TEST(MaskHead, HalfMaskHalvesTheMagnitude) {
  const auto x = noise(8000, 6);
  const auto bins = mask_stft_config().bins();
  const Tensor full = MaskHead::apply_mask(Tensor::full({24, bins}, 1.0), x);
  const Tensor half = MaskHead::apply_mask(Tensor::full({24, bins}, 0.5), x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(half[i], 0.5 * full[i], 1e-12);
  const auto a = stft(std::vector<double>(full.values().begin(), full.values().end()), mask_stft_config());
  const auto b = stft(std::vector<double>(half.values().begin(), half.values().end()), mask_stft_config());
  for (std::size_t i = 0; i < a.magnitude.size(); ++i) {
    EXPECT_NEAR(b.magnitude[i], 0.5 * a.magnitude[i], 1e-9);
  }
}

TEST(MaskHead, FrameMisalignmentBeyondOneIsShapeError) {
  const auto x = noise(8000, 7);  // 24 STFT frames
  const auto bins = mask_stft_config().bins();
  EXPECT_NO_THROW(MaskHead::apply_mask(Tensor::full({25, bins}, 1.0), x));
  EXPECT_NO_THROW(MaskHead::apply_mask(Tensor::full({23, bins}, 1.0), x));
  EXPECT_THROW(MaskHead::apply_mask(Tensor::full({26, bins}, 1.0), x), ShapeError);
  EXPECT_THROW(MaskHead::apply_mask(Tensor::full({22, bins}, 1.0), x), ShapeError);
}

TEST(MaskHead, OutputsStrictlyInsideUnitInterval) {
  const MaskHead head(16, {}, 3);
  const Student s(tiny_student(), 1);
  const Tensor h = s.represent(noise(4800, 9));
  const Tensor m = head.mask(ops::scale(h, 5.0));
  EXPECT_EQ(m.shape(), (Shape{15, 257}));
  for (double v : m.values()) {
    EXPECT_GT(v, 0.0);
    EXPECT_LT(v, 1.0);
  }
  const Tensor y = head.enhance(h, noise(4800, 9));
  EXPECT_EQ(y.numel(), 4800u);
}

TEST(WaveformHead, ZeroFinalStageGivesZeros) {
  WaveformHead head(16, {}, 4);
  auto& last = head.stages().back();
  for (double& v : last.weight.mutable_values()) v = 0.0;
  for (double& v : last.bias.mutable_values()) v = 0.0;
  const Tensor h = testing::random_tensor({7, 16}, 2, false);
  const Tensor y = head.reconstruct(h, 7 * 320 + 100);
  ASSERT_EQ(y.numel(), 7u * 320 + 100);
  for (double v : y.values()) EXPECT_EQ(v, 0.0);
}

TEST(WaveformHead, LengthContractOverRandomLengths) {
  const WaveformHead head(16, {}, 5);
  const Student s(tiny_student(), 6);
  Rng rng(12, "lengths");
  for (int trial = 0; trial < 12; ++trial) {
    const auto n = static_cast<std::size_t>(400 + rng.below(48000 - 400 + 1));
    const auto x = noise(n, 100 + trial);
    const Tensor y = head.reconstruct(s.represent(x), n);
    EXPECT_EQ(y.numel(), n);
  }
  const auto x = noise(48000, 1);
  EXPECT_EQ(head.reconstruct(s.represent(x), 48000).numel(), 48000u);
  EXPECT_THROW(head.reconstruct(s.represent(x), 48000 + 320), ShapeError);
}

TEST(WaveformHead, GradientMatchesFiniteDifferences) {
  WaveformHeadConfig cfg;
  cfg.lstm_hidden = 3;
  cfg.channels = {3, 3, 2, 2, 2, 2, 1};
  const WaveformHead head(4, cfg, 8);
  nn::ParamList params;
  head.collect(params);
  std::vector<Tensor> inputs{testing::random_tensor({2, 4}, 9)};
  for (const auto& p : params) inputs.push_back(p.tensor);
  const auto f = [&](const std::vector<Tensor>& in) {
    return testing::project(head.reconstruct(in[0], 700), 3);
  };
  EXPECT_LT(testing::gradient_error(f, inputs), 1e-5);
}

// --------------------------------------------------------------------------
// Parameter counts

TEST(ParamCount, AffineFourToThree) {
  const nn::Linear lin(4, 3, 0, "probe");
  nn::ParamList p;
  lin.collect(p);
  const auto report = param_count({{"probe", p}});
  EXPECT_EQ(report.trainable, 15u);
  EXPECT_EQ(report.frozen, 0u);
}

TEST(ParamCount, FrozenTeacherCountedAsFrozen) {
  Teacher t(tiny_encoder(2), 1);
  t.freeze();
  const Student s(tiny_student(), 2);
  const auto report = param_count({{"teacher", t.params()}, {"student", s.params()}});
  EXPECT_EQ(report.frozen, nn::count_scalars(t.params()));
  EXPECT_EQ(report.trainable, nn::count_scalars(s.params()));
  EXPECT_FALSE(report.groups[0].trainable);
}

// Hand-summed table for the default desk configuration.
std::size_t desk_encoder_scalars(std::size_t layers) {
  const std::size_t c = 64, d = 64, ffn = 128, frames = 160;
  std::size_t conv = (c * 1 * 9 + c) + 2 * (c * c * 8 + c) + 2 * (c * c * 4 + c) + 2 * c;
  std::size_t proj = d * c + d + frames * d;
  std::size_t layer = 4 * (d * d + d) + 2 * (2 * d) + (d * ffn + ffn) + (ffn * d + d);
  return conv + proj + layers * layer;
}

TEST(ParamCount, DeskConfigMatchesHandTable) {
  Teacher t(default_teacher_config(), 1);
  const Student s(StudentConfig{}, 1);
  EXPECT_EQ(nn::count_scalars(t.params()), desk_encoder_scalars(6));
  EXPECT_EQ(nn::count_scalars(s.encoder_params()), desk_encoder_scalars(2));
  EXPECT_EQ(nn::count_scalars(s.head_params()), 3u * (64 * 64 + 64));
  const auto report = param_count(s.encoder().groups());
  EXPECT_EQ(report.groups.size(), 4u);
  EXPECT_EQ(report.trainable, desk_encoder_scalars(2));
  // Mask head: 3 BiLSTM layers of hidden 32 plus the 64 -> 257 projection.
  const MaskHead mask(64, {}, 1);
  nn::ParamList mp;
  mask.collect(mp);
  const std::size_t h = 32;
  const std::size_t lstm = 2 * ((64 * 4 * h + h * 4 * h + 4 * h) + 2 * (2 * h * 4 * h + h * 4 * h + 4 * h));
  EXPECT_EQ(nn::count_scalars(mp), lstm + 64 * 257 + 257);
}

// --------------------------------------------------------------------------
// Checkpoints

TEST(Checkpoint, RoundTripAtBothPrecisions) {
  const Student s(tiny_student(), 3);
  const auto path = std::filesystem::temp_directory_path() / "qkd_models_test.rdkd";
  write_checkpoint(path, to_records(s.params(), DType::kF64));
  Student other(tiny_student(), 99);
  load_params(other.params(), read_checkpoint(path));
  EXPECT_EQ(params_hash(other.params()), params_hash(s.params()));

  write_checkpoint(path, to_records(s.encoder_params(), DType::kF32));
  Student third(tiny_student(), 98);
  load_params(third.encoder_params(), read_checkpoint(path));
  const auto a = s.encoder_params(), b = third.encoder_params();
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].tensor.numel(); ++j) {
      EXPECT_EQ(b[i].tensor[j], static_cast<double>(static_cast<float>(a[i].tensor[j])));
    }
  }
  EXPECT_THROW(load_params(third.params(), read_checkpoint(path)), FormatError);
}

TEST(Checkpoint, LayoutAndCorruption) {
  const std::vector<CheckpointRecord> recs{{"w", DType::kF32, {2, 1}, {1.5, -2.0}}};
  const auto bytes = encode_checkpoint(recs);
  // magic 4 + version 2 + name len 2 + name 1 + dtype 1 + rank 1 + dims 8 + payload 8 + crc 4
  EXPECT_EQ(bytes.size(), 31u);
  EXPECT_EQ(bytes.substr(0, 4), "RDKD");
  EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1u);
  const auto back = decode_checkpoint(bytes);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].shape, (Shape{2, 1}));
  EXPECT_EQ(back[0].values, (std::vector<double>{1.5, -2.0}));
  auto corrupt = bytes;
  corrupt[20] ^= 0x10;
  EXPECT_THROW(decode_checkpoint(corrupt), FormatError);
  EXPECT_THROW(decode_checkpoint(bytes.substr(0, 20)), FormatError);
  auto magic = bytes;
  magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(magic), FormatError);
}

}  // namespace
}  // namespace qkd
