#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "qkd/errors.hpp"
#include "qkd/rng.hpp"
#include "qkd/signal/audio.hpp"
#include "qkd/signal/contaminate.hpp"
#include "qkd/signal/manifest.hpp"
#include "qkd/signal/metrics.hpp"
#include "qkd/signal/rir.hpp"
#include "qkd/signal/stft.hpp"
#include "qkd/signal/synth.hpp"
#include "qkd/tensor/ops.hpp"
#include "test_util.hpp"

namespace qkd {
namespace {

namespace fs = std::filesystem;
constexpr double kPi = std::numbers::pi;

fs::path temp_path(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "qkd_signal_test";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<double> sine(double freq, std::size_t n, double amp = 0.5, int sr = 16000) {
  std::vector<double> x(n);
  for (std::size_t i = 0; i < n; ++i) x[i] = amp * std::sin(2 * kPi * freq * i / sr);
  return x;
}

std::vector<double> gaussian(std::size_t n, std::uint64_t seed, double scale = 0.3) {
  Rng rng(seed, "test");
  std::vector<double> x(n);
  for (auto& v : x) v = scale * rng.normal();
  return x;
}

// --------------------------------------------------------------------------
// WAV

void put_le(std::string& s, std::uint32_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

std::string wav_bytes(int format, int channels, int sr, int bits,
                      std::uint32_t declared_data, std::size_t actual_data) {
  std::string s = "RIFF";
  put_le(s, 36 + declared_data, 4);
  s += "WAVEfmt ";
  put_le(s, 16, 4);
  put_le(s, format, 2);
  put_le(s, channels, 2);
  put_le(s, sr, 4);
  put_le(s, sr * channels * bits / 8, 4);
  put_le(s, channels * bits / 8, 2);
  put_le(s, bits, 2);
  s += "data";
  put_le(s, declared_data, 4);
  s.append(actual_data, '\0');
  return s;
}

void write_raw(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

TEST(Wav, SineRoundTripWithinQuantization) {
  const AudioClip clip(sine(440.0, 16000), 16000);
  const auto p = temp_path("sine.wav");
  write_wav(p, clip);
  const AudioClip back = read_wav(p);
  ASSERT_EQ(back.size(), clip.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < clip.size(); ++i) {
    worst = std::max(worst, std::fabs(back.samples()[i] - clip.samples()[i]));
  }
  EXPECT_LE(worst, std::ldexp(1.0, -15));
}

TEST(Wav, HeaderSampleRatePassesThrough) {
  const auto p = temp_path("sr8k.wav");
  write_raw(p, wav_bytes(1, 1, 8000, 16, 8, 8));
  EXPECT_EQ(read_wav(p).sample_rate(), 8000);
}

TEST(Wav, MalformedFilesAreFormatErrors) {
  const auto p = temp_path("bad.wav");
  write_raw(p, wav_bytes(1, 1, 16000, 16, 0, 0));
  EXPECT_THROW(read_wav(p), FormatError);
  write_raw(p, wav_bytes(3, 1, 16000, 32, 8, 8));
  EXPECT_THROW(read_wav(p), FormatError);
  write_raw(p, wav_bytes(1, 2, 16000, 16, 8, 8));
  EXPECT_THROW(read_wav(p), FormatError);
  write_raw(p, wav_bytes(1, 1, 16000, 16, 400, 10));
  EXPECT_THROW(read_wav(p), FormatError);
  write_raw(p, "not audio at all");
  EXPECT_THROW(read_wav(p), FormatError);
}

TEST(AudioClipInvariants, RejectsEmptyAndNonFinite) {
  EXPECT_THROW(AudioClip(std::vector<double>{}), DataError);
  EXPECT_THROW(AudioClip({0.0, std::nan("")}), DataError);
  EXPECT_THROW(AudioClip({0.0}, 0), DataError);
}

// --------------------------------------------------------------------------
// Synthetic speech

// Welch periodogram with 2048-point Hann segments; returns the bin with the
// largest average power (excluding DC).
std::size_t dominant_bin(std::span<const double> x, std::size_t n = 2048) {
  std::vector<double> power(n / 2 + 1, 0.0);
  for (std::size_t start = 0; start + n <= x.size(); start += n / 2) {
    for (std::size_t k = 1; k <= n / 2; ++k) {
      std::complex<double> acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double w = 0.5 - 0.5 * std::cos(2 * kPi * i / n);
        acc += w * x[start + i] * std::polar(1.0, -2 * kPi * double(k) * i / n);
      }
      power[k] += std::norm(acc);
    }
  }
  return static_cast<std::size_t>(std::max_element(power.begin() + 1, power.end()) -
                                  power.begin());
}

TEST(Synth, DeterministicForSameSeed) {
  SpeechSpec spec;
  spec.voice = make_speaker(3, 11);
  spec.keyword = 2;
  const auto a = synth_speech(spec, 99);
  const auto b = synth_speech(spec, 99);
  ASSERT_EQ(a.clip.size(), b.clip.size());
  EXPECT_EQ(0, std::memcmp(a.clip.samples().data(), b.clip.samples().data(),
                           a.clip.size() * sizeof(double)));
  EXPECT_EQ(a.frame_labels, b.frame_labels);
  const auto c = synth_speech(spec, 100);
  EXPECT_NE(std::vector<double>(a.clip.samples().begin(), a.clip.samples().end()),
            std::vector<double>(c.clip.samples().begin(), c.clip.samples().end()));
}

TEST(Synth, DominantPeakAtSpeakerF0) {
  for (double f0 : {100.0, 200.0}) {
    SpeechSpec spec;
    spec.voice.f0_hz = f0;
    spec.keyword = 0;
    spec.duration_s = 1.0;
    const auto out = synth_speech(spec, 5);
    const double bin_hz = 16000.0 / 2048.0;
    const auto expected = static_cast<long>(std::lround(f0 / bin_hz));
    const auto got = static_cast<long>(dominant_bin(out.clip.samples()));
    EXPECT_LE(std::labs(got - expected), 1) << "f0 " << f0 << " peak bin " << got;
  }
}

TEST(Synth, OneSecondGivesFiftyFrames) {
  SpeechSpec spec;
  spec.duration_s = 1.0;
  const auto out = synth_speech(spec, 1);
  EXPECT_EQ(out.clip.size(), 16000u);
  EXPECT_EQ(out.frame_labels.size(), 50u);
  EXPECT_NEAR(peak_abs(out.clip.samples()), 0.5, 1e-12);
}

TEST(Synth, LabelsFollowKeywordPhones) {
  SpeechSpec spec;
  spec.keyword = 4;
  const auto out = synth_speech(spec, 2);
  std::vector<int> seen;
  for (int l : out.frame_labels) {
    if (l != 0 && (seen.empty() || seen.back() != l)) seen.push_back(l);
  }
  const auto phones = keyword_phones(4);
  EXPECT_EQ(seen, std::vector<int>(phones.begin(), phones.end()));
  EXPECT_EQ(out.frame_labels.front(), 0);
  EXPECT_EQ(out.frame_labels.back(), 0);
}

TEST(Synth, InvalidSpecIsConfigError) {
  SpeechSpec spec;
  spec.voice.f0_hz = 60.0;
  EXPECT_THROW(synth_speech(spec, 0), ConfigError);
  spec.voice.f0_hz = 320.0;
  EXPECT_THROW(synth_speech(spec, 0), ConfigError);
  spec.voice.f0_hz = 150.0;
  spec.duration_s = 0.1;
  EXPECT_THROW(synth_speech(spec, 0), ConfigError);
  spec.duration_s = 1.0;
  spec.keyword = kKeywordCount;
  EXPECT_THROW(synth_speech(spec, 0), ConfigError);
}

TEST(Synth, ShortestDurationStillLabelled) {
  SpeechSpec spec;
  spec.duration_s = 0.2;
  const auto out = synth_speech(spec, 8);
  EXPECT_EQ(out.frame_labels.size(), 10u);
}

TEST(Synth, NoiseFamiliesDeterministicAndNormalised) {
  for (auto fam : kNoiseFamilies) {
    const auto a = synth_noise(fam, 8000, 4);
    const auto b = synth_noise(fam, 8000, 4);
    EXPECT_EQ(std::vector<double>(a.samples().begin(), a.samples().end()),
              std::vector<double>(b.samples().begin(), b.samples().end()));
    EXPECT_NEAR(peak_abs(a.samples()), 0.5, 1e-12);
    EXPECT_EQ(parse_noise_family(noise_family_name(fam)), fam);
  }
  EXPECT_THROW(parse_noise_family("underwater"), ConfigError);
}

// --------------------------------------------------------------------------
// Room impulse responses

TEST(Rir, EnvelopeIsMinusSixtyDbAtRt60) {
  for (double rt60 : {0.1, 0.5, 1.5}) {
    EXPECT_NEAR(20 * std::log10(rir_envelope(rt60, rt60) / rir_envelope(0.0, rt60)),
                -60.0, 1e-9);
  }
  // Empirical: tail energy near rt60 is ~60 dB below the early tail.
  const Rir rir = synth_rir(1.0, 3);
  auto energy = [&](std::size_t from) {
    double e = 0.0;
    for (std::size_t i = from; i < from + 800; ++i) e += rir.taps[i] * rir.taps[i];
    return e;
  };
  // Windows [0, 50 ms) and [950, 1000) ms differ by 0.95 * 60 dB.
  EXPECT_NEAR(10 * std::log10(energy(15200) / energy(1)), -57.0, 1.5);
}

TEST(Rir, RoomClassThresholds) {
  EXPECT_EQ(synth_rir(0.15, 0).room_class, RoomClass::kSmall);
  EXPECT_EQ(synth_rir(0.5, 0).room_class, RoomClass::kMedium);
  EXPECT_EQ(synth_rir(1.0, 0).room_class, RoomClass::kLarge);
  EXPECT_EQ(room_class_for(0.2999), RoomClass::kSmall);
  EXPECT_EQ(room_class_for(0.7), RoomClass::kMedium);
  EXPECT_EQ(room_class_for(0.7001), RoomClass::kLarge);
}

TEST(Rir, DeterministicWithDirectPathFirst) {
  const Rir a = synth_rir(0.6, 21), b = synth_rir(0.6, 21);
  EXPECT_EQ(a.taps, b.taps);
  EXPECT_EQ(a.id, b.id);
  EXPECT_EQ(direct_path_index(a), 0u);
  EXPECT_DOUBLE_EQ(a.taps[0], 1.0);
  EXPECT_EQ(a.taps.size(), 9601u);
  EXPECT_THROW(synth_rir(0.01, 0), ConfigError);
  EXPECT_THROW(synth_rir(2.5, 0), ConfigError);
}

Rir kernel(std::vector<double> taps) {
  Rir r;
  r.id = "test";
  r.taps = std::move(taps);
  return r;
}

TEST(ApplyRir, UnitImpulseAndScalingKernels) {
  const AudioClip x(gaussian(500, 1));
  const auto same = apply_rir(x, kernel({1.0}));
  const auto half = apply_rir(x, kernel({0.5}));
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(same.samples()[i], x.samples()[i], 1e-12);
    EXPECT_NEAR(half.samples()[i], 0.5 * x.samples()[i], 1e-12);
  }
}

TEST(ApplyRir, AlignsOnDirectPath) {
  // Direct path at tap 3: output k should see input k at unit gain.
  std::vector<double> x(64, 0.0);
  x[10] = 1.0;
  const auto y = convolve_rir(x, kernel({0.1, 0.0, 0.2, 1.0, 0.3}));
  EXPECT_NEAR(y[10], 1.0, 1e-12);
  EXPECT_NEAR(y[11], 0.3, 1e-12);
  EXPECT_NEAR(y[7], 0.1, 1e-12);
}

TEST(ApplyRir, LongerRoomsCarryMoreEnergy) {
  SpeechSpec spec;
  const auto dry = synth_speech(spec, 4).clip;
  const auto wet_long = apply_rir(dry, synth_rir(1.0, 7));
  const auto wet_short = apply_rir(dry, synth_rir(0.1, 7));
  EXPECT_GT(mean_square(wet_long.samples()), mean_square(wet_short.samples()));
}

TEST(ApplyRir, ConvolutionIsLinear) {
  const Rir rir = synth_rir(0.4, 12);
  const auto x = gaussian(3000, 2), y = gaussian(3000, 3);
  const double a = 0.7, b = -1.3;
  std::vector<double> mix(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) mix[i] = a * x[i] + b * y[i];
  const auto lhs = convolve_rir(mix, rir);
  const auto rx = convolve_rir(x, rir), ry = convolve_rir(y, rir);
  for (std::size_t i = 0; i < x.size(); ++i) {
    EXPECT_NEAR(lhs[i], a * rx[i] + b * ry[i], 1e-10);
  }
}

TEST(ApplyRir, SampleRateMismatch) {
  const AudioClip x(gaussian(100, 1), 8000);
  EXPECT_THROW(apply_rir(x, kernel({1.0})), FormatError);
}

// --------------------------------------------------------------------------
// Mixing

TEST(Mix, HandComputedZeroDb) {
  const auto r = mix_at_snr(AudioClip({1, 1, 1, 1}), AudioClip({1, -1, 1, -1}), 0.0);
  EXPECT_DOUBLE_EQ(r.alpha, 1.0);
  // Peak 2 exceeds 1, so the recorded renormalisation undoes to [2,0,2,0].
  EXPECT_DOUBLE_EQ(r.renorm_scale, 0.5);
  const std::vector<double> expect{2, 0, 2, 0};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(r.clip.samples()[i] / r.renorm_scale, expect[i]);
  }
}

TEST(Mix, MeasuredSnrMatchesTarget) {
  Rng rng(77, "snr");
  for (int t = 0; t < 50; ++t) {
    const auto s = gaussian(1000 + t * 13, 100 + t, 0.1);
    const auto n = gaussian(700 + t * 7, 200 + t, 0.2);
    const double snr = rng.uniform(-5.0, 20.0);
    const auto r = mix_at_snr(AudioClip(s), AudioClip(n), snr);
    std::vector<double> scaled(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) scaled[i] = r.alpha * n[i % n.size()];
    const double measured = 10 * std::log10(mean_square(s) / mean_square(scaled));
    EXPECT_NEAR(measured, snr, 1e-9);
  }
}

TEST(Mix, SixtyDbIsNearlyClean) {
  // Random-sign noise has peak == rms, so |alpha * noise| <= 1e-3 rms(speech).
  const auto s = gaussian(4000, 5, 0.1);
  Rng rng(6, "signs");
  std::vector<double> n(4000);
  for (auto& v : n) v = rng.uniform() < 0.5 ? -0.2 : 0.2;
  const auto r = mix_at_snr(AudioClip(s), AudioClip(n), 60.0);
  const double bound = 1e-3 * std::sqrt(mean_square(s));
  for (std::size_t i = 0; i < s.size(); ++i) {
    EXPECT_LE(std::fabs(r.clip.samples()[i] - s[i]), bound * (1 + 1e-9));
  }
}

TEST(Mix, Errors) {
  EXPECT_THROW(mix_at_snr(AudioClip({1, 1}), AudioClip({0, 0}), 0.0), MetricError);
  EXPECT_THROW(mix_at_snr(AudioClip({0, 0}), AudioClip({1, 1}), 0.0), MetricError);
  EXPECT_THROW(mix_at_snr(AudioClip({1, 1}, 16000), AudioClip({1, 1}, 8000), 0.0), FormatError);
  EXPECT_THROW(mix_at_snr(AudioClip({1, 1}), AudioClip({1, 1}), INFINITY), ConfigError);
}

// --------------------------------------------------------------------------
// Contamination

ContaminationSpec small_spec() {
  ContaminationSpec spec;
  spec.noise_pool.push_back({"indoor-0", NoiseFamily::kIndoor, synth_noise(NoiseFamily::kIndoor, 6000, 1)});
  spec.noise_pool.push_back({"outdoor-0", NoiseFamily::kOutdoor, synth_noise(NoiseFamily::kOutdoor, 6000, 2)});
  spec.rir_pool.push_back(synth_rir(0.2, 1));
  spec.rir_pool.push_back(synth_rir(0.9, 2));
  return spec;
}

TEST(Contaminate, ActionsAreUniform) {
  const auto spec = small_spec();
  std::array<int, 4> counts{};
  const int draws = 100000;
  for (int i = 0; i < draws; ++i) {
    const auto plan = plan_contamination(spec, 4000, item_seed(9, 0, i));
    ++counts[static_cast<std::size_t>(plan.action)];
    if (plan.snr_db) {
      ASSERT_GE(*plan.snr_db, 0.0);
      ASSERT_LE(*plan.snr_db, 20.0);
    }
  }
  for (int c : counts) {
    const double freq = static_cast<double>(c) / draws;
    EXPECT_GE(freq, 0.24);
    EXPECT_LE(freq, 0.26);
  }
}

TEST(Contaminate, ReplayIsBitIdentical) {
  const auto spec = small_spec();
  SpeechSpec sp;
  sp.duration_s = 0.3;
  const auto clip = synth_speech(sp, 3).clip;
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    const auto a = contaminate(clip, spec, seed);
    const auto b = contaminate(clip, spec, seed);
    EXPECT_EQ(a.action, b.action);
    EXPECT_EQ(0, std::memcmp(a.clip.samples().data(), b.clip.samples().data(),
                             a.clip.size() * sizeof(double)));
    EXPECT_EQ(sidecar_json(a, "x.wav"), sidecar_json(b, "x.wav"));
    EXPECT_EQ(a.snr_db.has_value(), has_noise(a.action));
    EXPECT_EQ(a.rir_id.has_value(), has_reverb(a.action));
  }
}

TEST(Contaminate, NoneLeavesClipUntouched) {
  auto spec = small_spec();
  spec.fixed_action = Action::kNone;
  const AudioClip clip(gaussian(2000, 4, 0.1));
  const auto v = contaminate(clip, spec, 5);
  EXPECT_EQ(v.action, Action::kNone);
  EXPECT_FALSE(v.snr_db.has_value());
  EXPECT_FALSE(v.rir_id.has_value());
  EXPECT_EQ(std::vector<double>(v.clip.samples().begin(), v.clip.samples().end()),
            std::vector<double>(clip.samples().begin(), clip.samples().end()));
}

TEST(Contaminate, NoiseReverbMixesAgainstReverberantSpeech) {
  auto spec = small_spec();
  spec.fixed_action = Action::kNoiseReverb;
  const AudioClip clip(gaussian(3000, 8, 0.05));
  const auto plan = plan_contamination(spec, clip.size(), 31);
  const auto view = realize(clip, spec, plan, 31);
  const auto wet = apply_rir(clip, spec.rir_pool[*plan.rir_index]);
  const auto& noise = spec.noise_pool[*plan.noise_index].clip.samples();
  std::vector<double> seg(clip.size());
  for (std::size_t i = 0; i < seg.size(); ++i) seg[i] = noise[(plan.noise_offset + i) % noise.size()];
  const auto mixed = mix_at_snr(wet, AudioClip(seg), *plan.snr_db);
  for (std::size_t i = 0; i < clip.size(); ++i) {
    EXPECT_DOUBLE_EQ(view.clip.samples()[i], mixed.clip.samples()[i]);
  }
}

TEST(Contaminate, EmptyPoolsAreConfigErrors) {
  ContaminationSpec spec;
  EXPECT_THROW(plan_contamination(spec, 100, 0), ConfigError);
  spec.fixed_action = Action::kNone;
  EXPECT_NO_THROW(plan_contamination(spec, 100, 0));
  spec = small_spec();
  spec.snr_range = {10.0, 5.0};
  EXPECT_THROW(plan_contamination(spec, 100, 0), ConfigError);
}

TEST(Contaminate, SidecarFields) {
  auto spec = small_spec();
  spec.fixed_action = Action::kNoise;
  const auto v = contaminate(AudioClip(gaussian(2000, 4, 0.1)), spec, 17);
  const auto j = sidecar_json(v, "clean/a.wav");
  for (const char* key : {"\"source\":\"clean/a.wav\"", "\"action\":\"noise\"",
                          "\"snr_db\":", "\"rir_id\":null", "\"rt60_s\":null",
                          "\"seed\":17", "\"renorm_scale\":"}) {
    EXPECT_NE(j.find(key), std::string::npos) << key << " in " << j;
  }
  EXPECT_EQ(parse_action("n+r"), Action::kNoiseReverb);
  EXPECT_EQ(parse_action("reverb"), Action::kReverb);
  EXPECT_THROW(parse_action("loud"), ConfigError);
}

// --------------------------------------------------------------------------
// STFT

double interior_rel_error(const std::vector<double>& x, const std::vector<double>& y,
                          std::size_t margin) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = margin; i + margin < x.size(); ++i) {
    num += (x[i] - y[i]) * (x[i] - y[i]);
    den += x[i] * x[i];
  }
  return std::sqrt(num / den);
}

TEST(Stft, RoundTripOnRandomClip) {
  const auto x = gaussian(16000, 12);
  std::vector<StftConfig> configs{StftConfig{}};
  for (const auto& c : mr_stft_resolutions()) configs.push_back(c);
  for (const auto& cfg : configs) {
    const auto spec = stft(x, cfg);
    const auto y = istft(spec, x.size());
    EXPECT_LT(interior_rel_error(x, y, cfg.window_length), 1e-6)
        << "fft " << cfg.fft_size << " hop " << cfg.hop;
  }
}

TEST(Stft, PolarDecompositionMatchesDirectDft) {
  const auto x = gaussian(1200, 13);
  const StftConfig cfg;
  const auto s = stft(x, cfg);
  ASSERT_EQ(s.frames, (1200u - 400u) / 320u + 1);
  for (std::size_t k = 0; k < s.frames; ++k) {
    for (std::size_t f = 0; f < s.bins; f += 37) {
      std::complex<double> acc = 0.0;
      for (std::size_t j = 0; j < 400; ++j) {
        const double w = 0.5 - 0.5 * std::cos(2 * kPi * j / 400.0);
        acc += w * x[k * 320 + j] * std::polar(1.0, -2 * kPi * double(f * j) / 512.0);
      }
      const auto got = std::polar(s.mag(f, k), s.phase[f * s.frames + k]);
      EXPECT_NEAR(std::abs(got - acc), 0.0, 1e-9);
    }
  }
}

TEST(Stft, ToneRidgeAtExpectedBin) {
  const auto x = sine(1000.0, 16000);
  const auto s = stft(x, StftConfig{});
  const std::size_t expected = 1000 * 512 / 16000;
  for (std::size_t k = 0; k < s.frames; ++k) {
    std::size_t best = 0;
    for (std::size_t f = 1; f < s.bins; ++f) {
      if (s.mag(f, k) > s.mag(best, k)) best = f;
    }
    EXPECT_EQ(best, expected);
  }
}

TEST(Stft, ZeroClipGivesZeroMagnitude) {
  const auto s = stft(std::vector<double>(4000, 0.0), StftConfig{});
  for (double m : s.magnitude) EXPECT_EQ(m, 0.0);
}

TEST(Stft, ConfigErrors) {
  StftConfig c;
  c.hop = 500;
  EXPECT_THROW(stft(std::vector<double>(4000, 0.0), c), ConfigError);
  c = StftConfig{};
  c.fft_size = 500;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(stft(std::vector<double>(100, 0.0), StftConfig{}), ShapeError);
}

TEST(Stft, MagnitudeGradientMatchesFiniteDifferences) {
  const StftConfig cfg{64, 16, 48, true};
  const auto f = [&](const std::vector<Tensor>& in) {
    return testing::project(ops::stft_magnitude(in[0], cfg), 5);
  };
  EXPECT_LT(testing::gradient_error(f, {testing::random_tensor({150}, 3)}), 1e-6);
}

TEST(Stft, InverseGradientMatchesFiniteDifferences) {
  const StftConfig cfg{64, 16, 48, false};
  const auto x = gaussian(200, 4);
  const auto s = stft(x, cfg);
  std::vector<double> mag = s.magnitude;
  const Tensor m({s.bins, s.frames}, mag, true);
  const auto phase = s.phase;
  const auto f = [&](const std::vector<Tensor>& in) {
    return testing::project(ops::istft_from_magnitude(in[0], phase, cfg, 200), 6);
  };
  EXPECT_LT(testing::gradient_error(f, {m}), 1e-6);
}

// --------------------------------------------------------------------------
// SI-SDR

TEST(SiSdr, CapsAndInvariances) {
  const auto s = gaussian(800, 20);
  EXPECT_DOUBLE_EQ(si_sdr(s, s), 100.0);
  EXPECT_DOUBLE_EQ(si_sdr(std::vector<double>{0, 1}, std::vector<double>{1, 0}, false), -100.0);
  Rng rng(3, "si");
  for (int t = 0; t < 20; ++t) {
    const auto e = gaussian(500, 300 + t);
    const auto r = gaussian(500, 400 + t);
    std::vector<double> e2(e);
    for (double& v : e2) v *= 2.0;
    EXPECT_NEAR(si_sdr(e2, r), si_sdr(e, r), 1e-10);
    // Adding independent noise to a clean estimate lowers the score.
    std::vector<double> clean(r), noisy(r);
    const auto n = gaussian(500, 500 + t, 0.05);
    for (std::size_t i = 0; i < r.size(); ++i) {
      clean[i] += 0.5 * n[i];
      noisy[i] = clean[i] + n[(i * 7 + 3) % n.size()];
    }
    EXPECT_GT(si_sdr(clean, r), si_sdr(noisy, r));
  }
}

TEST(SiSdr, Errors) {
  EXPECT_THROW(si_sdr(std::vector<double>{1, 2}, std::vector<double>{0, 0}), MetricError);
  EXPECT_THROW(si_sdr(std::vector<double>{1, 2}, std::vector<double>{3, 3}), MetricError);
  EXPECT_THROW(si_sdr(std::vector<double>{1}, std::vector<double>{1, 2}), ShapeError);
}

// --------------------------------------------------------------------------
// Multi-resolution STFT loss

// Straight-line oracle: centred frames, periodic Hann, direct DFT sums.
double direct_mr_stft(const std::vector<double>& est, const std::vector<double>& ref) {
  const std::array<std::array<std::size_t, 3>, 3> res{{{512, 50, 240}, {1024, 120, 600}, {2048, 240, 1200}}};
  double total = 0.0;
  for (const auto& [nfft, hop, win] : res) {
    const std::size_t frames = (ref.size() + 2 * (win / 2) - win) / hop + 1;
    double diff2 = 0.0, ref2 = 0.0, logsum = 0.0;
    std::size_t count = 0;
    for (std::size_t k = 0; k < frames; ++k) {
      for (std::size_t f = 0; f <= nfft / 2; ++f) {
        std::complex<double> a = 0.0, b = 0.0;
        for (std::size_t j = 0; j < win; ++j) {
          const long pos = static_cast<long>(k * hop + j) - static_cast<long>(win / 2);
          if (pos < 0 || pos >= static_cast<long>(ref.size())) continue;
          const double w = 0.5 - 0.5 * std::cos(2 * kPi * j / win);
          const auto e = std::polar(1.0, -2 * kPi * double(f * j % nfft) / nfft);
          a += w * ref[pos] * e;
          b += w * est[pos] * e;
        }
        const double sa = std::abs(a), sb = std::abs(b);
        diff2 += (sa - sb) * (sa - sb);
        ref2 += sa * sa;
        logsum += std::fabs(std::log(std::max(sa, 1e-7)) - std::log(std::max(sb, 1e-7)));
        ++count;
      }
    }
    total += std::sqrt(diff2) / std::max(std::sqrt(ref2), 1e-7) + logsum / count;
  }
  return total;
}

TEST(MrStft, IdenticalSignalsGiveZero) {
  const auto x = gaussian(1000, 30);
  EXPECT_DOUBLE_EQ(mr_stft_loss(x, x), 0.0);
}

TEST(MrStft, NonNegative) {
  for (int t = 0; t < 5; ++t) {
    EXPECT_GE(mr_stft_loss(gaussian(700, 40 + t), gaussian(700, 50 + t)), 0.0);
  }
}

TEST(MrStft, HalfAmplitudeSineMatchesDirectOracle) {
  const auto ref = sine(440.0, 2000, 0.5);
  const auto est = sine(440.0, 2000, 0.25);
  const double oracle = direct_mr_stft(est, ref);
  EXPECT_NEAR(mr_stft_loss(est, ref), oracle, 1e-8 * oracle);
}

TEST(MrStft, GradientMatchesFiniteDifferences) {
  const auto f = [](const std::vector<Tensor>& in) { return mr_stft_loss(in[0], in[1]); };
  for (std::uint64_t seed : {1, 2}) {
    EXPECT_LT(testing::gradient_error(f, {testing::random_tensor({256}, seed, true, 0.3),
                                          testing::random_tensor({256}, seed + 10, true, 0.3)}),
              1e-4);
  }
}

TEST(MrStft, LengthMismatchIsShapeError) {
  EXPECT_THROW(mr_stft_loss(gaussian(300, 1), gaussian(301, 1)), ShapeError);
}

// --------------------------------------------------------------------------
// Manifest

TEST(Manifest, RoundTripAndErrors) {
  const auto p = temp_path("manifest.csv");
  const std::vector<ManifestRow> rows{{"a/0.wav", 3, 1, 1.0}, {"a/1.wav", 4, 5, 0.75}};
  write_manifest(p, rows);
  const auto back = read_manifest(p);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].path, "a/1.wav");
  EXPECT_EQ(back[1].speaker_id, 4);
  EXPECT_EQ(back[1].keyword_id, 5);
  EXPECT_DOUBLE_EQ(back[1].duration_s, 0.75);
  write_raw(p, "path,speaker_id,keyword_id,duration_s\nx.wav,1,two,1.0\n");
  EXPECT_THROW(read_manifest(p), FormatError);
  write_raw(p, "file,speaker\n");
  EXPECT_THROW(read_manifest(p), FormatError);

  const auto lp = temp_path("labels.csv");
  write_frame_labels(lp, {{"a/0.wav", {0, 1, 1, 6}}});
  EXPECT_EQ(read_frame_labels(lp).at("a/0.wav"), (std::vector<int>{0, 1, 1, 6}));
}

}  // namespace
}  // namespace qkd
