#include "qkd/signal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "qkd/errors.hpp"
#include "qkd/rng.hpp"
#include "qkd/signal/fft.hpp"

namespace qkd {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kPeak = 0.5;
constexpr std::size_t kBlock = 32;

enum Phone { kSil = 0, kA, kI, kU, kE, kO, kM, kS, kSh };

struct PhoneShape {
  std::array<double, 3> formants;  // Hz, before speaker scaling
  double voiced_gain;
  double hiss_gain;   // s band
  double hush_gain;   // sh band
};

constexpr std::array<PhoneShape, kPhoneClasses> kPhones{{
    {{500, 1500, 2500}, 0.0, 0.0, 0.0},   // silence
    {{730, 1090, 2440}, 1.0, 0.0, 0.0},   // a
    {{270, 2290, 3010}, 0.9, 0.0, 0.0},   // i
    {{300, 870, 2240}, 0.85, 0.0, 0.0},   // u
    {{530, 1840, 2480}, 0.95, 0.0, 0.0},  // e
    {{570, 840, 2410}, 0.95, 0.0, 0.0},   // o
    {{250, 1000, 2200}, 0.45, 0.0, 0.0},  // m
    {{500, 1500, 2500}, 0.0, 0.35, 0.0},  // s
    {{500, 1500, 2500}, 0.0, 0.0, 0.4},   // sh
}};

constexpr std::array<std::array<int, kPhonesPerKeyword>, kKeywordCount> kKeywords{{
    {kA, kM, kI, kS},
    {kO, kSh, kU, kE},
    {kI, kE, kM, kO},
    {kU, kS, kA, kSh},
    {kE, kA, kO, kI},
    {kSh, kU, kM, kA},
}};

// Per-keyword f0 multipliers and energies, one per phone.
constexpr std::array<std::array<double, kPhonesPerKeyword>, kKeywordCount> kPitch{{
    {1.02, 1.00, 0.99, 0.98},
    {0.98, 1.00, 1.02, 1.01},
    {1.00, 1.02, 0.99, 0.98},
    {1.01, 1.00, 0.98, 1.00},
    {0.99, 1.01, 1.02, 0.98},
    {1.00, 0.98, 1.00, 1.02},
}};
constexpr std::array<std::array<double, kPhonesPerKeyword>, kKeywordCount> kEnergy{{
    {1.0, 0.7, 0.85, 0.6},
    {0.8, 0.6, 1.0, 0.75},
    {0.65, 1.0, 0.7, 0.9},
    {1.0, 0.7, 0.8, 0.65},
    {0.7, 0.95, 0.8, 1.0},
    {0.6, 0.9, 0.75, 1.0},
}};

constexpr std::array<double, 3> kFormantBandwidth{90.0, 110.0, 150.0};
constexpr std::array<double, 3> kFormantBoost{1.8, 1.2, 0.8};

// Spectral envelope; bounded in [1, 2.8] so that, with the h^-1.5 source
// roll-off, the fundamental is always the strongest harmonic.
double formant_gain(double f, const std::array<double, 3>& formants) {
  double boost = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double d = (f - formants[i]) / kFormantBandwidth[i];
    boost += kFormantBoost[i] * std::exp(-0.5 * d * d);
  }
  return 1.0 + std::min(1.8, boost);
}

class Biquad {
 public:
  static Biquad bandpass(double centre_hz, double q, int sample_rate) {
    const double w0 = kTwoPi * centre_hz / sample_rate;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double a0 = 1.0 + alpha;
    Biquad f;
    f.b0_ = alpha / a0;
    f.b2_ = -alpha / a0;
    f.a1_ = -2.0 * std::cos(w0) / a0;
    f.a2_ = (1.0 - alpha) / a0;
    return f;
  }

  double operator()(double x) {
    const double y = b0_ * x + b2_ * x2_ - a1_ * y1_ - a2_ * y2_;
    x2_ = x1_;
    x1_ = x;
    y2_ = y1_;
    y1_ = y;
    return y;
  }

 private:
  double b0_ = 0, b2_ = 0, a1_ = 0, a2_ = 0;
  double x1_ = 0, x2_ = 0, y1_ = 0, y2_ = 0;
};

// Raised-cosine smoothing so every step in a target track becomes a ramp of
// `width` samples.
std::vector<double> smooth(const std::vector<double>& track, std::size_t width) {
  std::vector<double> kernel(width);
  double total = 0.0;
  for (std::size_t i = 0; i < width; ++i) {
    kernel[i] = 0.5 - 0.5 * std::cos(kTwoPi * (i + 0.5) / width);
    total += kernel[i];
  }
  for (double& k : kernel) k /= total;
  // Edge-extend so the ends keep their value.
  const std::size_t half = width / 2;
  std::vector<double> padded(track.size() + width);
  for (std::size_t i = 0; i < padded.size(); ++i) {
    const auto src = static_cast<std::ptrdiff_t>(i) - static_cast<std::ptrdiff_t>(half);
    const auto clamped = std::clamp<std::ptrdiff_t>(
        src, 0, static_cast<std::ptrdiff_t>(track.size()) - 1);
    padded[i] = track[static_cast<std::size_t>(clamped)];
  }
  const auto full = convolve(padded, kernel);
  return std::vector<double>(full.begin() + static_cast<std::ptrdiff_t>(width),
                             full.begin() + static_cast<std::ptrdiff_t>(width + track.size()));
}

void normalize_peak(std::vector<double>& x, double target) {
  const double peak = peak_abs(x);
  if (peak <= 0.0) return;
  for (double& v : x) v *= target / peak;
}

struct Segment {
  int phone;
  std::size_t start;
  std::size_t end;
  double pitch;
  double energy;
};

std::vector<Segment> plan_segments(const SpeechSpec& spec, std::size_t n, Rng& rng) {
  const double sr = spec.sample_rate;
  const double lead = rng.uniform(0.04, 0.10);
  std::array<double, kPhonesPerKeyword> dur{};
  double total = 0.0;
  for (auto& d : dur) {
    d = rng.uniform(0.07, 0.11);
    total += d;
  }
  // Leave at least 40 ms of trailing silence.
  const double available = spec.duration_s - lead - 0.04;
  const double squeeze = std::min(1.0, available / total);
  std::vector<Segment> segs;
  auto cursor = static_cast<std::size_t>(lead * sr);
  segs.push_back({kSil, 0, cursor, 1.0, 0.0});
  const auto phones = kKeywords[static_cast<std::size_t>(spec.keyword)];
  for (int p = 0; p < kPhonesPerKeyword; ++p) {
    const auto len = static_cast<std::size_t>(dur[p] * squeeze * sr);
    const auto kw = static_cast<std::size_t>(spec.keyword);
    segs.push_back({phones[p], cursor, std::min(n, cursor + len), kPitch[kw][p],
                    kEnergy[kw][p] * rng.uniform(0.9, 1.1)});
    cursor = std::min(n, cursor + len);
  }
  segs.push_back({kSil, cursor, n, 1.0, 0.0});
  return segs;
}

}  // namespace

std::string_view phone_name(int phone) {
  static constexpr std::array<std::string_view, kPhoneClasses> names{
      "sil", "a", "i", "u", "e", "o", "m", "s", "sh"};
  if (phone < 0 || phone >= kPhoneClasses) {
    throw ConfigError("unknown phone class " + std::to_string(phone));
  }
  return names[static_cast<std::size_t>(phone)];
}

std::array<int, kPhonesPerKeyword> keyword_phones(int keyword) {
  if (keyword < 0 || keyword >= kKeywordCount) {
    throw ConfigError("keyword id " + std::to_string(keyword) +
                      " outside [0, " + std::to_string(kKeywordCount) + ")");
  }
  return kKeywords[static_cast<std::size_t>(keyword)];
}

SpeakerVoice make_speaker(int id, std::uint64_t seed) {
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(id)), "speaker");
  SpeakerVoice v;
  // Golden-ratio stride spreads consecutive ids over the f0 range.
  const double u = std::fmod(0.5 + 0.6180339887498949 * id, 1.0);
  v.f0_hz = 90.0 + 150.0 * u;
  const double size = rng.uniform(0.9, 1.12);
  for (auto& s : v.formant_scale) s = size * rng.uniform(0.96, 1.04);
  return v;
}

LabeledClip synth_speech(const SpeechSpec& spec, std::uint64_t seed) {
  const double f0 = spec.voice.f0_hz;
  if (!(f0 >= 70.0 && f0 <= 300.0)) {
    throw ConfigError("synth_speech: f0 " + std::to_string(f0) +
                      " Hz outside [70, 300]");
  }
  if (!(spec.duration_s >= 0.2)) {
    throw ConfigError("synth_speech: duration " + std::to_string(spec.duration_s) +
                      " s below 0.2 s");
  }
  if (spec.sample_rate <= 0) throw ConfigError("synth_speech: sample rate must be positive");
  keyword_phones(spec.keyword);
  for (double s : spec.voice.formant_scale) {
    if (!(s > 0.5 && s < 2.0)) throw ConfigError("synth_speech: formant scale out of range");
  }

  const double sr = spec.sample_rate;
  const auto n = static_cast<std::size_t>(std::llround(spec.duration_s * sr));
  Rng rng(seed, "speech");
  const auto segs = plan_segments(spec, n, rng);
  const double f0_jitter = rng.uniform(0.995, 1.005);

  // Piecewise-constant target tracks, smoothed into 10 ms ramps.
  std::vector<double> voiced(n), hiss(n), hush(n), pitch(n);
  std::array<std::vector<double>, 3> formant;
  for (auto& f : formant) f.assign(n, 0.0);
  std::array<double, 3> last_formants = kPhones[static_cast<std::size_t>(
      keyword_phones(spec.keyword)[0])].formants;
  for (const auto& seg : segs) {
    const auto& shape = kPhones[static_cast<std::size_t>(seg.phone)];
    if (shape.voiced_gain > 0.0) last_formants = shape.formants;
    for (std::size_t i = seg.start; i < seg.end; ++i) {
      voiced[i] = shape.voiced_gain * seg.energy;
      hiss[i] = shape.hiss_gain * seg.energy;
      hush[i] = shape.hush_gain * seg.energy;
      pitch[i] = seg.pitch;
      for (int k = 0; k < 3; ++k) {
        formant[static_cast<std::size_t>(k)][i] =
            last_formants[static_cast<std::size_t>(k)] * spec.voice.formant_scale[static_cast<std::size_t>(k)];
      }
    }
  }
  const auto ramp = static_cast<std::size_t>(0.01 * sr);
  voiced = smooth(voiced, ramp);
  hiss = smooth(hiss, ramp);
  hush = smooth(hush, ramp);
  pitch = smooth(pitch, ramp * 4);
  for (auto& f : formant) f = smooth(f, ramp * 2);

  std::vector<double> out(n, 0.0);
  std::vector<double> amps;
  double theta = 0.0;
  for (std::size_t b = 0; b < n; b += kBlock) {
    const std::size_t e = std::min(n, b + kBlock);
    const double fb = f0 * f0_jitter * pitch[b];
    const auto harmonics = static_cast<std::size_t>(std::floor(0.48 * sr / fb));
    const std::array<double, 3> fm{formant[0][b], formant[1][b], formant[2][b]};
    amps.resize(harmonics);
    for (std::size_t h = 1; h <= harmonics; ++h) {
      const double hd = static_cast<double>(h);
      amps[h - 1] = std::pow(hd, -1.5) * formant_gain(hd * fb, fm);
    }
    for (std::size_t i = b; i < e; ++i) {
      theta += kTwoPi * f0 * f0_jitter * pitch[i] / sr;
      if (theta > kTwoPi) theta -= kTwoPi;
      if (voiced[i] <= 1e-9) continue;
      double s = 0.0;
      for (std::size_t h = 0; h < harmonics; ++h) {
        s += amps[h] * std::sin(static_cast<double>(h + 1) * theta);
      }
      out[i] = 0.25 * voiced[i] * s;
    }
  }

  auto s_band = Biquad::bandpass(std::min(6000.0, 0.4 * sr), 2.0, spec.sample_rate);
  auto sh_band = Biquad::bandpass(std::min(3000.0, 0.3 * sr), 2.0, spec.sample_rate);
  Rng noise(seed, "speech.frication");
  for (std::size_t i = 0; i < n; ++i) {
    const double w = noise.normal();
    const double a = s_band(w);
    const double c = sh_band(w);
    out[i] += hiss[i] * 1.6 * a + hush[i] * 1.6 * c;
  }
  normalize_peak(out, kPeak);

  LabeledClip result{AudioClip(std::move(out), spec.sample_rate), {}};
  const std::size_t frames = n / kFrameHop;
  result.frame_labels.resize(frames, kSil);
  for (std::size_t j = 0; j < frames; ++j) {
    const std::size_t centre = j * kFrameHop + kFrameHop / 2;
    for (const auto& seg : segs) {
      if (centre >= seg.start && centre < seg.end) {
        result.frame_labels[j] = seg.phone;
        break;
      }
    }
  }
  return result;
}

std::string_view noise_family_name(NoiseFamily family) {
  switch (family) {
    case NoiseFamily::kIndoor: return "indoor";
    case NoiseFamily::kOutdoor: return "outdoor";
    case NoiseFamily::kTransport: return "transport";
  }
  return "unknown";
}

NoiseFamily parse_noise_family(std::string_view name) {
  for (auto f : kNoiseFamilies) {
    if (noise_family_name(f) == name) return f;
  }
  throw ConfigError("unknown noise family '" + std::string(name) + "'");
}

AudioClip synth_noise(NoiseFamily family, std::size_t length, std::uint64_t seed,
                      int sample_rate) {
  if (length == 0) throw ConfigError("synth_noise: length must be positive");
  const double sr = sample_rate;
  Rng rng(seed, std::string("noise.") + std::string(noise_family_name(family)));
  std::vector<double> out(length, 0.0);
  switch (family) {
    case NoiseFamily::kIndoor: {
      const double mains = rng.uniform() < 0.5 ? 50.0 : 60.0;
      const double hum_phase = rng.uniform(0.0, kTwoPi);
      struct Talker {
        Biquad low, high;
        double rate, phase;
      };
      std::array<Talker, 3> talkers;
      for (auto& t : talkers) {
        t.low = Biquad::bandpass(rng.uniform(350.0, 700.0), 0.8, sample_rate);
        t.high = Biquad::bandpass(rng.uniform(1200.0, 2200.0), 1.5, sample_rate);
        t.rate = rng.uniform(3.0, 6.0);
        t.phase = rng.uniform(0.0, kTwoPi);
      }
      for (std::size_t i = 0; i < length; ++i) {
        const double t = static_cast<double>(i) / sr;
        double v = 0.15 * std::sin(kTwoPi * mains * t + hum_phase) +
                   0.06 * std::sin(2.0 * (kTwoPi * mains * t + hum_phase)) +
                   0.04 * std::sin(3.0 * (kTwoPi * mains * t + hum_phase));
        for (auto& tk : talkers) {
          const double w = rng.normal();
          const double env = 0.3 + 0.7 * std::fabs(std::sin(kTwoPi * tk.rate * t + tk.phase));
          v += env * (tk.low(w) + 0.5 * tk.high(w));
        }
        out[i] = v;
      }
      break;
    }
    case NoiseFamily::kOutdoor: {
      const double pole = std::exp(-kTwoPi * rng.uniform(150.0, 300.0) / sr);
      const std::array<double, 2> gust_rate{rng.uniform(0.2, 0.5), rng.uniform(0.5, 0.9)};
      const std::array<double, 2> gust_phase{rng.uniform(0.0, kTwoPi), rng.uniform(0.0, kTwoPi)};
      auto rustle = Biquad::bandpass(std::min(4000.0, 0.3 * sr), 0.7, sample_rate);
      double lp = 0.0;
      for (std::size_t i = 0; i < length; ++i) {
        const double t = static_cast<double>(i) / sr;
        const double w = rng.normal();
        lp = pole * lp + (1.0 - pole) * w;
        const double gust = 0.6 + 0.25 * std::sin(kTwoPi * gust_rate[0] * t + gust_phase[0]) +
                            0.15 * std::sin(kTwoPi * gust_rate[1] * t + gust_phase[1]);
        out[i] = gust * 8.0 * lp + 0.05 * rustle(w);
      }
      break;
    }
    case NoiseFamily::kTransport: {
      const double engine_hz = rng.uniform(25.0, 45.0);
      auto body = Biquad::bandpass(rng.uniform(100.0, 140.0), 4.0, sample_rate);
      auto second = Biquad::bandpass(rng.uniform(220.0, 280.0), 3.0, sample_rate);
      const double leak = std::exp(-kTwoPi * 40.0 / sr);
      double phase = rng.uniform();
      double road = 0.0;
      for (std::size_t i = 0; i < length; ++i) {
        phase += engine_hz / sr;
        double pulse = 0.0;
        if (phase >= 1.0) {
          phase -= 1.0;
          pulse = 1.0;
        }
        road = leak * road + 0.05 * rng.normal();
        out[i] = 2.0 * body(pulse) + 1.2 * second(pulse) + road;
      }
      break;
    }
  }
  normalize_peak(out, kPeak);
  return AudioClip(std::move(out), sample_rate);
}

}  // namespace qkd
