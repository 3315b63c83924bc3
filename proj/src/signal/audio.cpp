#include "qkd/signal/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "qkd/errors.hpp"

namespace qkd {

AudioClip::AudioClip(std::vector<double> samples, int sample_rate)
    : samples_(std::move(samples)), sample_rate_(sample_rate) {
  if (samples_.empty()) throw DataError("audio clip has no samples");
  if (sample_rate_ <= 0) {
    throw DataError("sample rate must be positive, got " +
                    std::to_string(sample_rate_));
  }
  for (double s : samples_) {
    if (!std::isfinite(s)) throw DataError("audio clip has non-finite sample");
  }
}

double mean_square(std::span<const double> x) {
  if (x.empty()) return 0.0;
  double s = 0.0;
  for (double v : x) s += v * v;
  return s / static_cast<double>(x.size());
}

double peak_abs(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p = std::max(p, std::fabs(v));
  return p;
}

namespace {

std::uint32_t read_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) |
         (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
}

}  // namespace

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(path.string() + ": cannot open");
  const std::vector<unsigned char> data((std::istreambuf_iterator<char>(in)),
                                        std::istreambuf_iterator<char>());
  const std::string where = path.string() + ": ";
  if (data.size() < 12 || std::memcmp(data.data(), "RIFF", 4) != 0 ||
      std::memcmp(data.data() + 8, "WAVE", 4) != 0) {
    throw FormatError(where + "not a RIFF/WAVE file");
  }
  bool have_fmt = false;
  int channels = 0, sample_rate = 0, bits = 0, format = 0;
  std::size_t pos = 12;
  while (pos + 8 <= data.size()) {
    const std::uint32_t size = read_u32(data.data() + pos + 4);
    const unsigned char* body = data.data() + pos + 8;
    const bool is_fmt = std::memcmp(data.data() + pos, "fmt ", 4) == 0;
    const bool is_data = std::memcmp(data.data() + pos, "data", 4) == 0;
    if (is_fmt) {
      if (size < 16 || pos + 8 + size > data.size()) {
        throw FormatError(where + "truncated fmt chunk");
      }
      format = read_u16(body);
      channels = read_u16(body + 2);
      sample_rate = static_cast<int>(read_u32(body + 4));
      bits = read_u16(body + 14);
      have_fmt = true;
    } else if (is_data) {
      if (!have_fmt) throw FormatError(where + "data chunk before fmt chunk");
      if (format != 1 || bits != 16) {
        throw FormatError(where + "unsupported encoding (format " +
                          std::to_string(format) + ", " +
                          std::to_string(bits) + " bits); only PCM16");
      }
      if (channels != 1) {
        throw FormatError(where + std::to_string(channels) +
                          " channels; only mono is supported");
      }
      if (pos + 8 + size > data.size()) {
        throw FormatError(where + "truncated data chunk (header says " +
                          std::to_string(size) + " bytes)");
      }
      if (size < 2) throw FormatError(where + "zero-length audio payload");
      std::vector<double> samples(size / 2);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(body + 2 * i));
        samples[i] = static_cast<double>(raw) / 32768.0;
      }
      if (sample_rate <= 0) throw FormatError(where + "invalid sample rate");
      return AudioClip(std::move(samples), sample_rate);
    }
    pos += 8 + size + (size & 1u);
  }
  throw FormatError(where + (have_fmt ? "missing data chunk" : "missing fmt chunk"));
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  const auto n = static_cast<std::uint32_t>(clip.size());
  std::string out;
  out.reserve(44 + 2 * n);
  out += "RIFF";
  put_u32(out, 36 + 2 * n);
  out += "WAVE";
  out += "fmt ";
  put_u32(out, 16);
  put_u16(out, 1);
  put_u16(out, 1);
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate()));
  put_u32(out, static_cast<std::uint32_t>(clip.sample_rate()) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  out += "data";
  put_u32(out, 2 * n);
  for (double s : clip.samples()) {
    const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
    const auto q = static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0));
    put_u16(out, static_cast<std::uint16_t>(q));
  }
  write_file_atomic(path, out);
}

void write_file_atomic(const std::filesystem::path& path,
                       std::span<const char> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError(tmp.string() + ": cannot open for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError(tmp.string() + ": write failed");
  }
  std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path,
                       const std::string& text) {
  write_file_atomic(path, std::span<const char>(text.data(), text.size()));
}

}  // namespace qkd
