#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace qkd {

inline constexpr int kDefaultSampleRate = 16000;

/// Mono audio. Construction enforces non-empty, finite samples and a
/// positive sample rate.
class AudioClip {
 public:
  AudioClip() = default;
  explicit AudioClip(std::vector<double> samples, int sample_rate = kDefaultSampleRate);

  std::span<const double> samples() const { return samples_; }
  std::vector<double>& mutable_samples() { return samples_; }
  int sample_rate() const { return sample_rate_; }
  std::size_t size() const { return samples_.size(); }
  double duration_s() const {
    return static_cast<double>(samples_.size()) / sample_rate_;
  }
  bool empty() const { return samples_.empty(); }

 private:
  std::vector<double> samples_;
  int sample_rate_ = kDefaultSampleRate;
};

double mean_square(std::span<const double> x);
double peak_abs(std::span<const double> x);

/// RIFF/WAVE PCM16 mono. Throws FormatError naming the offense for other
/// encodings, multichannel data, truncation or an empty payload.
AudioClip read_wav(const std::filesystem::path& path);
/// Writes PCM16 mono little-endian through a temporary file and rename.
/// Samples outside [-1, 1] are clamped.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

/// Writes `bytes` to `path` atomically (temporary file, then rename).
void write_file_atomic(const std::filesystem::path& path,
                       std::span<const char> bytes);
void write_text_atomic(const std::filesystem::path& path,
                       const std::string& text);

}  // namespace qkd
