#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "qkd/signal/audio.hpp"
#include "qkd/signal/contaminate.hpp"
#include "qkd/signal/rir.hpp"

namespace qkd {

struct Utterance {
  std::string path;  // relative to the corpus root
  AudioClip clip;
  int speaker = 0;
  int keyword = 0;
  std::vector<int> frame_labels;
};

using Corpus = std::vector<Utterance>;

struct CorpusSpec {
  int speakers = 12;
  /// Clips per (speaker, keyword) pair.
  int repeats = 2;
  double duration_s = 0.6;
  /// Seeds clip timing and jitter.
  std::uint64_t seed = 1;
  /// Seeds speaker voices; corpora sharing it share voices.
  std::uint64_t voice_seed = 1;
  /// Offset added to speaker ids, so disjoint speaker sets can be drawn.
  int first_speaker = 0;
};

/// Every (speaker, keyword, repeat) combination, in that nesting order.
Corpus synth_corpus(const CorpusSpec& spec);

/// Writes wav/<speaker>_<keyword>_<repeat>.wav, manifest.csv and labels.csv
/// under `root`.
void save_corpus(const std::filesystem::path& root, const Corpus& corpus);
/// Loads a manifest and its sibling labels.csv. Throws DataError when a
/// clip's duration or label count contradicts the manifest.
Corpus load_corpus(const std::filesystem::path& manifest);

/// `per_family` clips of `length_s` seconds for each noise family.
std::vector<NoiseSource> make_noise_pool(int per_family, double length_s, std::uint64_t seed);
/// `count` RIRs with rt60 evenly spread over [rt60_low, rt60_high].
std::vector<Rir> make_rir_pool(int count, double rt60_low, double rt60_high, std::uint64_t seed);

}  // namespace qkd
