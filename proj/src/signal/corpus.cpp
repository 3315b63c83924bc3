#include "qkd/signal/corpus.hpp"

#include <cmath>
#include <cstdio>

#include "qkd/errors.hpp"
#include "qkd/rng.hpp"
#include "qkd/signal/manifest.hpp"
#include "qkd/signal/synth.hpp"

namespace qkd {

Corpus synth_corpus(const CorpusSpec& spec) {
  if (spec.speakers < 1 || spec.repeats < 1) {
    throw ConfigError("corpus needs at least one speaker and one repeat");
  }
  Corpus corpus;
  for (int s = 0; s < spec.speakers; ++s) {
    const int speaker = spec.first_speaker + s;
    const SpeakerVoice voice = make_speaker(speaker, spec.voice_seed);
    for (int k = 0; k < kKeywordCount; ++k) {
      for (int r = 0; r < spec.repeats; ++r) {
        SpeechSpec sp;
        sp.voice = voice;
        sp.keyword = k;
        sp.duration_s = spec.duration_s;
        const auto clip_seed = derive_seed(spec.seed, static_cast<std::uint64_t>(speaker),
                                           static_cast<std::uint64_t>(k * 1000 + r));
        auto out = synth_speech(sp, clip_seed);
        char name[64];
        std::snprintf(name, sizeof name, "wav/%03d_%d_%02d.wav", speaker, k, r);
        corpus.push_back({name, std::move(out.clip), speaker, k, std::move(out.frame_labels)});
      }
    }
  }
  return corpus;
}

void save_corpus(const std::filesystem::path& root, const Corpus& corpus) {
  std::vector<ManifestRow> rows;
  std::map<std::string, std::vector<int>> labels;
  for (const auto& u : corpus) {
    write_wav(root / u.path, u.clip);
    rows.push_back({u.path, u.speaker, u.keyword, u.clip.duration_s()});
    labels[u.path] = u.frame_labels;
  }
  write_manifest(root / "manifest.csv", rows);
  write_frame_labels(root / "labels.csv", labels);
}

Corpus load_corpus(const std::filesystem::path& manifest) {
  const auto root = manifest.parent_path();
  const auto rows = read_manifest(manifest);
  const auto labels_path = root / "labels.csv";
  std::map<std::string, std::vector<int>> labels;
  if (std::filesystem::exists(labels_path)) labels = read_frame_labels(labels_path);
  Corpus corpus;
  for (const auto& row : rows) {
    Utterance u;
    u.path = row.path;
    u.clip = read_wav(root / row.path);
    u.speaker = row.speaker_id;
    u.keyword = row.keyword_id;
    if (std::fabs(u.clip.duration_s() - row.duration_s) > 1.0 / u.clip.sample_rate() + 1e-6) {
      throw DataError(row.path + ": duration " + std::to_string(u.clip.duration_s()) +
                      " s contradicts manifest " + std::to_string(row.duration_s) + " s");
    }
    if (const auto it = labels.find(row.path); it != labels.end()) {
      u.frame_labels = it->second;
      if (u.frame_labels.size() != u.clip.size() / kFrameHop) {
        throw DataError(row.path + ": " + std::to_string(u.frame_labels.size()) +
                        " frame labels for " + std::to_string(u.clip.size() / kFrameHop) +
                        " frames");
      }
    }
    corpus.push_back(std::move(u));
  }
  return corpus;
}

std::vector<NoiseSource> make_noise_pool(int per_family, double length_s, std::uint64_t seed) {
  if (per_family < 1 || !(length_s > 0.0)) throw ConfigError("noise pool needs positive size and length");
  std::vector<NoiseSource> pool;
  const auto length = static_cast<std::size_t>(length_s * kDefaultSampleRate);
  for (auto family : kNoiseFamilies) {
    for (int i = 0; i < per_family; ++i) {
      const auto s = derive_seed(seed, static_cast<std::uint64_t>(family),
                                 static_cast<std::uint64_t>(i));
      pool.push_back({std::string(noise_family_name(family)) + "-" + std::to_string(i), family,
                      synth_noise(family, length, s)});
    }
  }
  return pool;
}

std::vector<Rir> make_rir_pool(int count, double rt60_low, double rt60_high, std::uint64_t seed) {
  if (count < 1 || !(rt60_low <= rt60_high)) throw ConfigError("rir pool needs count >= 1 and low <= high");
  std::vector<Rir> pool;
  for (int i = 0; i < count; ++i) {
    const double t = count == 1 ? 0.0 : static_cast<double>(i) / (count - 1);
    pool.push_back(synth_rir(rt60_low + t * (rt60_high - rt60_low),
                             derive_seed(seed, static_cast<std::uint64_t>(i))));
  }
  return pool;
}

}  // namespace qkd
