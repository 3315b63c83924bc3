#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace qkd {

/// One row of manifest.csv: path,speaker_id,keyword_id,duration_s. Paths are
/// relative to the manifest's directory.
struct ManifestRow {
  std::string path;
  int speaker_id = 0;
  int keyword_id = 0;
  double duration_s = 0.0;
};

/// Throws FormatError for a wrong header, a short row or unparsable fields,
/// naming the line.
std::vector<ManifestRow> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestRow>& rows);

/// labels.csv: path,labels where labels is a space-separated list of frame
/// classes.
std::map<std::string, std::vector<int>> read_frame_labels(
    const std::filesystem::path& path);
void write_frame_labels(const std::filesystem::path& path,
                        const std::map<std::string, std::vector<int>>& labels);

}  // namespace qkd
