#include "qkd/signal/manifest.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "qkd/errors.hpp"
#include "qkd/signal/audio.hpp"

namespace qkd {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

template <typename T>
T parse_number(const std::string& text, const std::string& where) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) {
    throw FormatError(where + ": cannot parse '" + text + "'");
  }
  return value;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(path.string() + ": cannot open");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::vector<ManifestRow> read_manifest(const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "path,speaker_id,keyword_id,duration_s") {
    throw FormatError(path.string() +
                      ": expected header 'path,speaker_id,keyword_id,duration_s'");
  }
  std::vector<ManifestRow> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    const auto f = split(lines[i], ',');
    if (f.size() != 4) {
      throw FormatError(where + ": expected 4 fields, got " + std::to_string(f.size()));
    }
    ManifestRow row;
    row.path = f[0];
    row.speaker_id = parse_number<int>(f[1], where);
    row.keyword_id = parse_number<int>(f[2], where);
    row.duration_s = parse_number<double>(f[3], where);
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_manifest(const std::filesystem::path& path,
                    const std::vector<ManifestRow>& rows) {
  std::ostringstream out;
  out << "path,speaker_id,keyword_id,duration_s\n";
  for (const auto& r : rows) {
    if (r.path.find(',') != std::string::npos) {
      throw FormatError("manifest path contains a comma: " + r.path);
    }
    out << r.path << ',' << r.speaker_id << ',' << r.keyword_id << ',' << r.duration_s << '\n';
  }
  write_text_atomic(path, out.str());
}

std::map<std::string, std::vector<int>> read_frame_labels(
    const std::filesystem::path& path) {
  const auto lines = read_lines(path);
  if (lines.empty() || lines[0] != "path,labels") {
    throw FormatError(path.string() + ": expected header 'path,labels'");
  }
  std::map<std::string, std::vector<int>> out;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(i + 1);
    const auto f = split(lines[i], ',');
    if (f.size() != 2) throw FormatError(where + ": expected 2 fields");
    std::vector<int> labels;
    for (const auto& tok : split(f[1], ' ')) {
      if (!tok.empty()) labels.push_back(parse_number<int>(tok, where));
    }
    out[f[0]] = std::move(labels);
  }
  return out;
}

void write_frame_labels(const std::filesystem::path& path,
                        const std::map<std::string, std::vector<int>>& labels) {
  std::ostringstream out;
  out << "path,labels\n";
  for (const auto& [p, ls] : labels) {
    out << p << ',';
    for (std::size_t i = 0; i < ls.size(); ++i) out << (i ? " " : "") << ls[i];
    out << '\n';
  }
  write_text_atomic(path, out.str());
}

}  // namespace qkd
