#include "qkd/eval/score.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include "qkd/errors.hpp"
#include "qkd/signal/audio.hpp"

namespace qkd {

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_number(const std::string& s, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw FormatError(where + ": '" + s + "' is not a number");
  }
}

bool parse_bool(const std::string& s, const std::string& where) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw FormatError(where + ": '" + s + "' is not a boolean");
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               const std::string& header) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw FormatError(path.string() + ": expected header '" + header + "'");
  }
  const std::size_t columns = split_csv(header).size();
  std::vector<std::vector<std::string>> rows;
  for (std::size_t n = 2; std::getline(in, line); ++n) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (cells.size() != columns) {
      throw FormatError(path.string() + ":" + std::to_string(n) + ": expected " +
                        std::to_string(columns) + " columns");
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string format_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

ScoreResult score(const ScoreTable& table, const std::string& model) {
  std::map<std::pair<std::string, std::string>, const ScoreAnchor*> anchors;
  for (const auto& a : table.anchors) anchors[{a.task, a.metric}] = &a;
  // task -> (sum of normalised metric values, metric count)
  std::map<std::string, std::pair<double, std::size_t>> tasks;
  for (const auto& r : table.rows) {
    if (r.model != model) continue;
    const auto it = anchors.find({r.task, r.metric});
    if (it == anchors.end()) {
      throw ConfigError("score: no anchors for " + r.task + "/" + r.metric);
    }
    const double sign = r.higher_is_better ? 1.0 : -1.0;
    const double s = sign * r.value, base = sign * it->second->base, sota = sign * it->second->sota;
    if (sota == base) {
      throw MetricError("score: base equals SOTA for " + r.task + "/" + r.metric);
    }
    auto& [sum, count] = tasks[r.task];
    sum += (s - base) / (sota - base);
    ++count;
  }
  if (tasks.empty()) throw MetricError("score: no rows for model '" + model + "'");
  double total = 0.0;
  for (const auto& [task, acc] : tasks) total += acc.first / static_cast<double>(acc.second);
  ScoreResult result;
  result.value = 1000.0 * (total / static_cast<double>(tasks.size()));
  result.out_of_range = result.value < 0.0 || result.value > 1000.0;
  return result;
}

ScoreTable read_score_table(const std::filesystem::path& rows, const std::filesystem::path& anchors) {
  ScoreTable t;
  for (const auto& c : read_csv(rows, "model,task,metric,value,higher_is_better")) {
    t.rows.push_back({c[0], c[1], c[2], parse_number(c[3], rows.string()),
                      parse_bool(c[4], rows.string())});
  }
  for (const auto& c : read_csv(anchors, "task,metric,base,sota")) {
    t.anchors.push_back(
        {c[0], c[1], parse_number(c[2], anchors.string()), parse_number(c[3], anchors.string())});
  }
  return t;
}

void write_score_rows(const std::filesystem::path& path, const std::vector<ScoreRow>& rows) {
  std::string out = "model,task,metric,value,higher_is_better\n";
  for (const auto& r : rows) {
    out += r.model + "," + r.task + "," + r.metric + "," + format_number(r.value) + "," +
           (r.higher_is_better ? "true" : "false") + "\n";
  }
  write_text_atomic(path, out);
}

void write_score_anchors(const std::filesystem::path& path, const std::vector<ScoreAnchor>& anchors) {
  std::string out = "task,metric,base,sota\n";
  for (const auto& a : anchors) {
    out += a.task + "," + a.metric + "," + format_number(a.base) + "," + format_number(a.sota) + "\n";
  }
  write_text_atomic(path, out);
}

std::vector<std::string> score_models(const ScoreTable& table) {
  std::vector<std::string> models;
  for (const auto& r : table.rows) {
    if (std::find(models.begin(), models.end(), r.model) == models.end()) models.push_back(r.model);
  }
  return models;
}

}  // namespace qkd
