#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace qkd {

struct ScoreRow {
  std::string model;
  std::string task;
  std::string metric;
  double value = 0.0;
  bool higher_is_better = true;
};

struct ScoreAnchor {
  std::string task;
  std::string metric;
  double base = 0.0;
  double sota = 1.0;
};

struct ScoreTable {
  std::vector<ScoreRow> rows;
  std::vector<ScoreAnchor> anchors;
};

struct ScoreResult {
  double value = 0.0;
  /// Set when the score falls outside [0, 1000] (beat SOTA or trailed base).
  bool out_of_range = false;
};

/// (1000/|T|) sum_t (1/|I_t|) sum_i (s - base) / (sota - base) over the
/// rows of `model`. Lower-is-better metrics have value, base and sota
/// negated first. Throws MetricError for base == sota or a model with no
/// rows, ConfigError for a row without anchors.
ScoreResult score(const ScoreTable& table, const std::string& model);

/// Rows CSV: model,task,metric,value,higher_is_better.
/// Anchors CSV: task,metric,base,sota. Throws FormatError on bad input.
ScoreTable read_score_table(const std::filesystem::path& rows, const std::filesystem::path& anchors);
void write_score_rows(const std::filesystem::path& path, const std::vector<ScoreRow>& rows);
void write_score_anchors(const std::filesystem::path& path, const std::vector<ScoreAnchor>& anchors);

/// Distinct model names in order of first appearance.
std::vector<std::string> score_models(const ScoreTable& table);

}  // namespace qkd
