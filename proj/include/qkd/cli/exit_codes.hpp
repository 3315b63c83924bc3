#pragma once

#include <exception>

namespace qkd {

enum class ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConfig = 2,
  kData = 3,
  kNumeric = 4,
};

/// ConfigError -> 2; DataError, FormatError, ShapeError, MetricError and
/// filesystem errors -> 3; everything else -> 4.
ExitCode exit_code_for(const std::exception& error);

}  // namespace qkd
