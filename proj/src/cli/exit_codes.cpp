#include "qkd/cli/exit_codes.hpp"

#include <filesystem>

#include "qkd/errors.hpp"

namespace qkd {

ExitCode exit_code_for(const std::exception& error) {
  if (dynamic_cast<const ConfigError*>(&error)) return ExitCode::kConfig;
  if (dynamic_cast<const DataError*>(&error) || dynamic_cast<const FormatError*>(&error) ||
      dynamic_cast<const ShapeError*>(&error) || dynamic_cast<const MetricError*>(&error) ||
      dynamic_cast<const std::filesystem::filesystem_error*>(&error)) {
    return ExitCode::kData;
  }
  return ExitCode::kNumeric;
}

}  // namespace qkd
