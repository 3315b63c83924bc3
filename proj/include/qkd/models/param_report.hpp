#pragma once

#include <string>
#include <utility>
#include <vector>

#include "qkd/tensor/nn.hpp"

namespace qkd {

struct ParamGroup {
  std::string name;
  std::size_t count = 0;
  bool trainable = true;
};

struct ParamReport {
  std::vector<ParamGroup> groups;
  std::size_t trainable = 0;
  std::size_t frozen = 0;

  /// One "group<TAB>count<TAB>trainable|frozen" line per group plus totals.
  std::string to_text() const;
};

/// A group is frozen when none of its tensors requires a gradient.
ParamReport param_count(const std::vector<std::pair<std::string, nn::ParamList>>& groups);

}  // namespace qkd
