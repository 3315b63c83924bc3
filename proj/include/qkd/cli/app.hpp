#pragma once

#include <string>
#include <vector>

namespace qkd {

/// Runs one subcommand (synth, pretrain-teacher, distill, contaminate,
/// evaluate, score, probe, report) and returns its exit code. args[0] is
/// the program name.
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace qkd
