#include "qkd/models/param_report.hpp"

#include <sstream>

namespace qkd {

ParamReport param_count(const std::vector<std::pair<std::string, nn::ParamList>>& groups) {
  ParamReport report;
  for (const auto& [name, params] : groups) {
    ParamGroup g{name, nn::count_scalars(params), false};
    for (const auto& p : params) g.trainable = g.trainable || p.tensor.requires_grad();
    (g.trainable ? report.trainable : report.frozen) += g.count;
    report.groups.push_back(std::move(g));
  }
  return report;
}

std::string ParamReport::to_text() const {
  std::ostringstream out;
  for (const auto& g : groups) {
    out << g.name << '\t' << g.count << '\t' << (g.trainable ? "trainable" : "frozen") << '\n';
  }
  out << "total.trainable\t" << trainable << '\n' << "total.frozen\t" << frozen << '\n';
  return out.str();
}

}  // namespace qkd
