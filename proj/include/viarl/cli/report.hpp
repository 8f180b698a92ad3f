#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

namespace viarl::cli {

struct ReportOptions {
  std::vector<std::string> runs;  // train/<name> directories
  std::string csv;                // optional per-step series output
  std::size_t max_rows = 20;
};

// Prints per-step and per-position tables; two runs are also compared side by
// side. Refuses runs whose files carry a different schema version.
int cmd_report(const ReportOptions& opts, std::ostream& out, std::ostream& err);

}  // namespace viarl::cli
