#pragma once

#include <fstream>
#include <string>

#include <json.hpp>

#include "specmmd/error.hpp"
#include "specmmd/testing.hpp"

namespace specmmd {

inline nlohmann::json to_json(const TestReport& report,
                              bool include_timings = true) {
  nlohmann::json doc;
  doc["reject"] = report.reject;
  doc["alpha"] = report.alpha;
  doc["corrected_alpha"] = report.corrected_alpha;
  doc["b"] = report.b;
  doc["l"] = report.l;
  doc["degenerate_statistics"] = report.degenerate_statistics;
  doc["permutation_digest"] = report.permutation_digest;
  doc["seeds"] = {{"master", report.seeds.master},
                  {"permutation", report.seeds.permutation},
                  {"bernoulli", report.seeds.bernoulli},
                  {"frequency", report.seeds.frequency}};
  doc["warnings"] = report.warnings;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& cell : report.cells) {
    cells.push_back({{"lambda", cell.lambda},
                     {"kernel", cell.kernel},
                     {"stat", cell.stat},
                     {"quantile", cell.quantile},
                     {"reject", cell.reject},
                     {"p_value", cell.p_value}});
  }
  doc["cells"] = std::move(cells);
  if (include_timings) {
    doc["timing_ms"] = report.timing_ms;
  }
  return doc;
}

inline void write_report_json(const std::string& path,
                              const TestReport& report) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Io, "cannot write report '" + path + "'");
  out << to_json(report).dump(2) << '\n';
  if (!out) fail(ErrorKind::Io, "write failed for '" + path + "'");
}

}  // namespace specmmd
