#pragma once

#include <string>
#include <vector>

#include "curnm/experiment.hpp"

namespace curnm {

/// Minimal deterministic SVG line/bar plots (no external tooling).
namespace svg {
struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};
std::string line_plot(const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series);
std::string bar_plot(const std::string& title, const std::vector<std::string>& labels,
                     const std::vector<double>& values);
}  // namespace svg

struct ReportOutcome {
  bool empty = false;
  std::vector<std::string> written;  // emitted files, repo-relative
};

/// Scans a results tree for run.json files and writes Markdown/CSV tables
/// (AP per dataset x sampler, average rank, runtime ratios) plus SVG plots
/// (loss curves, schedule traces, ablation bars) into <results_dir>/report.
/// Regeneration is byte-for-byte deterministic for fixed inputs.
ReportOutcome emit_report(const std::string& results_dir, std::ostream& log);

}  // namespace curnm
