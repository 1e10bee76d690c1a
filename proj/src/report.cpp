#include "curnm/report.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "curnm/eval.hpp"

namespace curnm {

namespace fs = std::filesystem;

namespace {

std::string fmt(double v, int digits = 4) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

std::string esc(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '&') out += "&amp;";
    else if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else out += c;
  }
  return out;
}

constexpr double kW = 640, kH = 400, kMargin = 56;
const char* kColors[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};

struct Range {
  double lo = 0, hi = 1;
  void expand(double v) {
    if (!std::isfinite(v)) return;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  double map(double v, double a, double b) const {
    if (hi == lo) return (a + b) / 2;
    return a + (v - lo) / (hi - lo) * (b - a);
  }
};

}  // namespace

namespace svg {

std::string line_plot(const std::string& title, const std::string& x_label,
                      const std::string& y_label, const std::vector<Series>& series) {
  Range rx, ry;
  rx.lo = 1e300;
  rx.hi = -1e300;
  ry.lo = 1e300;
  ry.hi = -1e300;
  for (const auto& s : series)
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      rx.expand(s.x[i]);
      ry.expand(s.y[i]);
    }
  if (rx.lo > rx.hi) {
    rx = Range{0, 1};
    ry = Range{0, 1};
  }
  if (ry.lo == ry.hi) {
    ry.lo -= 0.5;
    ry.hi += 0.5;
  }

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << esc(title) << "</text>\n";
  // axes
  out << "<line x1=\"" << kMargin << "\" y1=\"" << kH - kMargin << "\" x2=\"" << kW - 16
      << "\" y2=\"" << kH - kMargin << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << kMargin << "\" y1=\"" << kH - kMargin << "\" x2=\"" << kMargin
      << "\" y2=\"32\" stroke=\"black\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 12
      << "\" text-anchor=\"middle\" font-size=\"12\">" << esc(x_label) << "</text>\n";
  out << "<text x=\"16\" y=\"" << kH / 2
      << "\" text-anchor=\"middle\" font-size=\"12\" transform=\"rotate(-90 16 " << kH / 2
      << ")\">" << esc(y_label) << "</text>\n";
  // range labels
  out << "<text x=\"" << kMargin << "\" y=\"" << kH - kMargin + 16
      << "\" font-size=\"10\">" << fmt(rx.lo, 2) << "</text>\n";
  out << "<text x=\"" << kW - 16 << "\" y=\"" << kH - kMargin + 16
      << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(rx.hi, 2) << "</text>\n";
  out << "<text x=\"" << kMargin - 4 << "\" y=\"" << kH - kMargin
      << "\" text-anchor=\"end\" font-size=\"10\">" << fmt(ry.lo, 3) << "</text>\n";
  out << "<text x=\"" << kMargin - 4 << "\" y=\"40\" text-anchor=\"end\" font-size=\"10\">"
      << fmt(ry.hi, 3) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    out << "<polyline fill=\"none\" stroke=\"" << kColors[si % 6]
        << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      const double px = rx.map(s.x[i], kMargin, kW - 16);
      const double py = ry.map(s.y[i], kH - kMargin, 32);
      out << fmt(px, 1) << "," << fmt(py, 1) << " ";
    }
    out << "\"/>\n";
    out << "<text x=\"" << kW - 20 << "\" y=\"" << 40 + 16 * static_cast<double>(si)
        << "\" text-anchor=\"end\" font-size=\"11\" fill=\"" << kColors[si % 6] << "\">"
        << esc(s.label) << "</text>\n";
  }
  out << "</svg>\n";
  return out.str();
}

std::string bar_plot(const std::string& title, const std::vector<std::string>& labels,
                     const std::vector<double>& values) {
  Range ry;
  ry.lo = 0;
  ry.hi = 1e-9;
  for (double v : values) ry.expand(v);
  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" viewBox=\"0 0 " << kW << " " << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << kW / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << esc(title) << "</text>\n";
  const double span = kW - kMargin - 16;
  const double bw = span / std::max<std::size_t>(values.size(), 1) * 0.7;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double cx = kMargin + span * (static_cast<double>(i) + 0.5) /
                                    static_cast<double>(values.size());
    const double top = ry.map(values[i], kH - kMargin, 48);
    out << "<rect x=\"" << fmt(cx - bw / 2, 1) << "\" y=\"" << fmt(top, 1) << "\" width=\""
        << fmt(bw, 1) << "\" height=\"" << fmt(kH - kMargin - top, 1) << "\" fill=\""
        << kColors[i % 6] << "\"/>\n";
    out << "<text x=\"" << fmt(cx, 1) << "\" y=\"" << kH - kMargin + 14
        << "\" text-anchor=\"middle\" font-size=\"10\">" << esc(labels[i]) << "</text>\n";
    out << "<text x=\"" << fmt(cx, 1) << "\" y=\"" << fmt(top - 4, 1)
        << "\" text-anchor=\"middle\" font-size=\"10\">" << fmt(values[i], 3) << "</text>\n";
  }
  out << "<line x1=\"" << kMargin << "\" y1=\"" << kH - kMargin << "\" x2=\"" << kW - 16
      << "\" y2=\"" << kH - kMargin << "\" stroke=\"black\"/>\n";
  out << "</svg>\n";
  return out.str();
}

}  // namespace svg

ReportOutcome emit_report(const std::string& results_dir, std::ostream& log) {
  ReportOutcome outcome;
  std::vector<std::string> run_files;
  if (fs::exists(results_dir))
    for (const auto& entry : fs::recursive_directory_iterator(results_dir)) {
      if (!entry.is_regular_file()) continue;
      if (entry.path().filename() == "run.json") run_files.push_back(entry.path().string());
    }
  std::sort(run_files.begin(), run_files.end());
  if (run_files.empty()) {
    log << "no results under '" << results_dir << "'\n";
    outcome.empty = true;
    return outcome;
  }

  std::vector<RunResult> runs;
  std::vector<std::string> run_dirs;
  for (const auto& f : run_files) {
    std::ifstream in(f);
    std::stringstream ss;
    ss << in.rdbuf();
    runs.push_back(run_result_from_json(ss.str()));
    run_dirs.push_back(fs::path(f).parent_path().string());
  }

  const auto report_dir = fs::path(results_dir) / "report";
  fs::create_directories(report_dir);
  auto write = [&](const std::string& name, const std::string& content) {
    const auto path = (report_dir / name).string();
    std::ofstream out(path, std::ios::binary);
    out << content;
    outcome.written.push_back(path);
  };

  // dataset x sampler aggregation
  struct Agg {
    std::vector<double> trans, ind, epoch_s;
  };
  std::map<std::string, std::map<std::string, Agg>> table;  // dataset -> sampler
  std::set<std::string> samplers_seen;
  for (const auto& r : runs) {
    auto& a = table[r.dataset][r.sampler];
    a.trans.push_back(r.ap_transductive);
    a.ind.push_back(r.ap_inductive);
    a.epoch_s.push_back(r.epoch_time_s);
    samplers_seen.insert(r.sampler);
  }
  const std::vector<std::string> samplers(samplers_seen.begin(), samplers_seen.end());

  auto mean = [](const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };
  auto stdev = [&](const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
  };

  // ap table (markdown + csv)
  std::ostringstream md, csv;
  md << "# Results\n\n## Average precision (mean +- std over seeds)\n\n";
  md << "| dataset | protocol |";
  for (const auto& s : samplers) md << " " << s << " |";
  md << "\n|---|---|";
  for (std::size_t i = 0; i < samplers.size(); ++i) md << "---|";
  md << "\n";
  csv << "dataset,protocol";
  for (const auto& s : samplers) csv << "," << s;
  csv << "\n";
  std::vector<std::vector<std::optional<double>>> trans_rows, ind_rows;
  for (const auto& [dataset, per_sampler] : table) {
    for (const std::string protocol : {"transductive", "inductive"}) {
      md << "| " << dataset << " | " << protocol << " |";
      csv << dataset << "," << protocol;
      std::vector<std::optional<double>> row;
      for (const auto& s : samplers) {
        auto it = per_sampler.find(s);
        if (it == per_sampler.end()) {
          md << " - |";
          csv << ",";
          row.push_back(std::nullopt);
          continue;
        }
        const auto& vals = protocol == std::string("transductive") ? it->second.trans
                                                                   : it->second.ind;
        md << " " << fmt(mean(vals), 4) << " ± " << fmt(stdev(vals), 4) << " |";
        csv << "," << fmt(mean(vals), 6);
        row.push_back(mean(vals));
      }
      md << "\n";
      csv << "\n";
      (protocol == std::string("transductive") ? trans_rows : ind_rows).push_back(row);
    }
  }

  // average rank
  md << "\n## Average rank\n\n| protocol |";
  for (const auto& s : samplers) md << " " << s << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < samplers.size(); ++i) md << "---|";
  md << "\n";
  std::ostringstream rank_csv;
  rank_csv << "protocol";
  for (const auto& s : samplers) rank_csv << "," << s;
  rank_csv << "\n";
  for (const auto& [name, rows] :
       {std::pair{std::string("transductive"), trans_rows}, {std::string("inductive"), ind_rows}}) {
    const auto ranks = average_rank(rows);
    md << "| " << name << " |";
    rank_csv << name;
    for (double r : ranks) {
      md << " " << fmt(r, 2) << " |";
      rank_csv << "," << fmt(r, 4);
    }
    md << "\n";
    rank_csv << "\n";
  }

  // runtime ratios vs the random sampler
  md << "\n## Mean epoch time and ratio vs random\n\n"
     << "| dataset | sampler | epoch_s | ratio_vs_random |\n|---|---|---|---|\n";
  std::ostringstream ratio_csv;
  ratio_csv << "dataset,sampler,epoch_s,ratio_vs_random\n";
  for (const auto& [dataset, per_sampler] : table) {
    const auto rnd = per_sampler.find("random");
    for (const auto& s : samplers) {
      auto it = per_sampler.find(s);
      if (it == per_sampler.end()) continue;
      const double t_mean = mean(it->second.epoch_s);
      std::string ratio = "-";
      if (rnd != per_sampler.end() && mean(rnd->second.epoch_s) > 0)
        ratio = fmt(runtime_ratio(it->second.epoch_s, rnd->second.epoch_s), 2);
      md << "| " << dataset << " | " << s << " | " << fmt(t_mean, 3) << " | " << ratio
         << " |\n";
      ratio_csv << dataset << "," << s << "," << fmt(t_mean, 6) << "," << ratio << "\n";
    }
  }

  write("report.md", md.str());
  write("ap_table.csv", csv.str());
  write("rank.csv", rank_csv.str());
  write("ratios.csv", ratio_csv.str());

  // plots: loss curves and schedule traces of the first seed per sampler
  {
    std::map<std::string, const RunResult*> first_by_sampler;
    for (const auto& r : runs)
      if (!first_by_sampler.count(r.sampler)) first_by_sampler[r.sampler] = &r;
    std::vector<svg::Series> loss_series, val_series;
    for (const auto& [s, r] : first_by_sampler) {
      svg::Series ls{s, {}, {}}, vs{s, {}, {}};
      for (const auto& e : r->trace) {
        ls.x.push_back(static_cast<double>(e.epoch));
        ls.y.push_back(e.train_loss);
        vs.x.push_back(static_cast<double>(e.epoch));
        vs.y.push_back(e.val_ap);
      }
      loss_series.push_back(std::move(ls));
      val_series.push_back(std::move(vs));
    }
    write("loss_curves.svg", svg::line_plot("training loss", "epoch", "loss", loss_series));
    write("val_ap.svg", svg::line_plot("validation AP", "epoch", "AP", val_series));

    auto curnm_it = first_by_sampler.find("curnm");
    if (curnm_it != first_by_sampler.end()) {
      std::vector<svg::Series> sched;
      for (const char* key : {"pi", "delta", "alpha", "beta"}) {
        svg::Series s{key, {}, {}};
        for (const auto& e : curnm_it->second->trace) {
          s.x.push_back(static_cast<double>(e.epoch));
          s.y.push_back(std::string(key) == "pi"      ? e.pi
                        : std::string(key) == "delta" ? e.delta
                        : std::string(key) == "alpha" ? e.alpha
                                                      : e.beta);
        }
        sched.push_back(std::move(s));
      }
      write("schedule.svg",
            svg::line_plot("curriculum schedules", "epoch", "value", sched));
    }
  }

  // ablation bars when ablation runs are present (dataset names "ablation/...")
  {
    std::vector<std::string> labels;
    std::vector<double> values;
    std::map<std::string, std::vector<double>> by_arm;
    for (std::size_t i = 0; i < runs.size(); ++i) {
      const auto dir = run_dirs[i];
      const auto pos = dir.find("ablate_");
      if (pos == std::string::npos) continue;
      const auto arm = dir.substr(pos, dir.find('/', pos) - pos);
      by_arm[arm].push_back(runs[i].ap_transductive);
    }
    for (const auto& [arm, vals] : by_arm) {
      labels.push_back(arm);
      values.push_back(mean(vals));
    }
    if (!labels.empty())
      write("ablation.svg", svg::bar_plot("ablation arms (transductive AP)", labels, values));
  }

  log << "report written to " << report_dir.string() << " (" << outcome.written.size()
      << " files)\n";
  return outcome;
}

}  // namespace curnm
