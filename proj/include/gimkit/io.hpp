#pragma once

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gimkit/engine.hpp"
#include "gimkit/lab.hpp"

namespace gimkit {

using json = nlohmann::json;

namespace io {

/// Full-precision decimal form that round-trips the double exactly.
inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace io

/// Contour CSV: optional '#' comment lines (run configuration), then
/// theta_1..theta_p,contour.
inline void write_contour_csv(std::ostream& out, const ContourTable& table,
                              const std::vector<std::string>& comments = {}) {
  for (const auto& c : comments) out << "# " << c << "\n";
  const int p = static_cast<int>(table.points.cols());
  for (int j = 0; j < p; ++j) out << "theta_" << (j + 1) << ",";
  out << "contour\n";
  for (long long i = 0; i < table.size(); ++i) {
    for (int j = 0; j < p; ++j) out << io::format_double(table.points(i, j)) << ",";
    if (table.missing[i])
      out << "nan\n";
    else
      out << io::format_double(table.values[i]) << "\n";
  }
}

inline json distribution_to_json(const BootstrapDistribution& dist) {
  json j;
  j["B"] = dist.B;
  j["seed"] = dist.seed;
  j["theta_hat"] = std::vector<double>(dist.theta_hat.data(),
                                       dist.theta_hat.data() + dist.theta_hat.size());
  j["flags"] = dist.flags;
  j["stats"] = dist.stats;
  return j;
}

/// Region JSON: {alpha, intervals} in one dimension, {alpha, members} above.
inline json region_to_json(const PlausibilityRegion& region, const ContourTable& table) {
  json j;
  j["alpha"] = region.alpha;
  if (table.points.cols() == 1) {
    json intervals = json::array();
    for (const auto& [lo, hi] : region.intervals) intervals.push_back({lo, hi});
    j["intervals"] = intervals;
  } else {
    json members = json::array();
    for (long long idx : region.members) {
      json pt = json::array();
      for (int c = 0; c < table.points.cols(); ++c) pt.push_back(table.points(idx, c));
      members.push_back(pt);
    }
    j["members"] = members;
  }
  return j;
}

inline json report_to_json(const SimulationReport& rep) {
  json j;
  j["label"] = rep.label;
  j["replications"] = rep.replications;
  j["failures"] = rep.failures;
  if (!rep.contour_at_truth.empty()) j["contour_at_truth"] = rep.contour_at_truth;
  if (std::isfinite(rep.ks_to_uniform)) j["ks_to_uniform"] = rep.ks_to_uniform;
  if (std::isfinite(rep.coverage)) j["coverage"] = rep.coverage;
  if (std::isfinite(rep.mean_length)) j["mean_length"] = rep.mean_length;
  return j;
}

/// ECDF of the contour-at-truth sample as CSV columns (u, ecdf).
inline void write_ecdf_csv(std::ostream& out, std::vector<double> values,
                           const std::vector<std::string>& comments = {}) {
  for (const auto& c : comments) out << "# " << c << "\n";
  out << "u,ecdf\n";
  std::sort(values.begin(), values.end());
  const double m = static_cast<double>(values.size());
  for (std::size_t i = 0; i < values.size(); ++i)
    out << io::format_double(values[i]) << "," << io::format_double((i + 1) / m) << "\n";
}

/// Markdown table in the coverage-with-length layout: one row per tau, one
/// column per method, cells like "0.95 (0.62)".
inline std::string coverage_markdown_table(
    const std::vector<double>& taus, const std::vector<std::string>& method_names,
    const std::vector<std::vector<SimulationReport>>& reports /* [tau][method] */) {
  std::string out = "| tau |";
  for (const auto& m : method_names) out += " " + m + " |";
  out += "\n|-----|";
  for (std::size_t k = 0; k < method_names.size(); ++k) out += "------|";
  out += "\n";
  char buf[64];
  for (std::size_t t = 0; t < taus.size(); ++t) {
    std::snprintf(buf, sizeof(buf), "| %.2f |", taus[t]);
    out += buf;
    for (const auto& rep : reports[t]) {
      std::snprintf(buf, sizeof(buf), " %.2f (%.2f) |", rep.coverage, rep.mean_length);
      out += buf;
    }
    out += "\n";
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << content;
}

}  // namespace gimkit
