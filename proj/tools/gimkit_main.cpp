// gimkit command-line interface: contour and marginal inference runs plus the
// simulation experiments.  Batch only; every output file embeds the full run
// configuration so a run is reproducible from its artifacts alone.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "gimkit/features.hpp"
#include "gimkit/io.hpp"
#include "gimkit/lab.hpp"

namespace fs = std::filesystem;
using namespace gimkit;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitNumerical = 3;

struct RunConfig {
  std::string command;
  std::string problem;
  std::string experiment;
  std::vector<std::string> features;
  double tau = 0.5;
  int B = 500;
  std::uint64_t seed = 0;
  std::string grid;  // per-axis lo:hi:steps, comma separated; empty = default
  double alpha = 0.05;
  double threshold = 120.0;
  std::string input;
  std::string out;
  int M = 1000;
  int n = 100;
  int threads = 0;

  json to_json() const {
    json j;
    j["command"] = command;
    if (!problem.empty()) j["problem"] = problem;
    if (!experiment.empty()) j["experiment"] = experiment;
    if (!features.empty()) j["features"] = features;
    j["tau"] = tau;
    j["B"] = B;
    j["seed"] = seed;
    if (!grid.empty()) j["grid"] = grid;
    j["alpha"] = alpha;
    j["threshold"] = threshold;
    if (!input.empty()) j["input"] = input;
    j["out"] = out;
    j["M"] = M;
    j["n"] = n;
    j["threads"] = threads;
    return j;
  }

  std::vector<std::string> comment_lines() const {
    std::vector<std::string> lines;
    const json j = to_json();
    for (const auto& [key, value] : j.items()) {
      lines.push_back(key + "=" + (value.is_string() ? value.get<std::string>() : value.dump()));
    }
    return lines;
  }
};

std::uint64_t env_seed() {
  if (const char* s = std::getenv("GIMKIT_SEED")) {
    try {
      return std::stoull(s);
    } catch (const std::exception&) {
      throw std::invalid_argument("GIMKIT_SEED is not a valid integer");
    }
  }
  return 0;
}

std::vector<GridAxis> parse_grid(const std::string& text) {
  std::vector<GridAxis> axes;
  std::stringstream ss(text);
  std::string part;
  while (std::getline(ss, part, ',')) {
    GridAxis axis;
    char c1 = 0, c2 = 0;
    std::istringstream ps(part);
    if (!(ps >> axis.lo >> c1 >> axis.hi >> c2 >> axis.steps) || c1 != ':' || c2 != ':')
      throw std::invalid_argument("bad grid spec '" + part + "', expected lo:hi:steps");
    if (axis.steps < 2) throw std::invalid_argument("grid needs at least 2 steps per axis");
    axes.push_back(axis);
  }
  if (axes.empty()) throw std::invalid_argument("empty grid spec");
  return axes;
}

struct LoadedProblem {
  Dataset data;
  ProblemSpec problem;
};

LoadedProblem load_problem(const RunConfig& cfg) {
  if (cfg.problem == "quantile") {
    Dataset data = read_csv_file(cfg.input, SchemaKind::Plain);
    if (data.dim() != 1) throw SchemaError("quantile problem needs a single column z1");
    return {std::move(data), quantile_problem(cfg.tau)};
  }
  if (cfg.problem == "spatial-median") {
    Dataset data = read_csv_file(cfg.input, SchemaKind::Plain);
    const int q = data.dim();
    return {std::move(data), spatial_median_problem(q)};
  }
  if (cfg.problem == "quantile-regression") {
    Dataset data = read_csv_file(cfg.input, SchemaKind::Regression);
    const int p = data.dim() - 1;
    return {std::move(data), quantile_regression_problem(p, cfg.tau)};
  }
  if (cfg.problem == "dtr") {
    Dataset data = read_csv_file(cfg.input, SchemaKind::Dtr);
    return {std::move(data), dtr_problem()};
  }
  throw std::invalid_argument("unknown problem '" + cfg.problem + "'");
}

void write_json_file(const fs::path& path, json j, const RunConfig& cfg) {
  j["config"] = cfg.to_json();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << j.dump(2) << "\n";
}

json estimate_summary(const BootstrapDistribution& dist, const EstimateResult& est) {
  json j;
  j["theta_hat"] = std::vector<double>(est.theta.data(), est.theta.data() + est.theta.size());
  j["objective"] = est.objective;
  j["iterations"] = est.iterations;
  j["converged"] = est.converged;
  j["flags"] = dist.flags;
  return j;
}

int cmd_contour(const RunConfig& cfg) {
  auto [data, problem] = load_problem(cfg);
  fs::create_directories(cfg.out);

  const EstimateResult est = solve(problem, data, WeightVector::uniform(data.n()));
  BuildOptions bo;
  bo.B = cfg.B;
  bo.seed = cfg.seed;
  bo.threads = cfg.threads;
  const BootstrapDistribution dist = build_distribution(problem, data, bo);

  std::vector<GridAxis> axes;
  if (!cfg.grid.empty()) {
    axes = parse_grid(cfg.grid);
    if (static_cast<int>(axes.size()) != problem.dim)
      throw std::invalid_argument("grid has " + std::to_string(axes.size()) + " axes, problem has " +
                                  std::to_string(problem.dim));
  } else {
    if (problem.dim > 2)
      throw std::invalid_argument(
          "no default grid above 2 parameters; pass --grid or use the marginal command");
    axes = default_grid_axes(dist, problem, data, 401, 6.0, cfg.threads);
  }

  const ContourTable table = contour_grid(dist, problem, data, ParameterGrid(axes), cfg.threads);
  const PlausibilityRegion region = plausibility_region(table, cfg.alpha);

  {
    std::ofstream out(fs::path(cfg.out) / "contour.csv", std::ios::binary);
    write_contour_csv(out, table, cfg.comment_lines());
  }
  write_json_file(fs::path(cfg.out) / "region.json", region_to_json(region, table), cfg);
  write_json_file(fs::path(cfg.out) / "estimate.json", estimate_summary(dist, est), cfg);
  write_json_file(fs::path(cfg.out) / "distribution.json", distribution_to_json(dist), cfg);
  return 0;
}

int cmd_marginal(const RunConfig& cfg) {
  if (cfg.problem != "dtr")
    throw std::invalid_argument("marginal features are defined for --problem dtr");
  auto [data, problem] = load_problem(cfg);
  fs::create_directories(cfg.out);

  BuildOptions bo;
  bo.B = cfg.B;
  bo.seed = cfg.seed;
  bo.threads = cfg.threads;
  const BootstrapDistribution dist = build_distribution(problem, data, bo);

  for (const std::string& fname : cfg.features) {
    DtrFeature which;
    if (fname == "treatment-effect") which = DtrFeature::TreatmentEffect;
    else if (fname == "value-static") which = DtrFeature::ValueStatic;
    else if (fname == "value-cd") which = DtrFeature::ValueCd;
    else if (fname == "value-diff") which = DtrFeature::ValueDiff;
    else if (fname == "value-optimal") which = DtrFeature::ValueOptimal;
    else throw std::invalid_argument("unknown feature '" + fname + "'");

    const FeatureMap fm = dtr_feature_map(which, data, cfg.threshold);
    std::vector<double> grid;
    if (!cfg.grid.empty()) {
      const auto axes = parse_grid(cfg.grid);
      if (axes.size() != 1) throw std::invalid_argument("marginal grids are one-dimensional");
      const ParameterGrid pg({axes[0]});
      for (long long i = 0; i < pg.size(); ++i) grid.push_back(pg.point(i)[0]);
    } else {
      const double center = fm(dist.theta_hat);
      std::vector<double> phis;
      for (Eigen::Index b = 0; b < dist.estimates.rows(); ++b)
        phis.push_back(fm(dist.estimates.row(b).transpose()));
      double mean = 0.0;
      for (double v : phis) mean += v;
      mean /= phis.size();
      double var = 0.0;
      for (double v : phis) var += (v - mean) * (v - mean);
      const double h = std::max(6.0 * std::sqrt(var / (phis.size() - 1.0)),
                                1e-6 * (1.0 + std::fabs(center)));
      for (int k = 0; k < 201; ++k) grid.push_back(center - h + 2.0 * h * k / 200.0);
    }
    const ContourTable table = marginal_contour(dist, problem, data, fm, grid, cfg.threads);
    std::ofstream out(fs::path(cfg.out) / ("marginal_" + fname + ".csv"), std::ios::binary);
    write_contour_csv(out, table, cfg.comment_lines());
  }
  return 0;
}

int cmd_simulate(const RunConfig& cfg) {
  fs::create_directories(cfg.out);
  ExperimentOptions opts;
  opts.n = cfg.n;
  opts.B = cfg.B;
  opts.M = cfg.M;
  opts.alpha = cfg.alpha;
  opts.seed = cfg.seed;
  opts.threads = cfg.threads;

  if (cfg.experiment == "uniformity") {
    Generator gen = cfg.problem == "spatial-median" ? bvn_spatial_median_generator(1.0, 1.0, 0.7)
                    : cfg.problem == "quantile-regression" ? qr_dgp_generator(cfg.tau)
                    : cfg.problem == "dtr" ? dtr_dgp_generator()
                    : gamma_quantile_generator(4.0, 1.0, cfg.tau);
    const SimulationReport rep = uniformity_experiment(gen, opts);
    write_json_file(fs::path(cfg.out) / "report.json", report_to_json(rep), cfg);
    {
      std::ofstream out(fs::path(cfg.out) / "ecdf.csv", std::ios::binary);
      write_ecdf_csv(out, rep.contour_at_truth, cfg.comment_lines());
    }
    char buf[160];
    std::snprintf(buf, sizeof(buf), "| setting | KS | failures |\n|---|---|---|\n| %s | %.4f | %d |\n",
                  rep.label.c_str(), rep.ks_to_uniform, rep.failures);
    write_text_file((fs::path(cfg.out) / "report.md").string(), buf);
    return 0;
  }

  if (cfg.experiment == "coverage") {
    const std::vector<double> taus = {0.25, 0.50, 0.75};
    const std::vector<std::string> methods = {"GIM", "Conservative", "Bootstrap"};
    std::vector<std::vector<SimulationReport>> reports;
    json jall = json::array();
    for (double tau : taus) {
      const Generator gen = cauchy_quantile_generator(2.0, 1.0, tau);
      std::vector<SimulationReport> row;
      for (auto method : {IntervalMethod::Gim, IntervalMethod::Conservative,
                          IntervalMethod::PercentileBoot}) {
        row.push_back(coverage_experiment(gen, opts, method));
        jall.push_back(report_to_json(row.back()));
      }
      std::ofstream out(fs::path(cfg.out) /
                        ("ecdf_tau" + std::to_string(static_cast<int>(tau * 100)) + ".csv"),
                        std::ios::binary);
      write_ecdf_csv(out, row[0].contour_at_truth, cfg.comment_lines());
      reports.push_back(std::move(row));
    }
    json j;
    j["reports"] = jall;
    write_json_file(fs::path(cfg.out) / "report.json", j, cfg);
    write_text_file((fs::path(cfg.out) / "report.md").string(),
                    coverage_markdown_table(taus, methods, reports));
    return 0;
  }

  if (cfg.experiment == "dtr") {
    const DtrExperimentResult result = dtr_experiment(opts, cfg.threshold);
    json j = report_to_json(result.report);
    j["theta_hat"] = std::vector<double>(result.theta_hat.data(),
                                         result.theta_hat.data() + result.theta_hat.size());
    write_json_file(fs::path(cfg.out) / "report.json", j, cfg);
    {
      std::ofstream out(fs::path(cfg.out) / "ecdf.csv", std::ios::binary);
      write_ecdf_csv(out, result.report.contour_at_truth, cfg.comment_lines());
    }
    std::string md = "| setting | KS | failures |\n|---|---|---|\n";
    char buf[160];
    std::snprintf(buf, sizeof(buf), "| %s n=%d | %.4f | %d |\n", result.report.label.c_str(),
                  cfg.n, result.report.ks_to_uniform, result.report.failures);
    md += buf;
    write_text_file((fs::path(cfg.out) / "report.md").string(), md);
    for (const auto& [name, table] : result.marginals) {
      std::ofstream out(fs::path(cfg.out) / ("marginal_" + name + ".csv"), std::ios::binary);
      write_contour_csv(out, table, cfg.comment_lines());
    }
    return 0;
  }

  throw std::invalid_argument("unknown experiment '" + cfg.experiment + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bootstrap-based generalized inferential models for risk minimizers and "
               "estimating-equation roots"};
  app.require_subcommand(1);

  RunConfig cfg;
  try {
    cfg.seed = env_seed();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--B", cfg.B, "bootstrap replicates")->check(CLI::PositiveNumber);
    sub->add_option("--seed", cfg.seed, "master seed (overrides GIMKIT_SEED)");
    sub->add_option("--alpha", cfg.alpha, "plausibility level")->check(CLI::Range(0.0, 1.0));
    sub->add_option("--threads", cfg.threads, "worker cap (0 = hardware)");
    sub->add_option("--out", cfg.out, "output directory")->required();
  };

  CLI::App* contour = app.add_subcommand("contour", "possibility contour, region and estimate");
  contour->add_option("--problem", cfg.problem, "quantile|spatial-median|quantile-regression|dtr")
      ->required();
  contour->add_option("--tau", cfg.tau, "quantile level")->check(CLI::Range(0.0, 1.0));
  contour->add_option("--input", cfg.input, "input CSV")->required();
  contour->add_option("--grid", cfg.grid, "per-axis lo:hi:steps, comma separated");
  contour->add_option("--threshold", cfg.threshold, "cholesterol threshold (mg/dl)");
  add_common(contour);

  CLI::App* marginal = app.add_subcommand("marginal", "marginal contours for regime features");
  marginal->add_option("--problem", cfg.problem, "dtr");
  marginal->add_option("--feature", cfg.features,
                       "treatment-effect|value-static|value-cd|value-diff|value-optimal")
      ->required();
  marginal->add_option("--input", cfg.input, "input CSV (dtr schema)")->required();
  marginal->add_option("--grid", cfg.grid, "feature grid lo:hi:steps");
  marginal->add_option("--threshold", cfg.threshold, "cholesterol threshold (mg/dl)");
  add_common(marginal);

  CLI::App* simulate = app.add_subcommand("simulate", "repeated-sampling experiments");
  simulate->add_option("--experiment", cfg.experiment, "uniformity|coverage|dtr")->required();
  simulate->add_option("--problem", cfg.problem, "generator family for uniformity");
  simulate->add_option("--tau", cfg.tau, "quantile level")->check(CLI::Range(0.0, 1.0));
  simulate->add_option("--M", cfg.M, "replications")->check(CLI::PositiveNumber);
  simulate->add_option("--n", cfg.n, "sample size")->check(CLI::PositiveNumber);
  simulate->add_option("--threshold", cfg.threshold, "cholesterol threshold (mg/dl)");
  add_common(simulate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (contour->parsed()) {
      cfg.command = "contour";
      return cmd_contour(cfg);
    }
    if (marginal->parsed()) {
      cfg.command = "marginal";
      if (cfg.problem.empty()) cfg.problem = "dtr";
      return cmd_marginal(cfg);
    }
    cfg.command = "simulate";
    if (cfg.problem.empty()) cfg.problem = "quantile";
    return cmd_simulate(cfg);
  } catch (const SchemaError& e) {
    std::cerr << "schema error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::domain_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}
