#pragma once

#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "gimkit/engine.hpp"
#include "gimkit/features.hpp"
#include "gimkit/mathutil.hpp"

namespace gimkit {

// ---------------------------------------------------------------------------
// Data generators with analytically known inferential targets
// ---------------------------------------------------------------------------

struct Generator {
  std::string name;
  ProblemSpec problem;
  Vector truth;  // theta(P), exact given the generator parameters
  std::function<Dataset(int, rng::Engine&)> make;
};

inline Dataset generate(const Generator& gen, int n, rng::Engine& stream) {
  if (n < 1) throw std::domain_error("generate: n must be >= 1");
  return gen.make(n, stream);
}

inline Generator gamma_quantile_generator(double shape, double rate, double tau) {
  if (shape <= 0.0 || rate <= 0.0) throw std::domain_error("gamma generator: invalid parameters");
  Generator g;
  g.name = "gamma(" + std::to_string(shape) + "," + std::to_string(rate) + ") tau=" + std::to_string(tau);
  g.problem = quantile_problem(tau);
  g.truth = Vector::Constant(1, mathutil::gamma_quantile(tau, shape, rate));
  g.make = [shape, rate](int n, rng::Engine& eng) {
    std::vector<double> z(n);
    for (int i = 0; i < n; ++i) z[i] = eng.gamma(shape) / rate;
    return Dataset::from_scalars(z);
  };
  return g;
}

inline Generator cauchy_quantile_generator(double loc, double scale, double tau) {
  if (scale <= 0.0) throw std::domain_error("cauchy generator: scale must be positive");
  Generator g;
  g.name = "cauchy(" + std::to_string(loc) + "," + std::to_string(scale) + ") tau=" + std::to_string(tau);
  g.problem = quantile_problem(tau);
  g.truth = Vector::Constant(1, loc + scale * std::tan(M_PI * (tau - 0.5)));
  g.make = [loc, scale](int n, rng::Engine& eng) {
    std::vector<double> z(n);
    for (int i = 0; i < n; ++i) z[i] = eng.cauchy(loc, scale);
    return Dataset::from_scalars(z);
  };
  return g;
}

/// Bivariate normal with unit variances; the spatial median of an
/// elliptically symmetric distribution is its center.
inline Generator bvn_spatial_median_generator(double mean1, double mean2, double corr) {
  if (!(corr > -1.0 && corr < 1.0)) throw std::domain_error("bvn generator: |corr| must be < 1");
  Generator g;
  g.name = "bvn mean=(" + std::to_string(mean1) + "," + std::to_string(mean2) + ") corr=" + std::to_string(corr);
  g.problem = spatial_median_problem(2);
  g.truth = Vector(2);
  g.truth << mean1, mean2;
  g.make = [mean1, mean2, corr](int n, rng::Engine& eng) {
    RowMatrix m(n, 2);
    const double s = std::sqrt(1.0 - corr * corr);
    for (int i = 0; i < n; ++i) {
      const double e1 = eng.normal(), e2 = eng.normal();
      m(i, 0) = mean1 + e1;
      m(i, 1) = mean2 + corr * e1 + s * e2;
    }
    return Dataset(std::move(m));
  };
  return g;
}

/// Heteroscedastic regression: X ~ Unif(0,4), Y = 4 + 0.1X + N(0,(0.1+0.1X)^2).
/// The conditional tau-quantile is linear in (1, x) with coefficients
/// (4 + 0.1 z_tau, 0.1 + 0.1 z_tau).
inline Generator qr_dgp_generator(double tau) {
  Generator g;
  g.name = "qr-dgp tau=" + std::to_string(tau);
  g.problem = quantile_regression_problem(2, tau);
  const double z_tau = mathutil::normal_quantile(tau);
  g.truth = Vector(2);
  g.truth << 4.0 + 0.1 * z_tau, 0.1 + 0.1 * z_tau;
  g.make = [](int n, rng::Engine& eng) {
    RowMatrix m(n, 3);
    for (int i = 0; i < n; ++i) {
      const double x = eng.uniform(0.0, 4.0);
      m(i, 0) = 1.0;
      m(i, 1) = x;
      m(i, 2) = 4.0 + 0.1 * x + (0.1 + 0.1 * x) * eng.normal();
    }
    return Dataset(std::move(m));
  };
  return g;
}

/// Hypertension observational study: baseline pressure truncated to
/// (140, 200] by rejection, logistic treatment assignment, outcome mean
/// mu(x,a) = -15 - 0.2 x1 + 12 x2 + a(-65 + 0.5 x1 - 5.5 x2), noise sd 3.
inline Generator dtr_dgp_generator() {
  Generator g;
  g.name = "dtr-dgp";
  g.problem = dtr_problem();
  g.truth = Vector(6);
  g.truth << -15.0, -0.2, 12.0, -65.0, 0.5, -5.5;
  g.make = [](int n, rng::Engine& eng) {
    RowMatrix m(n, 4);
    for (int i = 0; i < n; ++i) {
      const double y0 = eng.truncated_normal(160.0, 12.0, 140.0, 200.0);
      const double x1 = eng.normal(211.0, 45.0);
      const double x2 = eng.normal(4.2, 0.35);
      const double lin = -16.348 + 0.078 * y0 + 0.017 * x1;
      const double a = eng.bernoulli(1.0 / (1.0 + std::exp(-lin)));
      const double mu = -15.0 - 0.2 * x1 + 12.0 * x2 + a * (-65.0 + 0.5 * x1 - 5.5 * x2);
      m(i, 0) = x1;
      m(i, 1) = x2;
      m(i, 2) = a;
      m(i, 3) = mu + 3.0 * eng.normal();  // change in blood pressure y0 - y6
    }
    return Dataset(std::move(m));
  };
  return g;
}

// ---------------------------------------------------------------------------
// Repeated-sampling experiments
// ---------------------------------------------------------------------------

struct SimulationReport {
  std::string label;
  int replications = 0;
  std::vector<double> contour_at_truth;  // one value per replication (GIM runs)
  double ks_to_uniform = std::numeric_limits<double>::quiet_NaN();
  double coverage = std::numeric_limits<double>::quiet_NaN();
  double mean_length = std::numeric_limits<double>::quiet_NaN();
  int failures = 0;
};

struct ExperimentOptions {
  int n = 100;
  int B = 500;
  int M = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  int threads = 0;
};

/// Repeats: draw a dataset, build the bootstrap IM, evaluate the contour at
/// the generator's true target.  Reports the ECDF sample and its
/// Kolmogorov-Smirnov distance to Unif(0,1).  Per-replication engine errors
/// are counted, not fatal.
inline SimulationReport uniformity_experiment(const Generator& gen, const ExperimentOptions& opts) {
  SimulationReport rep;
  rep.label = gen.name;
  rep.replications = opts.M;
  std::vector<double> values(opts.M, std::numeric_limits<double>::quiet_NaN());
  std::vector<char> failed(opts.M, 0);

  parallel_for(
      opts.M,
      [&](long long m) {
        try {
          rng::Engine data_eng(rng::derive_seed(opts.seed, rng::kDatasetReplication, m));
          const Dataset data = gen.make(opts.n, data_eng);
          BuildOptions bo;
          bo.B = opts.B;
          bo.seed = rng::derive_seed(opts.seed, rng::kBootstrapMaster, m);
          bo.threads = 1;
          bo.keep_estimates = false;
          const BootstrapDistribution dist = build_distribution(gen.problem, data, bo);
          values[m] = contour_at(dist, gen.problem, data, gen.truth);
        } catch (const NumericalError&) {
          failed[m] = 1;
        }
      },
      opts.threads);

  for (long long m = 0; m < opts.M; ++m) {
    if (failed[m]) {
      ++rep.failures;
    } else {
      rep.contour_at_truth.push_back(values[m]);
    }
  }
  if (!rep.contour_at_truth.empty())
    rep.ks_to_uniform = mathutil::ks_to_uniform(rep.contour_at_truth);
  return rep;
}

// ---------------------------------------------------------------------------
// Baseline intervals for quantiles
// ---------------------------------------------------------------------------

struct Interval {
  double lo = 0.0, hi = 0.0;
  bool warned = false;  // order-statistic bounds were exhausted
  double length() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x <= hi; }
};

/// Exact-but-conservative order-statistic interval [z_(l), z_(u)] read off
/// the Binomial(n, tau) CDF; coverage >= 1 - alpha by construction.  Discrete
/// cut-point ties round outward.  If n is too small for the level, the widest
/// order-statistic interval is returned with a warning flag.
inline Interval conservative_interval(const Dataset& data, double tau, double alpha) {
  if (data.dim() != 1) throw std::domain_error("conservative_interval: scalar data required");
  if (!(tau > 0.0 && tau < 1.0)) throw std::domain_error("conservative_interval: tau in (0,1)");
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("conservative_interval: alpha in (0,1)");
  const int n = data.n();
  std::vector<double> z(n);
  for (int i = 0; i < n; ++i) z[i] = data.matrix()(i, 0);
  std::sort(z.begin(), z.end());

  Interval interval;
  if (n < 2) {
    interval.lo = z.front();
    interval.hi = z.back();
    interval.warned = true;
    return interval;
  }

  int l = 0;  // largest k with P{Bin < k} <= alpha/2
  for (int k = 1; k <= n; ++k)
    if (mathutil::binomial_cdf(n, tau, k - 1) <= alpha / 2.0) l = k;
  int u = n + 1;  // smallest k with P{Bin >= k} <= alpha/2
  for (int k = n; k >= 1; --k) {
    if (1.0 - mathutil::binomial_cdf(n, tau, k - 1) <= alpha / 2.0)
      u = k;
    else
      break;
  }
  if (l < 1 || u > n || l >= u) {
    interval.lo = z.front();
    interval.hi = z.back();
    interval.warned = true;
    return interval;
  }
  interval.lo = z[l - 1];
  interval.hi = z[u - 1];
  return interval;
}

/// Basic percentile bootstrap: B resampled tau-quantiles; the endpoints are
/// the alpha/2 and 1-alpha/2 order statistics of the replicate quantiles.
inline Interval percentile_boot_interval(const Dataset& data, double tau, int B, double alpha,
                                         std::uint64_t seed) {
  if (B < 1) throw std::domain_error("percentile_boot_interval: B must be >= 1");
  std::vector<double> q(B);
  for (int b = 0; b < B; ++b) {
    rng::Engine stream(rng::derive_seed(seed, rng::kPercentileBootstrap, b));
    q[b] = weighted_quantile(data, sample_weights(data.n(), stream), tau);
  }
  std::sort(q.begin(), q.end());
  auto order_stat = [&](double p) {
    int k = static_cast<int>(std::ceil(p * B));
    k = std::min(std::max(k, 1), B);
    return q[k - 1];
  };
  Interval interval;
  interval.lo = order_stat(alpha / 2.0);
  interval.hi = order_stat(1.0 - alpha / 2.0);
  return interval;
}

// ---------------------------------------------------------------------------
// Coverage experiment (Table-1 style)
// ---------------------------------------------------------------------------

enum class IntervalMethod { Gim, Conservative, PercentileBoot };

inline const char* interval_method_name(IntervalMethod m) {
  switch (m) {
    case IntervalMethod::Gim: return "gim";
    case IntervalMethod::Conservative: return "conservative";
    case IntervalMethod::PercentileBoot: return "percentile-boot";
  }
  return "?";
}

/// Per-replication interval for a scalar target; aggregates coverage and mean
/// length.  The GIM interval is the connected hull of the contour level set
/// on the default grid; its coverage indicator is the region-duality rule
/// contour_at(truth) > alpha, exactly.
inline SimulationReport coverage_experiment(const Generator& gen, const ExperimentOptions& opts,
                                            IntervalMethod method) {
  if (gen.problem.dim != 1)
    throw std::domain_error("coverage_experiment: scalar targets only");
  SimulationReport rep;
  rep.label = gen.name + " / " + interval_method_name(method);
  rep.replications = opts.M;
  const double truth = gen.truth[0];

  std::vector<char> covered(opts.M, 0), failed(opts.M, 0);
  std::vector<double> lengths(opts.M, 0.0);
  std::vector<double> values(opts.M, std::numeric_limits<double>::quiet_NaN());

  parallel_for(
      opts.M,
      [&](long long m) {
        try {
          rng::Engine data_eng(rng::derive_seed(opts.seed, rng::kDatasetReplication, m));
          const Dataset data = gen.make(opts.n, data_eng);
          switch (method) {
            case IntervalMethod::Gim: {
              BuildOptions bo;
              bo.B = opts.B;
              bo.seed = rng::derive_seed(opts.seed, rng::kBootstrapMaster, m);
              bo.threads = 1;
              const BootstrapDistribution dist = build_distribution(gen.problem, data, bo);
              const auto axes = default_grid_axes(dist, gen.problem, data, 401, 6.0, 1);
              const ContourTable table = contour_grid(dist, gen.problem, data, ParameterGrid(axes), 1);
              const PlausibilityRegion region = plausibility_region(table, opts.alpha);
              if (!region.intervals.empty())
                lengths[m] = region.intervals.back().second - region.intervals.front().first;
              values[m] = contour_at(dist, gen.problem, data, gen.truth);
              covered[m] = values[m] > opts.alpha ? 1 : 0;
              break;
            }
            case IntervalMethod::Conservative: {
              const Interval ci = conservative_interval(data, gen.problem.tau, opts.alpha);
              covered[m] = ci.contains(truth) ? 1 : 0;
              lengths[m] = ci.length();
              break;
            }
            case IntervalMethod::PercentileBoot: {
              const Interval ci = percentile_boot_interval(
                  data, gen.problem.tau, opts.B, opts.alpha,
                  rng::derive_seed(opts.seed, rng::kPercentileBootstrap, m));
              covered[m] = ci.contains(truth) ? 1 : 0;
              lengths[m] = ci.length();
              break;
            }
          }
        } catch (const NumericalError&) {
          failed[m] = 1;
        }
      },
      opts.threads);

  long long ok = 0, cov = 0;
  double len = 0.0;
  for (long long m = 0; m < opts.M; ++m) {
    if (failed[m]) {
      ++rep.failures;
      continue;
    }
    ++ok;
    cov += covered[m];
    len += lengths[m];
    if (std::isfinite(values[m])) rep.contour_at_truth.push_back(values[m]);
  }
  if (ok > 0) {
    rep.coverage = static_cast<double>(cov) / static_cast<double>(ok);
    rep.mean_length = len / static_cast<double>(ok);
  }
  if (!rep.contour_at_truth.empty())
    rep.ks_to_uniform = mathutil::ks_to_uniform(rep.contour_at_truth);
  return rep;
}

// ---------------------------------------------------------------------------
// Treatment-regime experiment
// ---------------------------------------------------------------------------

struct DtrExperimentResult {
  SimulationReport report;  // contour-at-truth uniformity over M replications
  Vector theta_hat;         // estimator on the held dataset
  std::vector<std::pair<std::string, ContourTable>> marginals;  // held-dataset feature contours
};

/// Repeats the hypertension DGP for the uniformity check and, on one held
/// dataset, emits marginal contours for the treatment effect, both fixed
/// regime values, their difference, and the optimal-regime value.  The grids
/// for the treatment effect and the value difference include 0 so the null
/// assertions can be read off directly.
inline DtrExperimentResult dtr_experiment(const ExperimentOptions& opts, double threshold = 120.0,
                                          int marginal_steps = 201) {
  const Generator gen = dtr_dgp_generator();
  DtrExperimentResult result;
  result.report = uniformity_experiment(gen, opts);

  rng::Engine held_eng(rng::derive_seed(opts.seed, rng::kHeldDataset, 0));
  const Dataset held = gen.make(opts.n, held_eng);
  BuildOptions bo;
  bo.B = opts.B;
  bo.seed = rng::derive_seed(opts.seed, rng::kHeldDataset, 1);
  bo.threads = opts.threads;
  const BootstrapDistribution dist = build_distribution(gen.problem, held, bo);
  result.theta_hat = dist.theta_hat;

  const DtrFeature features[] = {DtrFeature::TreatmentEffect, DtrFeature::ValueStatic,
                                 DtrFeature::ValueCd, DtrFeature::ValueDiff,
                                 DtrFeature::ValueOptimal};
  for (DtrFeature f : features) {
    const FeatureMap fm = dtr_feature_map(f, held, threshold);
    // Center the grid at phi(theta_hat), span +/- 6 bootstrap SEs of phi.
    const double center = fm(dist.theta_hat);
    std::vector<double> phis(dist.estimates.rows());
    for (Eigen::Index b = 0; b < dist.estimates.rows(); ++b)
      phis[b] = fm(dist.estimates.row(b).transpose());
    double mean = 0.0;
    for (double v : phis) mean += v;
    mean /= phis.size();
    double var = 0.0;
    for (double v : phis) var += (v - mean) * (v - mean);
    const double se = std::sqrt(var / (phis.size() - 1.0));
    const double h = std::max(6.0 * se, 1e-6 * (1.0 + std::fabs(center)));

    std::vector<double> grid(marginal_steps);
    for (int k = 0; k < marginal_steps; ++k)
      grid[k] = center - h + 2.0 * h * k / (marginal_steps - 1.0);
    if (f == DtrFeature::TreatmentEffect || f == DtrFeature::ValueDiff) {
      grid.push_back(0.0);
      std::sort(grid.begin(), grid.end());
      grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    }
    result.marginals.emplace_back(fm.name,
                                  marginal_contour(dist, gen.problem, held, fm, grid, opts.threads));
  }
  return result;
}

}  // namespace gimkit
