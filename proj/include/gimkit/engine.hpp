#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <utility>
#include <vector>

#include "gimkit/common.hpp"
#include "gimkit/dataset.hpp"
#include "gimkit/estimation.hpp"
#include "gimkit/parallel.hpp"
#include "gimkit/problems.hpp"
#include "gimkit/rng.hpp"

namespace gimkit {

/// The fixed contour pi(u) = 1 - u on [0,1]: the maximally specific
/// possibility contour consistent with Unif(0,1).  The Monte Carlo contour
/// below is this map applied to the bootstrap ECDF of T.
struct UniformContour {
  double operator()(double u) const { return 1.0 - u; }
};

struct TStatistic {
  ProblemSpec::Kind kind;
  double value;  // >= 0 after the clamp rule
};

/// Multinomial bootstrap weights: counts of n uniform draws over {1..n}.
inline WeightVector sample_weights(int n, rng::Engine& stream) {
  return WeightVector(rng::multinomial_counts(stream, n));
}

namespace detail {

// t_bootstrap clamp rule: slack in (-1e-10, 0) is solver noise and clamps to
// zero; anything below that indicates a broken solver and must surface.
constexpr double kBootClampFloor = -1e-10;

inline double clamp_boot_stat(double t) {
  if (t >= 0.0) return t;
  if (t > kBootClampFloor) return 0.0;
  throw NumericalError("bootstrap statistic negative beyond solver slack");
}

/// Whole-dataset risk closure; prefers the problem's fast evaluator.
inline std::function<double(const Vector&)> make_risk_fn(const ProblemSpec& problem,
                                                         const Dataset& data) {
  if (problem.make_risk) return problem.make_risk(data);
  const int n = data.n();
  return [&problem, &data, n](const Vector& theta) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += problem.loss(theta, data.row(i));
    return s / static_cast<double>(n);
  };
}

/// Z-case quadratic form n Psi' S^+ Psi from weighted per-row psi values.
/// `rows` holds psi(theta)' per observation.  S is pseudo-inverted with rank
/// tolerance 1e-10 * (top eigenvalue); a numerically rank-0 S is an error.
inline double z_quadratic_form(const Matrix& rows, const std::vector<int>* w, double wsum) {
  const int n = static_cast<int>(rows.rows()), q = static_cast<int>(rows.cols());
  Vector psi_sum = Vector::Zero(q);
  Matrix s = Matrix::Zero(q, q);
  for (int i = 0; i < n; ++i) {
    const double wi = w ? static_cast<double>((*w)[i]) : 1.0;
    if (wi == 0.0) continue;
    psi_sum += wi * rows.row(i).transpose();
    for (int j = 0; j < q; ++j) {
      const double rj = wi * rows(i, j);
      for (int k = 0; k <= j; ++k) s(j, k) += rj * rows(i, k);
    }
  }
  for (int j = 0; j < q; ++j)
    for (int k = j + 1; k < q; ++k) s(j, k) = s(k, j);
  const Vector psi = psi_sum / wsum;
  s /= wsum;

  Eigen::SelfAdjointEigenSolver<Matrix> es(s);
  const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
  if (!(lmax > 0.0)) throw NumericalError("estimating-function covariance is numerically rank-0");
  const double tol = 1e-10 * lmax;
  Vector inv = Vector::Zero(q);
  for (int j = 0; j < q; ++j)
    if (es.eigenvalues()[j] > tol) inv[j] = 1.0 / es.eigenvalues()[j];
  const Vector proj = es.eigenvectors().transpose() * psi;
  return wsum * proj.dot(inv.asDiagonal() * proj);
}

inline Matrix psi_rows(const ProblemSpec& problem, const Dataset& data, const Vector& theta) {
  Matrix rows(data.n(), problem.dim);
  for (int i = 0; i < data.n(); ++i) rows.row(i) = problem.psi(theta, data.row(i)).transpose();
  return rows;
}

}  // namespace detail

/// Evaluates the observed-data ranking statistic T at arbitrary theta values.
/// Build once per (problem, data, theta_hat); evaluation is const and
/// thread-safe.  M-case: empirical risk gap; Z-case: self-normalized
/// quadratic form (theta_hat plays no role).
class TEvaluator {
 public:
  TEvaluator(const ProblemSpec& problem, const Dataset& data, const Vector& theta_hat)
      : problem_(&problem), data_(&data) {
    if (problem.kind == ProblemSpec::Kind::M) {
      risk_ = detail::make_risk_fn(problem, data);
      risk_hat_ = risk_(theta_hat);
      // Observed-statistic slack band: theta_hat comes from an iterative
      // solver, so a nearby grid point may undercut its risk by up to the
      // solver tolerance.
      slack_ = 1e-8 * (1.0 + std::fabs(risk_hat_));
    }
  }

  double risk_at_theta_hat() const { return risk_hat_; }

  TStatistic operator()(const Vector& theta) const {
    if (problem_->kind == ProblemSpec::Kind::M) {
      const double t = risk_(theta) - risk_hat_;
      if (t < -slack_)
        throw NumericalError("risk gap negative beyond solver tolerance; estimator is off");
      return {ProblemSpec::Kind::M, std::max(t, 0.0)};
    }
    const Matrix rows = detail::psi_rows(*problem_, *data_, theta);
    return {ProblemSpec::Kind::Z,
            detail::z_quadratic_form(rows, nullptr, static_cast<double>(data_->n()))};
  }

 private:
  const ProblemSpec* problem_;
  const Dataset* data_;
  std::function<double(const Vector&)> risk_;
  double risk_hat_ = 0.0;
  double slack_ = 0.0;
};

/// T at a generic theta; theta_hat must be the uniform-weight estimator.
inline TStatistic t_observed(const ProblemSpec& problem, const Dataset& data, const Vector& theta,
                             const Vector& theta_hat) {
  return TEvaluator(problem, data, theta_hat)(theta);
}

/// Convenience overload that computes the uniform-weight estimator itself.
inline TStatistic t_observed(const ProblemSpec& problem, const Dataset& data,
                             const Vector& theta) {
  const EstimateResult est = solve(problem, data, WeightVector::uniform(data.n()));
  if (!est.converged) throw NumericalError("t_observed: estimator did not converge");
  return t_observed(problem, data, theta, est.theta);
}

namespace detail {

struct ReplicateOutcome {
  double stat;
  bool flagged;
  Vector estimate;  // M-case weighted estimator (empty for Z)
};

/// Per-replicate bootstrap statistic machinery, specialized by problem tag so
/// the per-dataset structure (designs, psi rows) is built once.  Thread-safe:
/// all captured state is immutable after construction.
class ReplicateEngine {
 public:
  ReplicateEngine(const ProblemSpec& problem, const Dataset& data, const Vector& theta_hat)
      : problem_(&problem), data_(&data), theta_hat_(theta_hat) {
    if (problem.kind == ProblemSpec::Kind::Z) {
      zrows_ = psi_rows(problem, data, theta_hat);
      return;
    }
    switch (problem.estimator) {
      case EstimatorTag::LeastSquares:
        dtr_design(data, design_, response_);
        break;
      case EstimatorTag::QuantileRegression:
        design_ = data.matrix().leftCols(problem.dim);
        response_ = data.matrix().col(problem.dim);
        break;
      default:
        break;
    }
  }

  ReplicateOutcome run(const WeightVector& w) const {
    if (problem_->kind == ProblemSpec::Kind::Z) {
      const double wsum = static_cast<double>(w.sum());
      return {z_quadratic_form(zrows_, &w.counts, wsum), false, Vector()};
    }
    switch (problem_->estimator) {
      case EstimatorTag::LeastSquares: {
        EstimateResult est = weighted_ls_design(design_, response_, w);
        const double t = design_risk(w, theta_hat_) - est.objective;
        return {clamp_boot_stat(t), est.degenerate, std::move(est.theta)};
      }
      case EstimatorTag::QuantileRegression: {
        SolverOptions opts;
        opts.warm_start = &theta_hat_;
        opts.allow_degenerate = true;
        EstimateResult est = weighted_qr(*data_, w, problem_->tau, opts);
        const double t = qr_risk(w, theta_hat_) - qr_risk(w, est.theta);
        return {clamp_boot_stat(t), est.degenerate || !est.converged, std::move(est.theta)};
      }
      default: {
        SolverOptions opts;
        opts.warm_start = &theta_hat_;
        opts.allow_degenerate = true;
        EstimateResult est = solve(*problem_, *data_, w, opts);
        const double t =
            weighted_risk(*problem_, *data_, w, theta_hat_) - weighted_risk(*problem_, *data_, w, est.theta);
        return {clamp_boot_stat(t), est.degenerate || !est.converged, std::move(est.theta)};
      }
    }
  }

 private:
  double design_risk(const WeightVector& w, const Vector& theta) const {
    double s = 0.0;
    for (Eigen::Index i = 0; i < design_.rows(); ++i) {
      if (w.counts[i] == 0) continue;
      const double r = response_[i] - design_.row(i).dot(theta);
      s += w.counts[i] * r * r;
    }
    return s / static_cast<double>(w.sum());
  }

  double qr_risk(const WeightVector& w, const Vector& theta) const {
    const double slope = 2.0 * problem_->tau - 1.0;
    double s = 0.0;
    for (Eigen::Index i = 0; i < design_.rows(); ++i) {
      if (w.counts[i] == 0) continue;
      const double fit = design_.row(i).dot(theta);
      s += w.counts[i] * (std::fabs(response_[i] - fit) - slope * fit);
    }
    return s / static_cast<double>(w.sum());
  }

  const ProblemSpec* problem_;
  const Dataset* data_;
  Vector theta_hat_;
  Matrix design_;    // M-case regression designs
  Vector response_;
  Matrix zrows_;     // Z-case psi rows at theta_hat
};

}  // namespace detail

/// Bootstrap statistic T^xi(theta_hat) of one weight draw.
inline TStatistic t_bootstrap(const ProblemSpec& problem, const Dataset& data,
                              const WeightVector& w, const Vector& theta_hat) {
  detail::ReplicateEngine eng(problem, data, theta_hat);
  return {problem.kind, eng.run(w).stat};
}

/// The sorted Monte Carlo sample {T^xi_b(theta_hat)}_{b=1..B} approximating
/// G_boot, plus everything needed to reuse it downstream.
struct BootstrapDistribution {
  std::vector<double> stats;  // sorted ascending
  int B = 0;
  Vector theta_hat;
  std::uint64_t seed = 0;
  int flags = 0;  // count of degenerate replicates
  ProblemSpec::Kind kind = ProblemSpec::Kind::M;
  Matrix estimates;  // B x dim replicate estimators (M-case when kept)
};

struct BuildOptions {
  int B = 500;
  std::uint64_t seed = 0;
  int threads = 0;          // 0 = hardware
  bool keep_estimates = true;
};

/// Algorithm core: B independent replicates of t_bootstrap on per-replicate
/// substreams of the master seed.  Deterministic given (data, B, seed) and
/// invariant to the thread count.
inline BootstrapDistribution build_distribution(const ProblemSpec& problem, const Dataset& data,
                                                const BuildOptions& opts = {}) {
  if (opts.B < 1) throw std::domain_error("build_distribution: B must be >= 1");
  problem.validate_data(data);

  const EstimateResult est = solve(problem, data, WeightVector::uniform(data.n()));
  if (!est.converged)
    throw NumericalError("build_distribution: observed-data estimator did not converge");

  BootstrapDistribution dist;
  dist.B = opts.B;
  dist.seed = opts.seed;
  dist.theta_hat = est.theta;
  dist.kind = problem.kind;

  const bool keep = opts.keep_estimates && problem.kind == ProblemSpec::Kind::M;
  if (keep) dist.estimates.resize(opts.B, problem.dim);

  const detail::ReplicateEngine engine(problem, data, est.theta);
  const int n = data.n();
  dist.stats.resize(opts.B);
  std::vector<char> flagged(opts.B, 0);

  parallel_for(
      opts.B,
      [&](long long b) {
        rng::Engine stream(rng::derive_seed(opts.seed, rng::kBootstrapReplicate,
                                            static_cast<std::uint64_t>(b)));
        const WeightVector w = sample_weights(n, stream);
        detail::ReplicateOutcome out = engine.run(w);
        dist.stats[b] = out.stat;
        flagged[b] = out.flagged ? 1 : 0;
        if (keep) dist.estimates.row(b) = out.estimate.transpose();
      },
      opts.threads);

  for (char f : flagged) dist.flags += f;
  std::sort(dist.stats.begin(), dist.stats.end());
  return dist;
}

/// Fraction of bootstrap statistics strictly above t (binary search on the
/// sorted stats).  Ties count against plausibility.
inline double exceedance_fraction(const std::vector<double>& sorted_stats, double t) {
  const auto it = std::upper_bound(sorted_stats.begin(), sorted_stats.end(), t);
  const long long count_gt = std::distance(it, sorted_stats.end());
  return static_cast<double>(count_gt) / static_cast<double>(sorted_stats.size());
}

/// Monte Carlo possibility contour at one theta.
inline double contour_at(const BootstrapDistribution& dist, const ProblemSpec& problem,
                         const Dataset& data, const Vector& theta) {
  const TEvaluator eval(problem, data, dist.theta_hat);
  return exceedance_fraction(dist.stats, eval(theta).value);
}

// ---------------------------------------------------------------------------
// Grids and contour tables
// ---------------------------------------------------------------------------

struct GridAxis {
  double lo = 0.0, hi = 1.0;
  int steps = 2;  // inclusive endpoints, >= 2
};

class ParameterGrid {
 public:
  explicit ParameterGrid(std::vector<GridAxis> axes) : axes_(std::move(axes)) {
    if (axes_.empty()) throw std::domain_error("ParameterGrid: no axes");
    size_ = 1;
    for (const auto& a : axes_) {
      if (a.steps < 2) throw std::domain_error("ParameterGrid: each axis needs >= 2 steps");
      if (!(a.hi > a.lo)) throw std::domain_error("ParameterGrid: axis needs hi > lo");
      size_ *= a.steps;
    }
  }

  int dim() const { return static_cast<int>(axes_.size()); }
  long long size() const { return size_; }
  const std::vector<GridAxis>& axes() const { return axes_; }

  double axis_value(int axis, int k) const {
    const GridAxis& a = axes_[axis];
    return a.lo + (a.hi - a.lo) * k / static_cast<double>(a.steps - 1);
  }

  // Row-major odometer: the last axis varies fastest.
  Vector point(long long flat) const {
    Vector p(dim());
    for (int axis = dim() - 1; axis >= 0; --axis) {
      const int steps = axes_[axis].steps;
      p[axis] = axis_value(axis, static_cast<int>(flat % steps));
      flat /= steps;
    }
    return p;
  }

 private:
  std::vector<GridAxis> axes_;
  long long size_ = 0;
};

/// Grid of parameter values with the contour evaluated at each.
struct ContourTable {
  Matrix points;                 // one grid point per row
  std::vector<double> values;    // pi-hat in [0,1]; NaN where missing
  std::vector<double> t_values;  // T at each point (diagnostic)
  std::vector<char> missing;     // fiber-minimization failures (marginals)

  long long size() const { return static_cast<long long>(values.size()); }
};

inline ContourTable contour_grid(const BootstrapDistribution& dist, const ProblemSpec& problem,
                                 const Dataset& data, const ParameterGrid& grid, int threads = 0) {
  const TEvaluator eval(problem, data, dist.theta_hat);
  ContourTable table;
  const long long m = grid.size();
  table.points.resize(m, grid.dim());
  table.values.resize(m);
  table.t_values.resize(m);
  table.missing.assign(m, 0);
  parallel_for(
      m,
      [&](long long i) {
        const Vector p = grid.point(i);
        table.points.row(i) = p.transpose();
        const double t = eval(p).value;
        table.t_values[i] = t;
        table.values[i] = exceedance_fraction(dist.stats, t);
      },
      threads);
  return table;
}

// ---------------------------------------------------------------------------
// Possibility calculus on a contour table
// ---------------------------------------------------------------------------

/// Upper probability of a grid assertion: the maximum contour value over the
/// selected points (possibility measures are maxitive).  Empty selection: 0.
template <typename Pred>
double upper_probability(const ContourTable& table, Pred&& assert_pred) {
  double m = 0.0;
  for (long long i = 0; i < table.size(); ++i) {
    if (table.missing[i]) continue;
    if (assert_pred(static_cast<ConstRowRef>(table.points.row(i).transpose()), i))
      m = std::max(m, table.values[i]);
  }
  return m;
}

/// Lower probability by conjugacy: 1 - upper(complement).
template <typename Pred>
double lower_probability(const ContourTable& table, Pred&& assert_pred) {
  return 1.0 - upper_probability(table, [&](ConstRowRef p, long long i) {
           return !assert_pred(p, i);
         });
}

/// The alpha level set of the contour over the grid.
struct PlausibilityRegion {
  double alpha = 0.0;
  std::vector<long long> members;                    // indices into the table
  std::vector<std::pair<double, double>> intervals;  // 1-D connected components
};

inline PlausibilityRegion plausibility_region(const ContourTable& table, double alpha) {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw std::domain_error("plausibility_region: alpha in [0,1]");
  PlausibilityRegion region;
  region.alpha = alpha;
  for (long long i = 0; i < table.size(); ++i)
    if (!table.missing[i] && table.values[i] > alpha) region.members.push_back(i);
  if (table.points.cols() == 1) {
    // Grid order is ascending in 1-D, so components are index runs.
    for (std::size_t k = 0; k < region.members.size();) {
      std::size_t j = k;
      while (j + 1 < region.members.size() && region.members[j + 1] == region.members[j] + 1) ++j;
      region.intervals.emplace_back(table.points(region.members[k], 0),
                                    table.points(region.members[j], 0));
      k = j + 1;
    }
  }
  return region;
}

// ---------------------------------------------------------------------------
// Default grid construction
// ---------------------------------------------------------------------------

/// Coordinate-wise bootstrap standard errors of the estimator.  Reuses the
/// replicate estimates when the distribution kept them; otherwise runs a
/// dedicated resampling pass on its own substream.
inline Vector bootstrap_standard_errors(const BootstrapDistribution& dist,
                                        const ProblemSpec& problem, const Dataset& data,
                                        int threads = 0) {
  const int d = problem.dim;
  Matrix est;
  if (dist.estimates.rows() > 1) {
    est = dist.estimates;
  } else {
    const int b_se = 200;
    est.resize(b_se, d);
    const Vector theta_hat = dist.theta_hat;
    parallel_for(
        b_se,
        [&](long long b) {
          rng::Engine stream(rng::derive_seed(dist.seed, rng::kStdErrBootstrap,
                                              static_cast<std::uint64_t>(b)));
          const WeightVector w = sample_weights(data.n(), stream);
          SolverOptions opts;
          opts.warm_start = &theta_hat;
          opts.allow_degenerate = true;
          est.row(b) = solve(problem, data, w, opts).theta.transpose();
        },
        threads);
  }
  Vector se(d);
  const double rows = static_cast<double>(est.rows());
  for (int j = 0; j < d; ++j) {
    const double mean = est.col(j).mean();
    se[j] = std::sqrt((est.col(j).array() - mean).square().sum() / (rows - 1.0));
  }
  return se;
}

/// theta_hat +/- half_width bootstrap standard errors, `steps` points per
/// axis.  Collapsed axes (zero spread) get a tiny synthetic span.
inline std::vector<GridAxis> default_grid_axes(const BootstrapDistribution& dist,
                                               const ProblemSpec& problem, const Dataset& data,
                                               int steps = 401, double half_width = 6.0,
                                               int threads = 0) {
  const Vector se = bootstrap_standard_errors(dist, problem, data, threads);
  std::vector<GridAxis> axes(problem.dim);
  for (int j = 0; j < problem.dim; ++j) {
    const double c = dist.theta_hat[j];
    const double h = std::max(half_width * se[j], 1e-6 * (1.0 + std::fabs(c)));
    axes[j] = GridAxis{c - h, c + h, steps};
  }
  return axes;
}

// ---------------------------------------------------------------------------
// Marginal contours (extension principle)
// ---------------------------------------------------------------------------

namespace detail {

/// Minimizes T over the affine fiber {theta : a'theta + c = phi0} by direct
/// search in the constraint-parameterized subspace, 10 restarts.
inline double affine_fiber_min_t(const TEvaluator& eval, const Vector& a, double c, double phi0,
                                 const Vector& center, const Vector& scale, std::uint64_t seed,
                                 std::uint64_t index) {
  const int p = static_cast<int>(a.size());
  const double a2 = a.squaredNorm();
  if (!(a2 > 0.0)) throw std::domain_error("affine feature has zero gradient");
  const Vector particular = center + a * ((phi0 - c - a.dot(center)) / a2);
  if (p == 1) return eval(particular).value;

  // Orthonormal basis of the null space of a'.
  Matrix m(p, 1);
  m.col(0) = a;
  Eigen::HouseholderQR<Matrix> qr(m);
  const Matrix q = qr.householderQ();
  const Matrix null_basis = q.rightCols(p - 1);

  const auto objective = [&](const Vector& s) { return eval(particular + null_basis * s).value; };
  const double sscale = std::max(scale.norm(), 1e-8);
  Vector steps = Vector::Constant(p - 1, 0.5 * sscale);

  rng::Engine eng(rng::derive_seed(seed, rng::kRestart, index));
  double best = std::numeric_limits<double>::infinity();
  for (int r = 0; r < 10; ++r) {
    Vector s0 = Vector::Zero(p - 1);
    if (r > 0)
      for (int j = 0; j < p - 1; ++j) s0[j] = sscale * eng.normal();
    optimize::NelderMeadOptions nm;
    nm.max_evals = 400 * (p - 1);
    nm.ftol = 1e-11;
    const auto res = optimize::nelder_mead(objective, s0, steps, nm);
    best = std::min(best, res.f);
  }
  return best;
}

}  // namespace detail

/// Marginal possibility contour for a scalar feature phi(theta): for each
/// phi0 on the grid, the exceedance fraction at T* = min over the fiber
/// {phi(theta) = phi0} of T.  Because the contour is a nonincreasing step
/// function of T, this equals the supremum of the joint contour over the
/// fiber.  Fiber-minimization failures become flagged missing values.
inline ContourTable marginal_contour(const BootstrapDistribution& dist, const ProblemSpec& problem,
                                     const Dataset& data, const FeatureMap& feature,
                                     const std::vector<double>& phi_grid, int threads = 0) {
  if (phi_grid.empty()) throw std::domain_error("marginal_contour: empty grid");
  if (!feature.fiber_min && !feature.affine)
    throw std::invalid_argument("marginal_contour: non-affine features need fiber_min");

  const TEvaluator eval(problem, data, dist.theta_hat);
  Vector scale;
  if (feature.affine) scale = bootstrap_standard_errors(dist, problem, data, threads);

  ContourTable table;
  const long long m = static_cast<long long>(phi_grid.size());
  table.points.resize(m, 1);
  table.values.assign(m, std::numeric_limits<double>::quiet_NaN());
  table.t_values.assign(m, std::numeric_limits<double>::quiet_NaN());
  table.missing.assign(m, 0);

  parallel_for(
      m,
      [&](long long i) {
        const double phi0 = phi_grid[i];
        table.points(i, 0) = phi0;
        try {
          double tstar;
          if (feature.fiber_min) {
            const Vector theta_star = feature.fiber_min(data, phi0);
            tstar = eval(theta_star).value;
          } else {
            tstar = detail::affine_fiber_min_t(eval, feature.affine->first,
                                               feature.affine->second, phi0, dist.theta_hat,
                                               scale, dist.seed, static_cast<std::uint64_t>(i));
          }
          table.t_values[i] = tstar;
          table.values[i] = exceedance_fraction(dist.stats, tstar);
        } catch (const NumericalError&) {
          table.missing[i] = 1;
        }
      },
      threads);
  return table;
}

// ---------------------------------------------------------------------------
// Exhaustive small-n bootstrap (test oracle)
// ---------------------------------------------------------------------------

/// Exact distribution of T^xi(theta_hat) by enumerating all weak compositions
/// of n into n parts with their multinomial probabilities.  The paper notes
/// the n^n-term sum is impractical at scale; for n <= 7 it is the exact
/// oracle the Monte Carlo approximation is tested against.
struct ExactBootstrap {
  std::vector<double> atoms;  // sorted distinct statistic values
  std::vector<double> probs;  // matching probabilities, sums to 1

  double cdf(double t) const {
    double s = 0.0;
    for (std::size_t i = 0; i < atoms.size() && atoms[i] <= t; ++i) s += probs[i];
    return s;
  }
};

inline ExactBootstrap exact_bootstrap(const ProblemSpec& problem, const Dataset& data) {
  const int n = data.n();
  if (n > 7) throw std::domain_error("exact_bootstrap: refused for n > 7");
  const EstimateResult est = solve(problem, data, WeightVector::uniform(n));
  if (!est.converged) throw NumericalError("exact_bootstrap: estimator did not converge");
  const detail::ReplicateEngine engine(problem, data, est.theta);

  double log_nn = n * std::log(static_cast<double>(n));
  double log_nfact = std::lgamma(n + 1.0);

  std::vector<std::pair<double, double>> outcomes;  // (stat, prob)
  std::vector<int> xi(n, 0);
  // Recursive enumeration of compositions xi_1 + ... + xi_n = n.
  std::function<void(int, int)> recurse = [&](int pos, int remaining) {
    if (pos == n - 1) {
      xi[pos] = remaining;
      double log_coef = log_nfact - log_nn;
      for (int c : xi) log_coef -= std::lgamma(c + 1.0);
      const WeightVector w{std::vector<int>(xi)};
      outcomes.emplace_back(engine.run(w).stat, std::exp(log_coef));
      return;
    }
    for (int c = 0; c <= remaining; ++c) {
      xi[pos] = c;
      recurse(pos + 1, remaining - c);
    }
  };
  recurse(0, n);

  std::sort(outcomes.begin(), outcomes.end());
  ExactBootstrap out;
  for (const auto& [stat, prob] : outcomes) {
    if (!out.atoms.empty() && out.atoms.back() == stat) {
      out.probs.back() += prob;
    } else {
      out.atoms.push_back(stat);
      out.probs.push_back(prob);
    }
  }
  return out;
}

}  // namespace gimkit
