#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "gimkit/common.hpp"
#include "gimkit/dataset.hpp"
#include "gimkit/optimize.hpp"
#include "gimkit/problems.hpp"
#include "gimkit/rng.hpp"

namespace gimkit {

/// Integer resampling weights, one count per observation.  Bootstrap weights
/// sampled by the engine always sum to n; the solvers only require
/// nonnegative entries with at least one positive.
struct WeightVector {
  std::vector<int> counts;

  WeightVector() = default;
  explicit WeightVector(std::vector<int> c) : counts(std::move(c)) { validate(); }

  static WeightVector uniform(int n) { return WeightVector(std::vector<int>(n, 1)); }

  int size() const { return static_cast<int>(counts.size()); }
  long long sum() const { return std::accumulate(counts.begin(), counts.end(), 0LL); }

  void validate() const {
    if (counts.empty()) throw std::domain_error("WeightVector: empty");
    long long s = 0;
    for (int c : counts) {
      if (c < 0) throw std::domain_error("WeightVector: negative count");
      s += c;
    }
    if (s == 0) throw std::domain_error("WeightVector: all weights zero");
  }
};

struct EstimateResult {
  Vector theta;
  double objective = 0.0;  // weighted mean risk (M) or normalized residual norm (Z)
  int iterations = 0;
  bool converged = false;
  bool degenerate = false;  // pseudo-inverse fallback was needed
};

struct SolverOptions {
  double tol = 1e-8;
  int max_iterations = 500;
  bool allow_degenerate = false;     // engine sets this: flag instead of throw
  const Vector* warm_start = nullptr;
};

/// Weighted mean risk sum_i w_i l_theta(z_i) / sum_i w_i.  With bootstrap
/// weights (sum = n) this matches the n^-1-normalized resampled risk.
inline double weighted_risk(const ProblemSpec& problem, const Dataset& data,
                            const WeightVector& w, const Vector& theta) {
  if (w.size() != data.n()) throw std::domain_error("weighted_risk: weight length mismatch");
  double s = 0.0;
  for (int i = 0; i < data.n(); ++i)
    if (w.counts[i] != 0) s += w.counts[i] * problem.loss(theta, data.row(i));
  return s / static_cast<double>(w.sum());
}

// ---------------------------------------------------------------------------
// Quantile
// ---------------------------------------------------------------------------

/// Left-continuous inverse of the weighted ECDF: the smallest data value v
/// with sum_{z_i <= v} w_i >= tau * sum(w).  This is the smallest minimizer
/// of the weighted quantile risk; ties break toward the smaller value.
inline double weighted_quantile(const Dataset& data, const WeightVector& w, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::domain_error("weighted_quantile: tau must be in (0,1)");
  if (data.dim() != 1) throw std::domain_error("weighted_quantile: scalar data required");
  if (w.size() != data.n()) throw std::domain_error("weighted_quantile: weight length mismatch");

  const int n = data.n();
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(),
            [&](int a, int b) { return data.matrix()(a, 0) < data.matrix()(b, 0); });

  const double threshold = tau * static_cast<double>(w.sum());
  long long cum = 0;
  for (int k = 0; k < n; ++k) {
    cum += w.counts[idx[k]];
    if (static_cast<double>(cum) >= threshold) return data.matrix()(idx[k], 0);
  }
  return data.matrix()(idx[n - 1], 0);
}

// ---------------------------------------------------------------------------
// Spatial median (Weiszfeld with the Vardi-Zhang anchor rule)
// ---------------------------------------------------------------------------

inline EstimateResult weiszfeld(const Dataset& data, const WeightVector& w,
                                const SolverOptions& opts = {}) {
  if (w.size() != data.n()) throw std::domain_error("weiszfeld: weight length mismatch");
  const int n = data.n(), q = data.dim();
  const double wsum = static_cast<double>(w.sum());
  constexpr double kAnchorEps = 1e-12;

  // All positive-weight mass on one point: that point is the median.
  {
    int first = -1;
    bool single = true;
    for (int i = 0; i < n; ++i) {
      if (w.counts[i] == 0) continue;
      if (first < 0) {
        first = i;
      } else if ((data.row(i) - data.row(first)).norm() != 0.0) {
        single = false;
        break;
      }
    }
    if (single) {
      EstimateResult r;
      r.theta = data.row(first);
      r.objective = 0.0;
      r.iterations = 0;
      r.converged = true;
      return r;
    }
  }

  Vector x;
  if (opts.warm_start && opts.warm_start->size() == q) {
    x = *opts.warm_start;
  } else {
    x = Vector::Zero(q);
    for (int i = 0; i < n; ++i) x += w.counts[i] * data.row(i);
    x /= wsum;
  }

  EstimateResult res;
  Vector d(n);
  for (int iter = 1; iter <= opts.max_iterations; ++iter) {
    int anchor = -1;
    for (int i = 0; i < n; ++i) {
      d[i] = (data.row(i) - x).norm();
      if (w.counts[i] > 0 && d[i] <= kAnchorEps) anchor = i;
    }

    if (anchor >= 0) {
      // Subgradient optimality at the data point: the pull of the other
      // observations must not exceed the weight sitting at the anchor
      // (summed over coinciding points).
      Vector pull = Vector::Zero(q);
      double lsum = 0.0, wa = 0.0;
      for (int i = 0; i < n; ++i) {
        if (w.counts[i] == 0) continue;
        if (d[i] <= kAnchorEps) {
          wa += w.counts[i];
          continue;
        }
        pull += w.counts[i] * (data.row(i) - x) / d[i];
        lsum += w.counts[i] / d[i];
      }
      const double pn = pull.norm();
      if (pn <= wa) {
        res.theta = data.row(anchor);
        res.objective = std::max(0.0, pn - wa) / wsum;
        res.iterations = iter;
        res.converged = true;
        return res;
      }
      // Step off along the averaged direction (Vardi-Zhang update).
      const Vector t = x + pull / lsum;
      const double beta = std::min(1.0, wa / pn);
      x = (1.0 - beta) * t + beta * x;
      continue;
    }

    Vector resid = Vector::Zero(q);
    Vector num = Vector::Zero(q);
    double den = 0.0;
    for (int i = 0; i < n; ++i) {
      if (w.counts[i] == 0) continue;
      const double c = w.counts[i] / d[i];
      resid += c * (data.row(i) - x);
      num += c * data.row(i);
      den += c;
    }
    res.objective = resid.norm() / wsum;
    res.iterations = iter;
    if (resid.norm() <= opts.tol * wsum) {
      res.theta = x;
      res.converged = true;
      return res;
    }
    x = num / den;
  }

  // Not converged: report the best (last) iterate explicitly.
  Vector resid = Vector::Zero(q);
  for (int i = 0; i < n; ++i) {
    if (w.counts[i] == 0) continue;
    const double di = (data.row(i) - x).norm();
    if (di > kAnchorEps) resid += w.counts[i] * (data.row(i) - x) / di;
  }
  res.theta = x;
  res.objective = resid.norm() / wsum;
  res.converged = false;
  return res;
}

// ---------------------------------------------------------------------------
// Quantile regression (smoothed majorization + direct-search polish)
// ---------------------------------------------------------------------------

namespace detail {

inline Vector pinv_solve_sym(const Matrix& a, const Vector& b, bool* degenerate) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a);
  const Vector& ev = es.eigenvalues();
  const double lmax = ev.cwiseAbs().maxCoeff();
  const double tol = 1e-10 * std::max(lmax, 1e-300);
  Vector inv = Vector::Zero(ev.size());
  int rank = 0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (ev[i] > tol) {
      inv[i] = 1.0 / ev[i];
      ++rank;
    }
  }
  if (degenerate) *degenerate = rank < ev.size();
  return es.eigenvectors() * (inv.asDiagonal() * (es.eigenvectors().transpose() * b));
}

}  // namespace detail

/// Minimizes the weighted quantile-regression risk on rows (x1..xp, y).
/// The absolute value is Huberized with a decreasing smoothing schedule,
/// each stage solved by iteratively reweighted least squares, followed by a
/// direct-search polish on the exact objective.  The returned point is the
/// best exact-objective candidate seen, so a warm start can never be beaten
/// by the result it seeds.
inline EstimateResult weighted_qr(const Dataset& data, const WeightVector& w, double tau,
                                  const SolverOptions& opts = {}) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::domain_error("weighted_qr: tau must be in (0,1)");
  if (data.dim() < 2) throw std::domain_error("weighted_qr: rows must be (x1..xp, y)");
  if (w.size() != data.n()) throw std::domain_error("weighted_qr: weight length mismatch");

  const int n = data.n(), p = data.dim() - 1;
  const Matrix x = data.matrix().leftCols(p);
  const Vector y = data.matrix().col(p);
  const double wsum = static_cast<double>(w.sum());
  const double slope = 2.0 * tau - 1.0;

  auto exact_risk = [&](const Vector& theta) {
    const Vector fit = x * theta;
    double s = 0.0;
    for (int i = 0; i < n; ++i)
      if (w.counts[i] != 0) s += w.counts[i] * (std::fabs(y[i] - fit[i]) - slope * fit[i]);
    return s / wsum;
  };

  // Rank of the positive-weight design.
  bool degenerate = false;
  Matrix gram = Matrix::Zero(p, p);
  Vector xw = Vector::Zero(p);
  for (int i = 0; i < n; ++i) {
    if (w.counts[i] == 0) continue;
    gram.noalias() += w.counts[i] * x.row(i).transpose() * x.row(i);
    xw += w.counts[i] * x.row(i).transpose();
  }
  {
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram);
    const double lmax = es.eigenvalues().cwiseAbs().maxCoeff();
    if (es.eigenvalues().minCoeff() <= 1e-10 * std::max(lmax, 1e-300)) {
      if (!opts.allow_degenerate)
        throw NumericalError("weighted_qr: weighted design is rank-deficient");
      degenerate = true;
    }
  }

  std::vector<Vector> candidates;
  if (opts.warm_start && opts.warm_start->size() == p) candidates.push_back(*opts.warm_start);

  // Weighted least-squares start.
  Vector xwy = Vector::Zero(p);
  for (int i = 0; i < n; ++i)
    if (w.counts[i] != 0) xwy += (w.counts[i] * y[i]) * x.row(i).transpose();
  Vector theta = detail::pinv_solve_sym(gram, xwy, nullptr);
  candidates.push_back(theta);
  if (opts.warm_start && opts.warm_start->size() == p) theta = *opts.warm_start;

  int iterations = 0;
  bool stages_converged = true;
  Vector fit(n), b(p);
  Matrix a(p, p);
  auto solve_stage_system = [&](const Matrix& lhs, const Vector& rhs) -> Vector {
    if (!degenerate && p == 2) {
      const double det = lhs(0, 0) * lhs(1, 1) - lhs(0, 1) * lhs(0, 1);
      if (std::fabs(det) > 1e-300) {
        Vector v(2);
        v[0] = (lhs(1, 1) * rhs[0] - lhs(0, 1) * rhs[1]) / det;
        v[1] = (lhs(0, 0) * rhs[1] - lhs(0, 1) * rhs[0]) / det;
        if (v.allFinite()) return v;
      }
      return detail::pinv_solve_sym(lhs, rhs, nullptr);
    }
    if (degenerate) return detail::pinv_solve_sym(lhs, rhs, nullptr);
    Vector v = lhs.ldlt().solve(rhs);
    if (!v.allFinite()) v = detail::pinv_solve_sym(lhs, rhs, nullptr);
    return v;
  };
  // A warm start near the optimum does not need the coarse smoothing passes.
  const std::vector<double> eps_schedule =
      (opts.warm_start && opts.warm_start->size() == p) ? std::vector<double>{1e-6}
                                                        : std::vector<double>{1e-2, 1e-4, 1e-6};
  for (double eps : eps_schedule) {
    auto smoothed = [&](const Vector& th) {
      fit.noalias() = x * th;
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        if (w.counts[i] == 0) continue;
        const double r = y[i] - fit[i];
        const double h = std::fabs(r) <= eps ? r * r / (2.0 * eps) + 0.5 * eps : std::fabs(r);
        s += w.counts[i] * (h + slope * r);
      }
      return s / wsum;
    };
    double fprev = smoothed(theta);
    bool stage_ok = false;
    for (int it = 0; it < opts.max_iterations; ++it) {
      ++iterations;
      fit.noalias() = x * theta;
      a.setZero();
      b.setZero();
      for (int i = 0; i < n; ++i) {
        if (w.counts[i] == 0) continue;
        const double u = w.counts[i] / std::max(std::fabs(y[i] - fit[i]), eps);
        for (int j = 0; j < p; ++j) {
          const double uxj = u * x(i, j);
          for (int k = 0; k <= j; ++k) a(j, k) += uxj * x(i, k);
          b[j] += uxj * y[i];
        }
      }
      for (int j = 0; j < p; ++j)
        for (int k = j + 1; k < p; ++k) a(j, k) = a(k, j);
      b += slope * xw;
      const Vector next = solve_stage_system(a, b);
      const double step = (next - theta).lpNorm<Eigen::Infinity>();
      theta = next;
      const double f = smoothed(theta);
      const bool f_stalled = std::fabs(fprev - f) <= 1e-10 * (std::fabs(fprev) + 1e-10);
      const bool x_stalled = step <= 1e-10 * (1.0 + theta.lpNorm<Eigen::Infinity>());
      fprev = f;
      if (f_stalled || x_stalled) {
        stage_ok = true;
        break;
      }
    }
    stages_converged = stages_converged && stage_ok;
    candidates.push_back(theta);
  }

  // Vertex candidates: the weighted check-loss optimum interpolates p
  // positive-weight observations, so solve the small interpolation systems
  // among the smallest-residual rows near a center point and keep the best.
  auto add_vertex_candidates = [&](const Vector& center) {
    if (p > 3) return;
    fit.noalias() = x * center;
    std::vector<std::pair<double, int>> resid;
    resid.reserve(n);
    for (int i = 0; i < n; ++i)
      if (w.counts[i] > 0) resid.emplace_back(std::fabs(y[i] - fit[i]), i);
    const int pool = std::min<int>(static_cast<int>(resid.size()), p + 4);
    std::partial_sort(resid.begin(), resid.begin() + pool, resid.end());
    std::vector<int> pick(p);
    std::function<void(int, int)> combos = [&](int start, int depth) {
      if (depth == p) {
        Matrix sys(p, p);
        Vector rhs(p);
        for (int r = 0; r < p; ++r) {
          sys.row(r) = x.row(resid[pick[r]].second);
          rhs[r] = y[resid[pick[r]].second];
        }
        Eigen::FullPivLU<Matrix> lu(sys);
        if (lu.isInvertible()) candidates.push_back(lu.solve(rhs));
        return;
      }
      for (int i = start; i < pool; ++i) {
        pick[depth] = i;
        combos(i + 1, depth + 1);
      }
    };
    combos(0, 0);
  };

  add_vertex_candidates(theta);

  EstimateResult res;
  res.objective = std::numeric_limits<double>::infinity();
  auto select_best = [&]() {
    for (const auto& c : candidates) {
      const double f = exact_risk(c);
      if (f < res.objective) {
        res.objective = f;
        res.theta = c;
      }
    }
  };
  select_best();

  // Direct-search polish of the exact (non-smooth) objective from the best
  // candidate, then a second vertex pass: the stages can stall well away
  // from the optimum, but the polished point is close enough to expose the
  // active rows.
  bool polish_converged;
  {
    Vector steps(p);
    for (int j = 0; j < p; ++j) steps[j] = 1e-5 * (1.0 + std::fabs(res.theta[j]));
    optimize::NelderMeadOptions nm;
    nm.max_evals = 100 * p;
    nm.ftol = 1e-14;
    const auto polish =
        optimize::nelder_mead([&](const Vector& th) { return exact_risk(th); }, res.theta, steps, nm);
    polish_converged = polish.converged;
    candidates.push_back(polish.x);
    add_vertex_candidates(polish.x);
    select_best();
  }

  // Optimality certificate at an interpolating vertex.  Zero belongs to the
  // subgradient iff the active residuals can carry sign coefficients g_i in
  // [-1,1] with sum_active w_i (g_i + slope) x_i balancing the fixed-sign
  // contribution of the inactive points (LP dual feasibility).
  auto vertex_certificate = [&]() -> bool {
    const Vector fitv = x * res.theta;
    double yscale = 0.0;
    for (int i = 0; i < n; ++i) yscale = std::max(yscale, std::fabs(y[i]));
    const double atol = 1e-9 * (1.0 + yscale);
    std::vector<int> active;
    Vector v = Vector::Zero(p);
    for (int i = 0; i < n; ++i) {
      if (w.counts[i] == 0) continue;
      const double r = y[i] - fitv[i];
      if (std::fabs(r) <= atol) {
        active.push_back(i);
        v -= (w.counts[i] * slope) * x.row(i).transpose();
      } else {
        const double sgn = r > 0.0 ? 1.0 : -1.0;
        v -= w.counts[i] * (sgn + slope) * x.row(i).transpose();
      }
    }
    if (static_cast<int>(active.size()) != p) return false;
    Matrix basis(p, p);  // columns w_i x_i of the active points
    for (int r = 0; r < p; ++r)
      basis.col(r) = w.counts[active[r]] * x.row(active[r]).transpose();
    Eigen::FullPivLU<Matrix> lu(basis);
    if (!lu.isInvertible()) return false;
    const Vector g = lu.solve(v);
    for (int r = 0; r < p; ++r)
      if (std::fabs(g[r]) > 1.0 + 1e-8) return false;
    return true;
  };

  res.iterations = iterations;
  res.converged = stages_converged || polish_converged || vertex_certificate();
  res.degenerate = degenerate;
  return res;
}

// ---------------------------------------------------------------------------
// Treatment-regime least squares
// ---------------------------------------------------------------------------

/// Expands DTR rows (x1,x2,a,y) into the regression design (1,x1,x2,a,ax1,ax2).
inline void dtr_design(const Dataset& data, Matrix& c, Vector& y) {
  if (data.dim() != 4) throw std::domain_error("dtr_design: dataset must have columns x1,x2,a,y");
  const int n = data.n();
  c.resize(n, 6);
  y.resize(n);
  for (int i = 0; i < n; ++i) {
    const double x1 = data.matrix()(i, 0), x2 = data.matrix()(i, 1), a = data.matrix()(i, 2);
    if (a != 0.0 && a != 1.0) throw std::domain_error("dtr_design: treatment flag must be 0 or 1");
    c(i, 0) = 1.0;
    c(i, 1) = x1;
    c(i, 2) = x2;
    c(i, 3) = a;
    c(i, 4) = a * x1;
    c(i, 5) = a * x2;
    y[i] = data.matrix()(i, 3);
  }
}

/// Closed-form weighted least squares on a prebuilt design.  Singular normal
/// matrices fall back to the pseudo-inverse and flag the result; flagged
/// replicates still enter the bootstrap distribution.
inline EstimateResult weighted_ls_design(const Matrix& c, const Vector& y, const WeightVector& w) {
  const int n = static_cast<int>(c.rows()), p = static_cast<int>(c.cols());
  if (w.size() != n) throw std::domain_error("weighted_ls: weight length mismatch");
  Matrix a = Matrix::Zero(p, p);
  Vector b = Vector::Zero(p);
  for (int i = 0; i < n; ++i) {
    const double wi = w.counts[i];
    if (wi == 0.0) continue;
    for (int j = 0; j < p; ++j) {
      const double cij = wi * c(i, j);
      for (int k = 0; k <= j; ++k) a(j, k) += cij * c(i, k);
      b[j] += cij * y[i];
    }
  }
  for (int j = 0; j < p; ++j)
    for (int k = j + 1; k < p; ++k) a(j, k) = a(k, j);

  EstimateResult res;
  res.theta = detail::pinv_solve_sym(a, b, &res.degenerate);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    if (w.counts[i] == 0) continue;
    const double r = y[i] - c.row(i).dot(res.theta);
    s += w.counts[i] * r * r;
  }
  res.objective = s / static_cast<double>(w.sum());
  res.iterations = 1;
  res.converged = true;
  return res;
}

inline EstimateResult weighted_ls(const Dataset& data, const WeightVector& w,
                                  const SolverOptions& = {}) {
  Matrix c;
  Vector y;
  dtr_design(data, c, y);
  return weighted_ls_design(c, y, w);
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

namespace detail {

inline EstimateResult generic_direct_search(const ProblemSpec& problem, const Dataset& data,
                                            const WeightVector& w, const SolverOptions& opts) {
  const int d = problem.dim;
  const double wsum = static_cast<double>(w.sum());
  std::function<double(const Vector&)> objective;
  if (problem.kind == ProblemSpec::Kind::M) {
    objective = [&](const Vector& th) { return weighted_risk(problem, data, w, th); };
  } else {
    objective = [&](const Vector& th) {
      Vector psi_sum = Vector::Zero(d);
      for (int i = 0; i < data.n(); ++i)
        if (w.counts[i] != 0) psi_sum += w.counts[i] * problem.psi(th, data.row(i));
      return (psi_sum / wsum).squaredNorm();
    };
  }

  // Data-informed starts plus deterministic random restarts.
  Vector mean = Vector::Zero(d);
  Vector scale = Vector::Ones(d);
  for (int j = 0; j < std::min(d, data.dim()); ++j) {
    double m = 0.0, m2 = 0.0;
    for (int i = 0; i < data.n(); ++i) {
      m += w.counts[i] * data.matrix()(i, j);
      m2 += w.counts[i] * data.matrix()(i, j) * data.matrix()(i, j);
    }
    m /= wsum;
    mean[j] = m;
    scale[j] = std::max(std::sqrt(std::max(0.0, m2 / wsum - m * m)), 1e-3);
  }

  std::vector<Vector> starts;
  if (opts.warm_start && opts.warm_start->size() == d) starts.push_back(*opts.warm_start);
  starts.push_back(mean);
  starts.push_back(Vector::Zero(d));
  rng::Engine eng(rng::derive_seed(0x67656E65726963ULL, static_cast<std::uint64_t>(d),
                                   static_cast<std::uint64_t>(data.n())));
  for (int r = 0; r < 7; ++r) {
    Vector s = mean;
    for (int j = 0; j < d; ++j) s[j] += scale[j] * eng.normal();
    starts.push_back(s);
  }

  optimize::NelderMeadOptions nm;
  nm.max_evals = 800 * d;
  const auto best = optimize::multi_start(objective, starts, 0.5 * scale, nm);

  EstimateResult res;
  res.theta = best.x;
  res.objective = best.f;
  res.iterations = best.evals;
  res.converged = best.converged;
  return res;
}

}  // namespace detail

/// Dispatches to the solver matching the problem's estimator tag; unknown
/// tags fall back to multi-start direct search on the weighted objective.
inline EstimateResult solve(const ProblemSpec& problem, const Dataset& data,
                            const WeightVector& w, const SolverOptions& opts = {}) {
  problem.validate_data(data);
  if (w.size() != data.n()) throw std::domain_error("solve: weight length mismatch");
  switch (problem.estimator) {
    case EstimatorTag::Quantile: {
      EstimateResult res;
      res.theta = Vector::Constant(1, weighted_quantile(data, w, problem.tau));
      res.objective = weighted_risk(problem, data, w, res.theta);
      res.iterations = 1;
      res.converged = true;
      return res;
    }
    case EstimatorTag::SpatialMedian:
      return weiszfeld(data, w, opts);
    case EstimatorTag::QuantileRegression:
      return weighted_qr(data, w, problem.tau, opts);
    case EstimatorTag::LeastSquares:
      return weighted_ls(data, w, opts);
    case EstimatorTag::Generic:
      return detail::generic_direct_search(problem, data, w, opts);
  }
  throw std::logic_error("solve: unhandled estimator tag");
}

}  // namespace gimkit
