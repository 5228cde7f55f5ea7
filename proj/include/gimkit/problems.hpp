#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <string>

#include "gimkit/common.hpp"
#include "gimkit/dataset.hpp"

namespace gimkit {

// ---------------------------------------------------------------------------
// Loss / estimating functions
// ---------------------------------------------------------------------------

/// Check loss whose expected-risk minimizer is the tau-quantile:
///   l_theta(z) = 1/2 {(|z - theta| - z) + (1 - 2 tau) theta}.
/// This general form is the single code path for every tau, including 0.5.
inline double quantile_loss(double theta, double z, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::domain_error("quantile_loss: tau must be in (0,1)");
  return 0.5 * ((std::fabs(z - theta) - z) + (1.0 - 2.0 * tau) * theta);
}

/// Spatial-median loss l_theta(z) = ||z - theta|| - ||z||.  The second term
/// keeps the risk finite for heavy-tailed P without changing the minimizer.
inline double spatial_median_loss(const Vector& theta, ConstRowRef z) {
  if (theta.size() != z.size()) throw std::domain_error("spatial_median_loss: dimension mismatch");
  return (z - theta).norm() - z.norm();
}

/// Unit vector from theta toward z; the spatial-median estimating function.
/// Undefined at z == theta (the subgradient there is the unit ball).
inline Vector spatial_median_psi(const Vector& theta, ConstRowRef z) {
  if (theta.size() != z.size()) throw std::domain_error("spatial_median_psi: dimension mismatch");
  const Vector diff = z - theta;
  const double d = diff.norm();
  if (d <= 1e-150) throw std::domain_error("spatial_median_psi: singular at z == theta");
  return diff / d;
}

/// Quantile-regression loss for one observation (x, y):
///   l_theta(x, y) = |y - x'theta| - (2 tau - 1) x'theta.
inline double qr_loss(const Vector& theta, ConstRowRef obs, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::domain_error("qr_loss: tau must be in (0,1)");
  if (obs.size() != theta.size() + 1) throw std::domain_error("qr_loss: observation must be (x, y)");
  const double xt = obs.head(theta.size()).dot(theta);
  const double y = obs[obs.size() - 1];
  return std::fabs(y - xt) - (2.0 * tau - 1.0) * xt;
}

/// Linear Q-function for the single-decision treatment-regime model:
///   Q_{x,a}(theta) = t0 + t1 x1 + t2 x2 + t3 a + t4 a x1 + t5 a x2.
inline double dtr_q(const Vector& theta, double x1, double x2, double a) {
  return theta[0] + theta[1] * x1 + theta[2] * x2 + a * (theta[3] + theta[4] * x1 + theta[5] * x2);
}

/// Squared outcome-regression loss {y - Q_{x,a}(theta)}^2 on rows (x1,x2,a,y).
inline double dtr_loss(const Vector& theta, ConstRowRef obs) {
  if (theta.size() != 6 || obs.size() != 4) throw std::domain_error("dtr_loss: expects 6 parameters and rows (x1,x2,a,y)");
  const double a = obs[2];
  if (a != 0.0 && a != 1.0) throw std::domain_error("dtr_loss: treatment flag must be 0 or 1");
  const double r = obs[3] - dtr_q(theta, obs[0], obs[1], a);
  return r * r;
}

// ---------------------------------------------------------------------------
// Treatment-regime features
// ---------------------------------------------------------------------------

/// Regime summaries derived from the Q-function.  All expectations over the
/// covariates are plug-in means over the observed rows, held fixed, so each
/// entry is a pure function of theta for a given dataset.
struct DtrFeatureValues {
  double treatment_effect;  // t3 + t4 mean(x1) + t5 mean(x2)
  double value_static;      // mean Q_{x,1}
  double value_cd;          // mean Q under d(x) = 1{x1 > threshold}
  double value_diff;        // value_cd - value_static
  double value_optimal;     // mean max(Q_{x,0}, Q_{x,1})
};

inline DtrFeatureValues dtr_features(const Vector& theta, const Dataset& data, double threshold) {
  if (theta.size() != 6) throw std::domain_error("dtr_features: expects a 6-vector");
  if (data.dim() != 4) throw std::domain_error("dtr_features: dataset must have columns x1,x2,a,y");
  const int n = data.n();
  double st = 0.0, cd = 0.0, opt = 0.0, te_x1 = 0.0, te_x2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x1 = data.matrix()(i, 0), x2 = data.matrix()(i, 1);
    const double q0 = dtr_q(theta, x1, x2, 0.0);
    const double q1 = dtr_q(theta, x1, x2, 1.0);
    st += q1;
    cd += (x1 > threshold) ? q1 : q0;
    opt += std::max(q0, q1);
    te_x1 += x1;
    te_x2 += x2;
  }
  DtrFeatureValues f{};
  f.treatment_effect = theta[3] + theta[4] * te_x1 / n + theta[5] * te_x2 / n;
  f.value_static = st / n;
  f.value_cd = cd / n;
  f.value_diff = f.value_cd - f.value_static;
  f.value_optimal = opt / n;
  return f;
}

// ---------------------------------------------------------------------------
// Problem specification
// ---------------------------------------------------------------------------

enum class EstimatorTag { Quantile, SpatialMedian, QuantileRegression, LeastSquares, Generic };

/// Defines an inferential target: either a loss (M-case, target is the risk
/// minimizer) or an estimating function (Z-case, target is the root of its
/// expectation), plus the tag of the weighted solver that fits it.
struct ProblemSpec {
  enum class Kind { M, Z };

  Kind kind = Kind::M;
  int dim = 1;
  std::function<double(const Vector&, ConstRowRef)> loss;  // M-case only
  std::function<Vector(const Vector&, ConstRowRef)> psi;   // Z-case only
  EstimatorTag estimator = EstimatorTag::Generic;
  double tau = 0.5;  // quantile-type problems

  // Optional factory for a fast whole-dataset risk evaluator.  Must agree
  // with the per-row loss; the generic mean-of-loss loop is the fallback.
  std::function<std::function<double(const Vector&)>(const Dataset&)> make_risk;

  void validate_data(const Dataset& data) const {
    bool ok = true;
    switch (estimator) {
      case EstimatorTag::Quantile: ok = data.dim() == 1 && dim == 1; break;
      case EstimatorTag::SpatialMedian: ok = data.dim() == dim; break;
      case EstimatorTag::QuantileRegression: ok = data.dim() == dim + 1; break;
      case EstimatorTag::LeastSquares: ok = data.dim() == 4 && dim == 6; break;
      case EstimatorTag::Generic: ok = true; break;
    }
    if (!ok) throw std::domain_error("ProblemSpec: dataset shape does not match the problem");
  }
};

inline ProblemSpec quantile_problem(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::domain_error("quantile_problem: tau must be in (0,1)");
  ProblemSpec p;
  p.kind = ProblemSpec::Kind::M;
  p.dim = 1;
  p.tau = tau;
  p.estimator = EstimatorTag::Quantile;
  p.loss = [tau](const Vector& theta, ConstRowRef z) { return quantile_loss(theta[0], z[0], tau); };
  return p;
}

/// Spatial median as a Z-estimator.  The psi closure applies the tie rule at
/// observation points (zero contribution, a valid subgradient choice); the
/// bare spatial_median_psi above signals instead.
inline ProblemSpec spatial_median_problem(int q) {
  if (q < 1) throw std::domain_error("spatial_median_problem: dimension must be >= 1");
  ProblemSpec p;
  p.kind = ProblemSpec::Kind::Z;
  p.dim = q;
  p.estimator = EstimatorTag::SpatialMedian;
  p.psi = [](const Vector& theta, ConstRowRef z) -> Vector {
    const Vector diff = z - theta;
    const double d = diff.norm();
    if (d <= 1e-150) return Vector::Zero(theta.size());
    return diff / d;
  };
  return p;
}

inline ProblemSpec quantile_regression_problem(int p_dim, double tau) {
  if (p_dim < 1) throw std::domain_error("quantile_regression_problem: dimension must be >= 1");
  if (!(tau > 0.0 && tau < 1.0)) throw std::domain_error("quantile_regression_problem: tau must be in (0,1)");
  ProblemSpec p;
  p.kind = ProblemSpec::Kind::M;
  p.dim = p_dim;
  p.tau = tau;
  p.estimator = EstimatorTag::QuantileRegression;
  p.loss = [tau](const Vector& theta, ConstRowRef obs) { return qr_loss(theta, obs, tau); };
  p.make_risk = [tau, p_dim](const Dataset& data) {
    Matrix x = data.matrix().leftCols(p_dim);
    Vector y = data.matrix().col(p_dim);
    return [x = std::move(x), y = std::move(y), tau](const Vector& theta) {
      const Vector fit = x * theta;
      double s = 0.0;
      for (Eigen::Index i = 0; i < y.size(); ++i)
        s += std::fabs(y[i] - fit[i]) - (2.0 * tau - 1.0) * fit[i];
      return s / static_cast<double>(y.size());
    };
  };
  return p;
}

inline ProblemSpec dtr_problem() {
  ProblemSpec p;
  p.kind = ProblemSpec::Kind::M;
  p.dim = 6;
  p.estimator = EstimatorTag::LeastSquares;
  p.loss = [](const Vector& theta, ConstRowRef obs) { return dtr_loss(theta, obs); };
  p.make_risk = [](const Dataset& data) {
    const int n = data.n();
    Matrix c(n, 6);
    Vector y(n);
    for (int i = 0; i < n; ++i) {
      const double x1 = data.matrix()(i, 0), x2 = data.matrix()(i, 1), a = data.matrix()(i, 2);
      c.row(i) << 1.0, x1, x2, a, a * x1, a * x2;
      y[i] = data.matrix()(i, 3);
    }
    return [c = std::move(c), y = std::move(y)](const Vector& theta) {
      return (y - c * theta).squaredNorm() / static_cast<double>(y.size());
    };
  };
  return p;
}

// ---------------------------------------------------------------------------
// Feature maps (marginalization targets)
// ---------------------------------------------------------------------------

/// A scalar feature phi(theta) together with what the engine needs to
/// marginalize onto it: either an affine representation phi = a'theta + c, or
/// a custom fiber T-minimizer for non-affine features.
struct FeatureMap {
  std::string name;
  std::function<double(const Vector&)> phi;
  std::optional<std::pair<Vector, double>> affine;              // (a, c)
  std::function<Vector(const Dataset&, double)> fiber_min;      // optional

  double operator()(const Vector& theta) const { return phi(theta); }
};

enum class DtrFeature { TreatmentEffect, ValueStatic, ValueCd, ValueDiff, ValueOptimal };

inline const char* dtr_feature_name(DtrFeature f) {
  switch (f) {
    case DtrFeature::TreatmentEffect: return "treatment-effect";
    case DtrFeature::ValueStatic: return "value-static";
    case DtrFeature::ValueCd: return "value-cd";
    case DtrFeature::ValueDiff: return "value-diff";
    case DtrFeature::ValueOptimal: return "value-optimal";
  }
  return "?";
}

// Defined in engine-adjacent code because the optimal-value fiber minimizer
// needs the direct-search machinery.
FeatureMap dtr_feature_map(DtrFeature which, const Dataset& data, double threshold);

}  // namespace gimkit
