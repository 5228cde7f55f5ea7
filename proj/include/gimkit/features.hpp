#pragma once

#include <bit>
#include <cmath>
#include <vector>

#include "gimkit/estimation.hpp"
#include "gimkit/optimize.hpp"
#include "gimkit/problems.hpp"
#include "gimkit/rng.hpp"

namespace gimkit {

namespace detail {

struct DtrCovariateStats {
  double x1_mean = 0.0, x2_mean = 0.0;
  double frac_above = 0.0;   // fraction with x1 > threshold
  double x1_above = 0.0;     // mean of x1 * 1{x1 > threshold}
  double x2_above = 0.0;     // mean of x2 * 1{x1 > threshold}
};

inline DtrCovariateStats dtr_covariate_stats(const Dataset& data, double threshold) {
  if (data.dim() != 4) throw std::domain_error("dtr features: dataset must have columns x1,x2,a,y");
  DtrCovariateStats s;
  const int n = data.n();
  for (int i = 0; i < n; ++i) {
    const double x1 = data.matrix()(i, 0), x2 = data.matrix()(i, 1);
    s.x1_mean += x1;
    s.x2_mean += x2;
    if (x1 > threshold) {
      s.frac_above += 1.0;
      s.x1_above += x1;
      s.x2_above += x2;
    }
  }
  s.x1_mean /= n;
  s.x2_mean /= n;
  s.frac_above /= n;
  s.x1_above /= n;
  s.x2_above /= n;
  return s;
}

}  // namespace detail

/// Feature maps for the treatment-regime problem.  Covariate expectations are
/// plug-in means over the observed rows, held fixed across bootstrap
/// replications, so every feature is a pure function of theta.  The first
/// four are affine in theta; the optimal-regime value is convex piecewise
/// linear and carries its own fiber minimizer.
inline FeatureMap dtr_feature_map(DtrFeature which, const Dataset& data, double threshold) {
  const auto s = detail::dtr_covariate_stats(data, threshold);

  auto affine_map = [](std::string name, Vector a) {
    FeatureMap fm;
    fm.name = std::move(name);
    fm.affine = std::make_pair(a, 0.0);
    fm.phi = [a](const Vector& theta) { return a.dot(theta); };
    return fm;
  };

  Vector a_static(6), a_cd(6);
  a_static << 1.0, s.x1_mean, s.x2_mean, 1.0, s.x1_mean, s.x2_mean;
  a_cd << 1.0, s.x1_mean, s.x2_mean, s.frac_above, s.x1_above, s.x2_above;

  switch (which) {
    case DtrFeature::TreatmentEffect: {
      Vector a(6);
      a << 0.0, 0.0, 0.0, 1.0, s.x1_mean, s.x2_mean;
      return affine_map(dtr_feature_name(which), a);
    }
    case DtrFeature::ValueStatic:
      return affine_map(dtr_feature_name(which), a_static);
    case DtrFeature::ValueCd:
      return affine_map(dtr_feature_name(which), a_cd);
    case DtrFeature::ValueDiff:
      return affine_map(dtr_feature_name(which), a_cd - a_static);
    case DtrFeature::ValueOptimal:
      break;
  }

  // Optimal-regime value: phi(theta) = mean Q_{x,0} + mean max(0, contrast_i)
  // with contrast_i = t3 + t4 x1_i + t5 x2_i.
  FeatureMap fm;
  fm.name = dtr_feature_name(which);
  const int n = data.n();
  Vector x1 = data.matrix().col(0), x2 = data.matrix().col(1);
  const double x1m = s.x1_mean, x2m = s.x2_mean;

  auto phi_fn = [x1, x2, x1m, x2m, n](const Vector& theta) {
    double acc = 0.0;
    for (int i = 0; i < n; ++i)
      acc += std::max(0.0, theta[3] + theta[4] * x1[i] + theta[5] * x2[i]);
    return theta[0] + theta[1] * x1m + theta[2] * x2m + acc / n;
  };
  // Exact gradient within the current linear piece.
  auto phi_grad = [x1, x2, x1m, x2m, n](const Vector& theta) {
    Vector g(6);
    g << 1.0, x1m, x2m, 0.0, 0.0, 0.0;
    for (int i = 0; i < n; ++i) {
      if (theta[3] + theta[4] * x1[i] + theta[5] * x2[i] > 0.0) {
        g[3] += 1.0 / n;
        g[4] += x1[i] / n;
        g[5] += x2[i] / n;
      }
    }
    return g;
  };
  fm.phi = phi_fn;

  fm.fiber_min = [phi_fn, phi_grad](const Dataset& d, double phi0) -> Vector {
    Matrix c;
    Vector y;
    dtr_design(d, c, y);
    const int nn = d.n();
    const EstimateResult ls = weighted_ls_design(c, y, WeightVector::uniform(nn));

    // The least-squares risk is an exact quadratic around its minimizer.
    const Matrix quad = c.transpose() * c / static_cast<double>(nn);
    const Vector center = ls.theta;
    auto risk = [&](const Vector& th) {
      const Vector delta = th - center;
      return ls.objective + delta.dot(quad * delta);
    };

    // Coordinate scales from the LS covariance diagonal.
    bool deg = false;
    Vector scales(6);
    {
      const double sigma2 = ls.objective * nn / std::max(1, nn - 6);
      for (int j = 0; j < 6; ++j) {
        Vector ej = Vector::Zero(6);
        ej[j] = 1.0;
        const Vector sol = detail::pinv_solve_sym(quad * nn, ej, &deg);
        scales[j] = std::sqrt(std::max(sigma2 * sol[j], 1e-16)) + 1e-8 * (1.0 + std::fabs(center[j]));
      }
    }

    auto project = [&](Vector th) {
      for (int it = 0; it < 12; ++it) {
        const double v = phi_fn(th) - phi0;
        if (std::fabs(v) <= 1e-10 * (1.0 + std::fabs(phi0))) break;
        const Vector g = phi_grad(th);
        const double g2 = g.squaredNorm();
        if (!(g2 > 0.0)) throw NumericalError("fiber projection: feature gradient vanished");
        th -= g * (v / g2);
      }
      return th;
    };

    const double delta0 = phi0 - phi_fn(center);
    Vector init;
    {
      const Vector g = phi_grad(center);
      const double g2 = g.squaredNorm();
      if (!(g2 > 0.0)) throw NumericalError("fiber init: feature gradient vanished");
      init = center + g * (delta0 / g2);
    }

    rng::Engine eng(rng::derive_seed(0x0d7a0f1bULL, std::bit_cast<std::uint64_t>(phi0), 0));
    const double rho0 = (ls.objective + 1.0) / (1.0 + delta0 * delta0);

    Vector best;
    double best_risk = std::numeric_limits<double>::infinity();
    for (int restart = 0; restart < 4; ++restart) {
      Vector cur = init;
      if (restart > 0)
        for (int j = 0; j < 6; ++j) cur[j] += scales[j] * eng.normal();
      cur = project(cur);
      for (double mult : {1e2, 1e4, 1e6}) {
        const double rho = rho0 * mult;
        auto obj = [&](const Vector& th) {
          const double v = phi_fn(th) - phi0;
          return risk(th) + rho * v * v;
        };
        optimize::NelderMeadOptions nm;
        nm.max_evals = 1500;
        nm.ftol = 1e-12;
        cur = optimize::nelder_mead(obj, cur, 0.5 * scales, nm).x;
      }
      cur = project(cur);
      if (std::fabs(phi_fn(cur) - phi0) > 1e-6 * (1.0 + std::fabs(phi0))) continue;
      const double r = risk(cur);
      if (r < best_risk) {
        best_risk = r;
        best = cur;
      }
    }
    if (!(best_risk < std::numeric_limits<double>::infinity()))
      throw NumericalError("fiber minimization failed to reach the target feature value");
    return best;
  };
  return fm;
}

}  // namespace gimkit
