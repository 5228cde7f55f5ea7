#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "gimkit/common.hpp"

namespace gimkit::optimize {

struct NelderMeadOptions {
  int max_evals = 4000;
  double ftol = 1e-12;  // relative spread of simplex values
  double xtol = 1e-10;  // relative spread of simplex points
};

struct NelderMeadResult {
  Vector x;
  double f = 0.0;
  int evals = 0;
  bool converged = false;
};

/// Classic Nelder-Mead simplex search (reflection 1, expansion 2,
/// contraction 1/2, shrink 1/2).  Deterministic given the start point and
/// per-coordinate initial steps.  Returns the best vertex ever seen.
inline NelderMeadResult nelder_mead(const std::function<double(const Vector&)>& fn,
                                    const Vector& x0, const Vector& steps,
                                    const NelderMeadOptions& opts = {}) {
  const int d = static_cast<int>(x0.size());
  NelderMeadResult res;
  res.x = x0;

  std::vector<Vector> pts(d + 1, x0);
  std::vector<double> val(d + 1);
  int evals = 0;
  auto eval = [&](const Vector& v) {
    ++evals;
    return fn(v);
  };
  val[0] = eval(pts[0]);
  for (int i = 0; i < d; ++i) {
    pts[i + 1][i] += (steps[i] != 0.0 ? steps[i] : 1e-8);
    val[i + 1] = eval(pts[i + 1]);
  }

  std::vector<int> order(d + 1);
  while (evals < opts.max_evals) {
    for (int i = 0; i <= d; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](int a, int b) { return val[a] < val[b]; });
    const int best = order[0], worst = order[d], second_worst = order[d - 1];

    const double fspread = std::fabs(val[worst] - val[best]);
    double xspread = 0.0;
    for (int i = 1; i <= d; ++i) xspread = std::max(xspread, (pts[order[i]] - pts[best]).norm());
    if (fspread <= opts.ftol * (std::fabs(val[best]) + opts.ftol) &&
        xspread <= opts.xtol * (1.0 + pts[best].norm())) {
      res.converged = true;
      break;
    }

    Vector centroid = Vector::Zero(d);
    for (int i = 0; i <= d; ++i)
      if (i != worst) centroid += pts[i];
    centroid /= static_cast<double>(d);

    const Vector refl = centroid + (centroid - pts[worst]);
    const double frefl = eval(refl);
    if (frefl < val[best]) {
      const Vector expd = centroid + 2.0 * (centroid - pts[worst]);
      const double fexpd = eval(expd);
      if (fexpd < frefl) {
        pts[worst] = expd;
        val[worst] = fexpd;
      } else {
        pts[worst] = refl;
        val[worst] = frefl;
      }
    } else if (frefl < val[second_worst]) {
      pts[worst] = refl;
      val[worst] = frefl;
    } else {
      const bool outside = frefl < val[worst];
      const Vector contr = outside ? Vector(centroid + 0.5 * (refl - centroid))
                                   : Vector(centroid - 0.5 * (centroid - pts[worst]));
      const double fcontr = eval(contr);
      if (fcontr < (outside ? frefl : val[worst])) {
        pts[worst] = contr;
        val[worst] = fcontr;
      } else {
        for (int i = 0; i <= d; ++i) {
          if (i == best) continue;
          pts[i] = pts[best] + 0.5 * (pts[i] - pts[best]);
          val[i] = eval(pts[i]);
        }
      }
    }
  }

  int best = 0;
  for (int i = 1; i <= d; ++i)
    if (val[i] < val[best]) best = i;
  res.x = pts[best];
  res.f = val[best];
  res.evals = evals;
  return res;
}

/// Runs Nelder-Mead from several starts and keeps the best result.
inline NelderMeadResult multi_start(const std::function<double(const Vector&)>& fn,
                                    const std::vector<Vector>& starts, const Vector& steps,
                                    const NelderMeadOptions& opts = {}) {
  NelderMeadResult best;
  best.f = std::numeric_limits<double>::infinity();
  for (const auto& s : starts) {
    NelderMeadResult r = nelder_mead(fn, s, steps, opts);
    if (r.f < best.f) best = r;
  }
  return best;
}

}  // namespace gimkit::optimize
