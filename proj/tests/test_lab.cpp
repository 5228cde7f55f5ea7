#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "gimkit/io.hpp"
#include "gimkit/lab.hpp"

using namespace gimkit;

TEST_CASE("generator truths match closed forms") {
  REQUIRE(std::fabs(gamma_quantile_generator(4.0, 1.0, 0.5).truth[0] - 3.67) < 0.005);
  const Generator c25 = cauchy_quantile_generator(2.0, 1.0, 0.25);
  const Generator c50 = cauchy_quantile_generator(2.0, 1.0, 0.50);
  const Generator c75 = cauchy_quantile_generator(2.0, 1.0, 0.75);
  REQUIRE(c25.truth[0] == Catch::Approx(1.0).margin(1e-10));
  REQUIRE(c50.truth[0] == Catch::Approx(2.0).margin(1e-10));
  REQUIRE(c75.truth[0] == Catch::Approx(3.0).margin(1e-10));
  const double z3 = mathutil::normal_quantile(0.3);
  const Generator qr = qr_dgp_generator(0.3);
  REQUIRE(qr.truth[0] == Catch::Approx(4.0 + 0.1 * z3).margin(1e-12));
  REQUIRE(qr.truth[1] == Catch::Approx(0.1 + 0.1 * z3).margin(1e-12));
  const Generator bvn = bvn_spatial_median_generator(1.0, 1.0, 0.7);
  REQUIRE(bvn.truth[0] == 1.0);
  REQUIRE(bvn.truth[1] == 1.0);
  REQUIRE_THROWS_AS(cauchy_quantile_generator(0.0, -1.0, 0.5), std::domain_error);
}

TEST_CASE("generators are deterministic given their stream") {
  for (const Generator& gen :
       {gamma_quantile_generator(4.0, 1.0, 0.5), cauchy_quantile_generator(2.0, 1.0, 0.25),
        bvn_spatial_median_generator(1.0, 1.0, 0.7), qr_dgp_generator(0.75),
        dtr_dgp_generator()}) {
    rng::Engine a(42), b(42);
    const Dataset da = generate(gen, 50, a);
    const Dataset db = generate(gen, 50, b);
    REQUIRE(da.matrix() == db.matrix());
  }
  rng::Engine e(1);
  REQUIRE_THROWS_AS(generate(dtr_dgp_generator(), 0, e), std::domain_error);
}

TEST_CASE("dtr generator matches its stated distributions") {
  rng::Engine eng(500);
  const Dataset d = generate(dtr_dgp_generator(), 4000, eng);
  double x1m = 0.0, x2m = 0.0, amean = 0.0;
  for (int i = 0; i < d.n(); ++i) {
    x1m += d.matrix()(i, 0);
    x2m += d.matrix()(i, 1);
    const double a = d.matrix()(i, 2);
    REQUIRE((a == 0.0 || a == 1.0));
    amean += a;
  }
  REQUIRE(x1m / d.n() == Catch::Approx(211.0).margin(3.0));
  REQUIRE(x2m / d.n() == Catch::Approx(4.2).margin(0.03));
  REQUIRE(amean / d.n() > 0.2);
  REQUIRE(amean / d.n() < 0.8);
}

TEST_CASE("conservative interval: construction guarantee, edges") {
  // Data equal to ranks so the order-statistic indices can be recovered and
  // the binomial coverage bound recomputed independently.
  rng::Engine eng(7);
  for (int rep = 0; rep < 100; ++rep) {
    const int n = 5 + static_cast<int>(eng.below(200));
    const double tau = eng.uniform(0.1, 0.9);
    const double alpha = eng.uniform(0.01, 0.2);
    std::vector<double> z(n);
    for (int i = 0; i < n; ++i) z[i] = i + 1.0;
    const Interval ci = conservative_interval(Dataset::from_scalars(z), tau, alpha);
    if (ci.warned) continue;
    const int l = static_cast<int>(ci.lo);
    const int u = static_cast<int>(ci.hi);
    double cover = 0.0;
    for (int k = l; k <= u - 1; ++k) cover += mathutil::binomial_pmf(n, tau, k);
    REQUIRE(cover >= 1.0 - alpha - 1e-12);
  }
  const Interval tiny = conservative_interval(Dataset::from_scalars({5.0}), 0.5, 0.05);
  REQUIRE(tiny.warned);
  REQUIRE(tiny.lo == tiny.hi);
  const Interval small = conservative_interval(Dataset::from_scalars({1.0, 2.0, 3.0}), 0.5, 0.05);
  REQUIRE(small.warned);  // n=3 cannot support a two-sided 95% order-statistic interval
  REQUIRE(small.lo == 1.0);
  REQUIRE(small.hi == 3.0);
}

TEST_CASE("percentile bootstrap interval endpoints are replicate order statistics") {
  const Dataset constant = Dataset::from_scalars(std::vector<double>(20, 2.5));
  const Interval flat = percentile_boot_interval(constant, 0.5, 200, 0.05, 9);
  REQUIRE(flat.lo == 2.5);
  REQUIRE(flat.hi == 2.5);
  REQUIRE(flat.length() == 0.0);

  rng::Engine eng(11);
  std::vector<double> z(30);
  for (auto& v : z) v = eng.cauchy(2.0, 1.0);
  const Dataset d = Dataset::from_scalars(z);
  const int B = 313;
  const Interval ci = percentile_boot_interval(d, 0.75, B, 0.05, 1234);
  // Recompute the replicate quantiles on the same substreams.
  std::vector<double> q(B);
  for (int b = 0; b < B; ++b) {
    rng::Engine s(rng::derive_seed(1234, rng::kPercentileBootstrap, b));
    q[b] = weighted_quantile(d, sample_weights(30, s), 0.75);
  }
  std::sort(q.begin(), q.end());
  REQUIRE(ci.lo == q[static_cast<int>(std::ceil(0.025 * B)) - 1]);
  REQUIRE(ci.hi == q[static_cast<int>(std::ceil(0.975 * B)) - 1]);
}

TEST_CASE("uniformity experiment smoke run") {
  ExperimentOptions opts;
  opts.n = 40;
  opts.B = 100;
  opts.M = 30;
  opts.seed = 5;
  opts.threads = 2;
  const SimulationReport rep = uniformity_experiment(gamma_quantile_generator(4, 1, 0.5), opts);
  REQUIRE(rep.replications == 30);
  REQUIRE(rep.failures == 0);
  REQUIRE(rep.contour_at_truth.size() == 30);
  for (double v : rep.contour_at_truth) {
    REQUIRE(v >= 0.0);
    REQUIRE(v <= 1.0);
  }
  REQUIRE(std::isfinite(rep.ks_to_uniform));

  // Contour far outside the data range is ~0 in every replication.
  const Generator far = gamma_quantile_generator(4, 1, 0.5);
  Generator shifted = far;
  shifted.truth = Vector::Constant(1, 1e4);
  const SimulationReport off = uniformity_experiment(shifted, opts);
  for (double v : off.contour_at_truth) REQUIRE(v == 0.0);
}

TEST_CASE("reports are invariant to thread count and rerun") {
  ExperimentOptions opts;
  opts.n = 30;
  opts.B = 80;
  opts.M = 20;
  opts.seed = 31;
  opts.threads = 1;
  const Generator gen = gamma_quantile_generator(4, 1, 0.25);
  const SimulationReport a = uniformity_experiment(gen, opts);
  opts.threads = 2;
  const SimulationReport b = uniformity_experiment(gen, opts);
  REQUIRE(a.contour_at_truth == b.contour_at_truth);
  REQUIRE(report_to_json(a).dump() == report_to_json(b).dump());
}

TEST_CASE("coverage experiment: gim duality cross-check and baselines") {
  ExperimentOptions opts;
  opts.n = 60;
  opts.B = 150;
  opts.M = 40;
  opts.alpha = 0.05;
  opts.seed = 17;
  opts.threads = 2;
  const Generator gen = cauchy_quantile_generator(2.0, 1.0, 0.5);

  const SimulationReport gim = coverage_experiment(gen, opts, IntervalMethod::Gim);
  REQUIRE(gim.contour_at_truth.size() == 40);
  double frac = 0.0;
  for (double v : gim.contour_at_truth) frac += v > opts.alpha ? 1.0 : 0.0;
  REQUIRE(gim.coverage == frac / 40.0);  // region-duality, exact
  REQUIRE(gim.mean_length > 0.0);

  const SimulationReport cons = coverage_experiment(gen, opts, IntervalMethod::Conservative);
  REQUIRE(cons.coverage >= 0.8);
  const SimulationReport pct = coverage_experiment(gen, opts, IntervalMethod::PercentileBoot);
  REQUIRE(pct.coverage >= 0.7);
  REQUIRE_THROWS_AS(coverage_experiment(bvn_spatial_median_generator(1, 1, 0.7), opts,
                                        IntervalMethod::Gim),
                    std::domain_error);
}

TEST_CASE("markdown table follows the coverage-with-length layout") {
  SimulationReport r1, r2;
  r1.coverage = 0.95;
  r1.mean_length = 0.62;
  r2.coverage = 0.98;
  r2.mean_length = 0.69;
  const std::string md =
      coverage_markdown_table({0.50}, {"GIM", "Conservative"}, {{r1, r2}});
  REQUIRE(md.find("| tau | GIM | Conservative |") == 0);
  REQUIRE(md.find("| 0.50 | 0.95 (0.62) | 0.98 (0.69) |") != std::string::npos);
}

TEST_CASE("dtr experiment smoke: grids include the null points") {
  ExperimentOptions opts;
  opts.n = 300;
  opts.B = 120;
  opts.M = 4;
  opts.seed = 23;
  opts.threads = 2;
  const DtrExperimentResult result = dtr_experiment(opts, 120.0, 41);
  REQUIRE(result.report.replications == 4);
  REQUIRE(result.marginals.size() == 5);
  for (const auto& [name, table] : result.marginals) {
    bool has_zero = false;
    for (long long i = 0; i < table.size(); ++i)
      if (table.points(i, 0) == 0.0) has_zero = true;
    if (name == "treatment-effect" || name == "value-diff") REQUIRE(has_zero);
    for (long long i = 0; i < table.size(); ++i) {
      if (table.missing[i]) continue;
      REQUIRE(table.values[i] >= 0.0);
      REQUIRE(table.values[i] <= 1.0);
    }
  }
}

TEST_CASE("report json carries the fields downstream tooling reads") {
  SimulationReport rep;
  rep.label = "x";
  rep.replications = 3;
  rep.contour_at_truth = {0.1, 0.5, 0.9};
  rep.ks_to_uniform = 0.2;
  const json j = report_to_json(rep);
  REQUIRE(j["replications"] == 3);
  REQUIRE(j["contour_at_truth"].size() == 3);
  REQUIRE(j["ks_to_uniform"] == 0.2);
  REQUIRE(!j.contains("coverage"));
}
