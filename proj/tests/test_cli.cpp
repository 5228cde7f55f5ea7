// End-to-end checks of the gimkit binary: exit codes, reproducibility, and
// the self-describing output contract.  The binary path arrives in GIMKIT_BIN.

#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "gimkit/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

std::string bin() {
  const char* b = std::getenv("GIMKIT_BIN");
  REQUIRE(b != nullptr);
  return b;
}

int run(const std::string& args) {
  const std::string cmd = bin() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path make_tmp() {
  static int counter = 0;
  fs::path dir = fs::temp_directory_path() / ("gimkit_cli_test_" + std::to_string(::getpid()) +
                                              "_" + std::to_string(counter++));
  fs::create_directories(dir);
  return dir;
}

fs::path write_gamma_csv(const fs::path& dir, int n, std::uint64_t seed) {
  gimkit::rng::Engine eng(seed);
  std::ofstream out(dir / "data.csv");
  out << "z1\n";
  for (int i = 0; i < n; ++i) out << eng.gamma(4.0) << "\n";
  return dir / "data.csv";
}

fs::path write_dtr_csv(const fs::path& dir, int n, std::uint64_t seed) {
  gimkit::rng::Engine eng(seed);
  std::ofstream out(dir / "dtr.csv");
  out << "x1,x2,a,y\n";
  for (int i = 0; i < n; ++i) {
    const double x1 = eng.normal(211, 45), x2 = eng.normal(4.2, 0.35);
    const double a = eng.uniform01() < 0.5 ? 1.0 : 0.0;
    const double mu = -15 - 0.2 * x1 + 12 * x2 + a * (-65 + 0.5 * x1 - 5.5 * x2);
    out << x1 << "," << x2 << "," << a << "," << mu + 3 * eng.normal() << "\n";
  }
  return dir / "dtr.csv";
}

}  // namespace

TEST_CASE("contour run: exit 0, files, determinism, duality") {
  const fs::path dir = make_tmp();
  const fs::path csv = write_gamma_csv(dir, 100, 42);
  const std::string out1 = (dir / "run1").string();
  const std::string args = "contour --problem quantile --tau 0.5 --input " + csv.string() +
                           " --B 500 --seed 7 --alpha 0.05 --threads 2 --out " + out1;
  REQUIRE(run(args) == 0);
  std::map<std::string, std::string> snapshot;
  for (const char* f : {"contour.csv", "region.json", "estimate.json", "distribution.json"}) {
    REQUIRE(fs::exists(fs::path(out1) / f));
    snapshot[f] = slurp(fs::path(out1) / f);
  }
  REQUIRE(run(args) == 0);  // identical invocation: byte-identical outputs
  for (const auto& [f, content] : snapshot) REQUIRE(slurp(fs::path(out1) / f) == content);

  // Peak of the contour sits at the sample median (the estimator).
  const json est = json::parse(slurp(fs::path(out1) / "estimate.json"));
  const double theta_hat = est["theta_hat"][0];
  double peak_theta = 0.0, peak_value = -1.0;

  // Parse the contour CSV and re-derive the region to check duality.
  std::istringstream csvin(slurp(fs::path(out1) / "contour.csv"));
  std::string line;
  bool saw_config = false, saw_header = false;
  std::vector<std::pair<double, double>> rows;
  while (std::getline(csvin, line)) {
    if (line.rfind("# ", 0) == 0) {
      saw_config = saw_config || line.find("seed=7") != std::string::npos;
      continue;
    }
    if (!saw_header) {
      REQUIRE(line == "theta_1,contour");
      saw_header = true;
      continue;
    }
    const auto comma = line.find(',');
    rows.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
  }
  REQUIRE(saw_config);  // outputs embed the run configuration
  REQUIRE(rows.size() == 401);
  for (const auto& [theta, value] : rows)
    if (value > peak_value) {
      peak_value = value;
      peak_theta = theta;
    }
  REQUIRE(std::fabs(peak_theta - theta_hat) < (rows[1].first - rows[0].first) * 1.5);

  const json region = json::parse(slurp(fs::path(out1) / "region.json"));
  REQUIRE(region["alpha"] == 0.05);
  REQUIRE(region["config"]["B"] == 500);
  const auto intervals = region["intervals"];
  REQUIRE(intervals.size() >= 1);
  const double lo = intervals.front()[0], hi = intervals.back()[1];
  // Region-membership duality, recomputed from the emitted files alone.
  for (const auto& [theta, value] : rows) {
    const bool inside = theta >= lo && theta <= hi;
    bool in_some = false;
    for (const auto& iv : intervals)
      if (theta >= double(iv[0]) && theta <= double(iv[1])) in_some = true;
    REQUIRE(in_some == (value > 0.05));
    if (!inside) REQUIRE(value <= 0.05);
  }

  const json distj = json::parse(slurp(fs::path(out1) / "distribution.json"));
  REQUIRE(distj["B"] == 500);
  REQUIRE(distj["stats"].size() == 500);
  fs::remove_all(dir);
}

TEST_CASE("schema errors exit 2 with a line diagnostic") {
  const fs::path dir = make_tmp();
  {
    std::ofstream out(dir / "bad.csv");
    out << "z1\n1.0\noops\n";
  }
  const std::string cmd = bin() + " contour --problem quantile --input " +
                          (dir / "bad.csv").string() + " --out " + (dir / "o").string() +
                          " 2> " + (dir / "err.txt").string();
  const int status = std::system(cmd.c_str());
  REQUIRE(WEXITSTATUS(status) == 2);
  const std::string err = slurp(dir / "err.txt");
  REQUIRE(err.find("line 3") != std::string::npos);
  fs::remove_all(dir);
}

TEST_CASE("usage errors exit 2") {
  const fs::path dir = make_tmp();
  REQUIRE(run("contour --problem nosuch --input missing.csv --out " + (dir / "o").string()) == 2);
  REQUIRE(run("nonsense") == 2);
  const fs::path csv = write_gamma_csv(dir, 20, 1);
  REQUIRE(run("contour --problem quantile --input " + csv.string() + " --grid 0:1 --out " +
              (dir / "o").string()) == 2);
  fs::remove_all(dir);
}

TEST_CASE("numerical failures exit 3") {
  const fs::path dir = make_tmp();
  {
    std::ofstream out(dir / "one.csv");
    out << "z1,z2\n1.0,2.0\n";  // a single bivariate point: rank-0 psi covariance
  }
  REQUIRE(run("contour --problem spatial-median --input " + (dir / "one.csv").string() +
              " --B 20 --out " + (dir / "o").string()) == 3);
  fs::remove_all(dir);
}

TEST_CASE("GIMKIT_SEED is honored and --seed overrides it") {
  const fs::path dir = make_tmp();
  const fs::path csv = write_gamma_csv(dir, 40, 3);
  const std::string base = " contour --problem quantile --input " + csv.string() + " --B 50 --out ";
  {
    const std::string cmd = "GIMKIT_SEED=12345 " + bin() + base + (dir / "env").string() +
                            " >/dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    const json j = json::parse(slurp(dir / "env" / "estimate.json"));
    REQUIRE(j["config"]["seed"] == 12345);
  }
  {
    const std::string cmd = "GIMKIT_SEED=12345 " + bin() + base + (dir / "flag").string() +
                            " --seed 6 >/dev/null 2>&1";
    REQUIRE(WEXITSTATUS(std::system(cmd.c_str())) == 0);
    const json j = json::parse(slurp(dir / "flag" / "estimate.json"));
    REQUIRE(j["config"]["seed"] == 6);
  }
  fs::remove_all(dir);
}

TEST_CASE("marginal command emits per-feature tables") {
  const fs::path dir = make_tmp();
  const fs::path csv = write_dtr_csv(dir, 250, 9);
  REQUIRE(run("marginal --feature treatment-effect --feature value-static --input " +
              csv.string() + " --B 120 --seed 4 --threads 2 --out " + (dir / "m").string()) == 0);
  for (const char* f : {"marginal_treatment-effect.csv", "marginal_value-static.csv"}) {
    const std::string text = slurp(dir / "m" / f);
    REQUIRE(text.find("theta_1,contour") != std::string::npos);
    REQUIRE(text.find("# command=marginal") != std::string::npos);
  }
  REQUIRE(run("marginal --feature bogus --input " + csv.string() + " --out " +
              (dir / "m2").string()) == 2);
  fs::remove_all(dir);
}

TEST_CASE("simulate uniformity smoke path runs in seconds") {
  const fs::path dir = make_tmp();
  REQUIRE(run("simulate --experiment uniformity --problem quantile --tau 0.5 --n 40 --B 80 "
              "--M 10 --seed 2 --threads 2 --out " + (dir / "u").string()) == 0);
  const json j = json::parse(slurp(dir / "u" / "report.json"));
  REQUIRE(j["replications"] == 10);
  REQUIRE(j.contains("ks_to_uniform"));
  REQUIRE(j["config"]["experiment"] == "uniformity");
  REQUIRE(fs::exists(dir / "u" / "ecdf.csv"));
  REQUIRE(fs::exists(dir / "u" / "report.md"));

  // KS recomputed from the emitted ECDF by an independent reader.
  std::istringstream in(slurp(dir / "u" / "ecdf.csv"));
  std::string line;
  std::vector<std::pair<double, double>> pts;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#' || line[0] == 'u') continue;
    const auto comma = line.find(',');
    pts.emplace_back(std::stod(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
  }
  REQUIRE(pts.size() == 10);
  double ks = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    ks = std::max(ks, std::fabs(pts[i].second - pts[i].first));
    ks = std::max(ks, std::fabs(pts[i].first - (i) / 10.0));
  }
  REQUIRE(ks == Catch::Approx(double(j["ks_to_uniform"])).margin(1e-12));
  fs::remove_all(dir);
}

TEST_CASE("simulate coverage smoke emits the three-method table") {
  const fs::path dir = make_tmp();
  REQUIRE(run("simulate --experiment coverage --n 40 --B 60 --M 8 --seed 3 --threads 2 --out " +
              (dir / "c").string()) == 0);
  const std::string md = slurp(dir / "c" / "report.md");
  REQUIRE(md.find("| tau | GIM | Conservative | Bootstrap |") == 0);
  REQUIRE(md.find("| 0.25 |") != std::string::npos);
  REQUIRE(md.find("| 0.75 |") != std::string::npos);
  const json j = json::parse(slurp(dir / "c" / "report.json"));
  REQUIRE(j["reports"].size() == 9);
  fs::remove_all(dir);
}
