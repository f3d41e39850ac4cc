// End-to-end checks of the bregcal command-line tool. Each case shells out
// to the built binary (path injected via BREGCAL_CLI_PATH).
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "bregcal/estimate.hpp"
#include "bregcal/math.hpp"
#include "bregcal/solver.hpp"

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct CliFixture {
  fs::path dir;

  CliFixture() {
    dir = fs::temp_directory_path() /
          ("bregcal_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir);
  }
  ~CliFixture() { fs::remove_all(dir); }

  std::string file(const std::string& name, const std::string& content) const {
    const fs::path p = dir / name;
    std::ofstream out(p);
    out << content;
    return p.string();
  }

  std::string path(const std::string& name) const {
    return (dir / name).string();
  }

  RunResult run(const std::string& args) const {
    const fs::path out = dir / "stdout.txt";
    const fs::path err = dir / "stderr.txt";
    const std::string cmd = std::string(BREGCAL_CLI_PATH) + " " + args +
                            " > " + out.string() + " 2> " + err.string();
    const int rc = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WEXITSTATUS(rc);
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }
};

// Deterministic toy frame: 8 respondents of a 16-unit population.
struct ToyData {
  std::string resp_csv;
  std::string pop_csv;
  Eigen::MatrixXd rX;
  Eigen::VectorXd ry, rpi;
};

ToyData make_toy(const CliFixture& fx, double pi_value = 0.5) {
  ToyData t;
  std::ostringstream resp, pop;
  resp.precision(17);
  pop.precision(17);
  resp << "id,y,x1,x2,pi\n";
  pop << "id,x1,x2,delta\n";
  bregcal::Rng rng(2024);
  const int N = 16;
  t.rX.resize(8, 2);
  t.ry.resize(8);
  t.rpi.resize(8);
  int r = 0;
  for (int i = 0; i < N; ++i) {
    const double x1 = 1.0 + 2.0 * rng.uniform();
    const double x2 = -1.0 + rng.uniform();
    const double y = 2.0 + x1 - x2 + 0.25 * rng.normal();
    const bool sampled = i % 2 == 0;
    pop << "u" << i << ',' << x1 << ',' << x2 << ',' << (sampled ? 1 : 0)
        << '\n';
    if (sampled) {
      resp << "u" << i << ',' << y << ',' << x1 << ',' << x2 << ','
           << pi_value << '\n';
      t.rX(r, 0) = x1;
      t.rX(r, 1) = x2;
      t.ry[r] = y;
      t.rpi[r] = pi_value;
      ++r;
    }
  }
  t.resp_csv = fx.file("resp.csv", resp.str());
  t.pop_csv = fx.file("pop.csv", pop.str());
  return t;
}

std::vector<double> read_weights(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);  // header
  std::vector<double> w;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    w.push_back(std::stod(line.substr(line.find(',') + 1)));
  }
  return w;
}

}  // namespace

TEST_CASE("calibrate writes weights, diagnostics and a manifest") {
  CliFixture fx;
  const ToyData t = make_toy(fx);
  const auto r = fx.run("calibrate --respondents " + t.resp_csv +
                        " --population " + t.pop_csv +
                        " --generator kl --method bc --scale mean --out " +
                        fx.path("w.csv"));
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  const auto w = read_weights(fx.path("w.csv"));
  REQUIRE(w.size() == 8);

  const json diag = json::parse(slurp(fx.path("w.csv.diagnostics.json")));
  CHECK(diag["converged"].get<bool>());
  CHECK(diag["max_rel_imbalance"].get<double>() <= 1e-8);
  CHECK(diag["generator"] == "kl");

  const json manifest = json::parse(slurp(fx.path("w.csv.manifest.json")));
  CHECK(manifest["command"] == "calibrate");
  CHECK(manifest.contains("seed"));
  CHECK(manifest.contains("version"));
}

TEST_CASE("already-calibrated baselines are returned unchanged") {
  CliFixture fx;
  const ToyData t = make_toy(fx);  // pi = n/N = 0.5 so w0 = 1 on mean scale
  // Targets equal the baseline-weighted means: column means of respondents.
  std::ostringstream targets;
  targets << "x1,x2\n"
          << t.rX.col(0).mean() << ',' << t.rX.col(1).mean() << '\n';
  const auto tpath = fx.file("targets.csv", targets.str());
  const auto r = fx.run("calibrate --respondents " + t.resp_csv +
                        " --targets " + tpath +
                        " --pop-size 16 --generator el --out " +
                        fx.path("w0.csv"));
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  for (const double w : read_weights(fx.path("w0.csv"))) {
    CHECK(w == doctest::Approx(1.0).epsilon(1e-7));
  }
}

TEST_CASE("exponential tilting: bc and ds weight files agree") {
  CliFixture fx;
  const ToyData t = make_toy(fx);
  REQUIRE(fx.run("calibrate --respondents " + t.resp_csv + " --population " +
                 t.pop_csv + " --generator kl --method bc --out " +
                 fx.path("bc.csv"))
              .exit_code == 0);
  REQUIRE(fx.run("calibrate --respondents " + t.resp_csv + " --population " +
                 t.pop_csv + " --generator kl --method ds --out " +
                 fx.path("ds.csv"))
              .exit_code == 0);
  const auto bc = read_weights(fx.path("bc.csv"));
  const auto ds = read_weights(fx.path("ds.csv"));
  REQUIRE(bc.size() == ds.size());
  for (std::size_t i = 0; i < bc.size(); ++i) {
    CHECK(std::abs(bc[i] - ds[i]) <= 1e-8 * std::max(1.0, std::abs(bc[i])));
  }
}

TEST_CASE("malformed input produces a one-line schema error and exit 1") {
  CliFixture fx;
  const auto bad = fx.file("bad.csv", "id,x1,pi\nu,1,0.5\n");  // no y column
  const auto r = fx.run("calibrate --respondents " + bad +
                        " --pop-size 4 --out " + fx.path("w.csv"));
  CHECK(r.exit_code != 0);
  CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
  const json err = json::parse(r.err);
  CHECK(err["error"]["type"] == "schema");
  CHECK(std::string(err["error"]["message"]).find("'y'") != std::string::npos);
}

TEST_CASE("census estimate returns the population mean exactly") {
  CliFixture fx;
  std::ostringstream resp, pop;
  resp << "id,y,x1,pi\n";
  pop << "id,x1,delta\n";
  bregcal::Rng rng(5);
  double sum = 0.0;
  for (int i = 0; i < 10; ++i) {
    const double x = rng.uniform();
    const double y = 1.0 + x + rng.normal();
    sum += y;
    resp << 'u' << i << ',' << std::setprecision(17) << y << ',' << x
         << ",1\n";
    pop << 'u' << i << ',' << x << ",1\n";
  }
  const auto r = fx.run("estimate --respondents " +
                        fx.file("resp.csv", resp.str()) + " --population " +
                        fx.file("pop.csv", pop.str()) +
                        " --method ipw --pi known");
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  const json out = json::parse(r.out);
  CHECK(out["value"].get<double>() == doctest::Approx(sum / 10.0).epsilon(1e-12));
}

TEST_CASE("estimate reproduces the library value bit for bit") {
  CliFixture fx;
  const ToyData t = make_toy(fx);
  const auto r = fx.run("estimate --respondents " + t.resp_csv +
                        " --population " + t.pop_csv +
                        " --generator hd --method bc --pi known "
                        "--variance sample-only");
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  const json out = json::parse(r.out);

  // Library-level reference with the same inputs.
  bregcal::CalibrationProblem prob;
  prob.X.resize(8, 3);
  prob.X.col(0).setOnes();
  prob.X.rightCols(2) = t.rX;
  prob.w0 = (0.5 * t.rpi.cwiseInverse());
  Eigen::MatrixXd pop_X(16, 2);
  {
    std::ifstream in(t.pop_csv);
    std::string line;
    std::getline(in, line);
    for (int i = 0; i < 16; ++i) {
      std::getline(in, line);
      std::istringstream ss(line);
      std::string id, x1, x2, d;
      std::getline(ss, id, ',');
      std::getline(ss, x1, ',');
      std::getline(ss, x2, ',');
      std::getline(ss, d, ',');
      pop_X(i, 0) = std::stod(x1);
      pop_X(i, 1) = std::stod(x2);
    }
  }
  prob.targets.resize(3);
  prob.targets[0] = 1.0;
  prob.targets[1] = pop_X.col(0).mean();
  prob.targets[2] = pop_X.col(1).mean();
  prob.scale = bregcal::Scale::Mean;
  prob.n_pop = 16;
  const double ref = bregcal::bc_estimate(
      bregcal::Generator::squared_hellinger(), prob, t.ry);
  CHECK(out["value"].get<double>() == ref);
  CHECK(out["variance"]["value"].get<double>() > 0.0);
  CHECK(out["variance"]["ci_low"].get<double>() <= ref);
  CHECK(out["variance"]["ci_high"].get<double>() >= ref);
}

TEST_CASE("eta variance without a population frame is refused") {
  CliFixture fx;
  const ToyData t = make_toy(fx);
  std::ostringstream targets;
  targets << "x1,x2\n"
          << t.rX.col(0).mean() << ',' << t.rX.col(1).mean() << '\n';
  const auto r = fx.run("estimate --respondents " + t.resp_csv +
                        " --targets " + fx.file("targets.csv", targets.str()) +
                        " --pop-size 16 --method bc --variance eta");
  CHECK(r.exit_code != 0);
  const json err = json::parse(r.err);
  CHECK(err["error"]["type"] == "unsupported-without-frame");
}

TEST_CASE("simulate is deterministic in the seed") {
  CliFixture fx;
  fs::create_directories(fx.dir / "runA");
  fs::create_directories(fx.dir / "runB");
  const std::string common =
      "simulate --study 1 --cells ps0-or0 --n-pop 400 --reps 4 --folds 2 "
      "--seed 31 --out-dir ";
  REQUIRE(fx.run(common + fx.path("runA")).exit_code == 0);
  REQUIRE(fx.run(common + fx.path("runB")).exit_code == 0);
  const std::string a = slurp(fx.dir / "runA" / "report.csv");
  const std::string b = slurp(fx.dir / "runB" / "report.csv");
  CHECK(a == b);
  CHECK(a.find("study,cell,learner,estimator") == 0);
  const json manifest = json::parse(slurp(fx.dir / "runA" / "manifest.json"));
  CHECK(manifest["seed"].get<std::uint64_t>() == 31);
}

TEST_CASE("soft calibration through the CLI") {
  CliFixture fx;
  const ToyData t = make_toy(fx);
  const auto r = fx.run("calibrate --respondents " + t.resp_csv +
                        " --population " + t.pop_csv +
                        " --generator kl --soft --q inf --tau 0.05 "
                        "--pilot none --out " +
                        fx.path("soft.csv"));
  CAPTURE(r.err);
  REQUIRE(r.exit_code == 0);
  const json diag = json::parse(slurp(fx.path("soft.csv.diagnostics.json")));
  CHECK(diag["method"] == "sbc");
  CHECK(diag["kkt_gap"].get<double>() <= 1e-6);
  CHECK(diag.contains("active_set"));
  const auto w = read_weights(fx.path("soft.csv"));
  double sum = 0.0;
  for (const double wi : w) sum += wi;
  CHECK(sum == doctest::Approx(8.0).epsilon(1e-8));
}

TEST_CASE("conjugate-check passes for the shipped generators") {
  CliFixture fx;
  const auto r = fx.run("conjugate-check");
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("PASS") != std::string::npos);
  CHECK(r.out.find("FAIL") == std::string::npos);

  const auto one = fx.run("conjugate-check --generator renyi:0.5");
  CHECK(one.exit_code == 0);
}
