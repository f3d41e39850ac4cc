// Command-line front end: calibrate / estimate / simulate / conjugate-check.

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bregcal/entropy.hpp"
#include "bregcal/errors.hpp"
#include "bregcal/estimate.hpp"
#include "bregcal/frame.hpp"
#include "bregcal/inference.hpp"
#include "bregcal/math.hpp"
#include "bregcal/propensity.hpp"
#include "bregcal/simkit.hpp"
#include "bregcal/softcal.hpp"
#include "bregcal/solver.hpp"
#include "bregcal/version.hpp"

namespace {

using json = nlohmann::json;
using namespace bregcal;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd Z(X.rows(), X.cols() + 1);
  Z.col(0).setOnes();
  Z.rightCols(X.cols()) = X;
  return Z;
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw SchemaError("cannot write file: " + path);
  out << j.dump(2) << '\n';
}

void write_manifest(const std::string& path, const std::string& command,
                    std::uint64_t seed, double runtime_sec,
                    const std::vector<std::string>& outputs) {
  json m;
  m["command"] = command;
  m["version"] = BREGCAL_VERSION;
  m["seed"] = seed;
  m["runtime_sec"] = runtime_sec;
  m["outputs"] = outputs;
  write_json(path, m);
}

struct IoOptions {
  std::string respondents;
  std::string population;
  std::string targets;
  long pop_size = 0;
  std::string scale = "mean";
  std::string generator = "kl";
  double tol = 1e-9;
  int max_iter = 100;
  std::string pi_mode = "known";
  std::string learner = "glm";
  int folds = 5;
  std::uint64_t seed = 1;
};

struct LoadedData {
  RespondentFrame resp;
  std::optional<PopulationFrame> pop;
  Eigen::Index n_pop = 0;
  Scale scale = Scale::Mean;
  Eigen::VectorXd w0;      // baseline weights on the requested scale
  Eigen::VectorXd pi_hat;  // respondent-side inclusion probabilities
};

LoadedData load_inputs(const IoOptions& io) {
  LoadedData d;
  d.resp = read_respondents(io.respondents);
  d.scale = io.scale == "total" ? Scale::Total : Scale::Mean;
  if (!io.population.empty()) {
    d.pop.emplace(read_population(io.population));
    check_ids_subset(d.resp, *d.pop);
    if (d.pop->X.cols() != d.resp.X.cols()) {
      throw SchemaError("population and respondent files disagree on x1..xp");
    }
    d.n_pop = d.pop->X.rows();
  }
  if (io.pop_size > 0) d.n_pop = io.pop_size;
  if (d.n_pop <= 0) {
    throw InvalidArgument(
        "population size unknown: give --population or --pop-size");
  }

  const Eigen::Index n = d.resp.X.rows();
  const double rate = static_cast<double>(n) / static_cast<double>(d.n_pop);
  if (io.pi_mode == "crossfit") {
    if (!d.pop.has_value()) {
      throw InvalidArgument("--pi crossfit needs --population (x, delta)");
    }
    const auto learner = io.learner == "spline"
                             ? PropensityLearner::LogisticSpline
                             : PropensityLearner::LogisticLinear;
    const PropensityFit fit =
        fit_crossfitted(d.pop->X, d.pop->delta, io.folds, learner, io.seed);
    d.w0 = baseline_weights(fit, d.pop->delta);
    if (d.w0.size() != n) {
      throw SchemaError(
          "respondent rows do not match delta=1 population rows");
    }
    d.pi_hat = (d.w0 / rate).cwiseInverse();
    if (d.scale == Scale::Total) d.w0 = d.pi_hat.cwiseInverse();
  } else {
    if (!d.resp.has_pi) {
      throw SchemaError("--pi known needs a 'pi' column in the respondent file",
                        "pi");
    }
    if ((d.resp.pi.array() <= 0.0).any() || (d.resp.pi.array() > 1.0).any()) {
      throw SchemaError("column 'pi' must lie in (0, 1]", "pi");
    }
    d.pi_hat = d.resp.pi;
    d.w0 = d.pi_hat.cwiseInverse();
    if (d.scale == Scale::Mean) d.w0 *= rate;
  }
  return d;
}

CalibrationProblem build_problem(const LoadedData& d, const IoOptions& io) {
  CalibrationProblem prob;
  prob.X = with_intercept(d.resp.X);
  prob.w0 = d.w0;
  prob.scale = d.scale;
  prob.n_pop = d.n_pop;
  prob.targets.resize(prob.X.cols());

  const double Nd = static_cast<double>(d.n_pop);
  if (!io.targets.empty()) {
    const TargetsFrame t = read_targets(io.targets);
    if (t.values.size() != d.resp.X.cols()) {
      throw SchemaError("targets file must have one column per auxiliary");
    }
    for (std::size_t j = 0; j < t.names.size(); ++j) {
      const std::string expected = "x" + std::to_string(j + 1);
      if (t.names[j] != expected) {
        throw SchemaError("targets columns must be x1..xp in order; got '" +
                              t.names[j] + "'",
                          t.names[j]);
      }
    }
    prob.targets[0] = d.scale == Scale::Mean ? 1.0 : Nd;
    prob.targets.tail(t.values.size()) = t.values;
  } else if (d.pop.has_value()) {
    prob.targets[0] = d.scale == Scale::Mean ? 1.0 : Nd;
    if (d.scale == Scale::Mean) {
      prob.targets.tail(d.pop->X.cols()) = d.pop->X.colwise().mean();
    } else {
      prob.targets.tail(d.pop->X.cols()) = d.pop->X.colwise().sum();
    }
  } else {
    throw InvalidArgument("need --targets or --population for calibration");
  }
  return prob;
}

json result_diagnostics(const CalibrationResult& res,
                        const CalibrationProblem& prob) {
  json diag;
  diag["iterations"] = res.iterations;
  diag["grad_norm"] = res.grad_norm;
  diag["dual_value"] = res.dual_value;
  diag["converged"] = res.converged;
  diag["lambda"] = std::vector<double>(
      res.lambda.data(), res.lambda.data() + res.lambda.size());
  const Eigen::VectorXd achieved = prob.X.transpose() * res.weights;
  const Eigen::VectorXd tt = prob.targets_total();
  double worst = 0.0;
  for (Eigen::Index j = 0; j < tt.size(); ++j) {
    worst = std::max(worst, std::abs(achieved[j] - tt[j]) /
                                std::max(1.0, std::abs(tt[j])));
  }
  diag["max_rel_imbalance"] = worst;
  return diag;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateOptions : IoOptions {
  std::string method = "bc";
  std::string out = "weights.csv";
  std::string diagnostics;
  std::string manifest;
  bool soft = false;
  std::string q = "inf";
  std::string tau = "auto";
  std::string pilot = "ols";
  int cv_folds = 5;
};

int cmd_calibrate(const CalibrateOptions& opt) {
  const auto t0 = Clock::now();
  const Generator gen = Generator::from_key(opt.generator);
  const LoadedData d = load_inputs(opt);

  std::vector<std::string> outputs{opt.out};
  json diag;
  diag["generator"] = gen.key();
  diag["scale"] = opt.scale;
  diag["n"] = d.resp.X.rows();
  diag["n_pop"] = d.n_pop;

  if (!opt.soft) {
    const CalibrationProblem prob = build_problem(d, opt);
    SolverOptions sopts;
    sopts.tol = opt.tol;
    sopts.max_iter = opt.max_iter;
    const CalibrationResult res = opt.method == "ds" ? ds_solve(gen, prob, sopts)
                                                     : solve(gen, prob, sopts);
    write_weights_csv(opt.out, d.resp.ids, res.weights);
    diag["method"] = opt.method;
    diag.update(result_diagnostics(res, prob));
  } else {
    if (!d.pop.has_value()) {
      throw InvalidArgument(
          "--soft needs --population for finite-population standardization");
    }
    const PopulationStandardizer st = PopulationStandardizer::fit(d.pop->X);

    NormOrder q = NormOrder::LInf;
    if (opt.q == "1") q = NormOrder::L1;
    else if (opt.q == "2") q = NormOrder::L2;
    else if (opt.q != "inf") throw InvalidArgument("--q must be 1, 2 or inf");

    Eigen::VectorXd pilot_beta;
    if (opt.pilot == "none") {
      pilot_beta = Eigen::VectorXd::Ones(d.resp.X.cols());
    } else {
      const auto method =
          opt.pilot == "lasso" ? PilotMethod::LassoRefit : PilotMethod::OLS;
      pilot_beta = pilot_coef(st.apply(d.resp.X), d.resp.y, method, opt.seed);
    }

    auto builder = [&](double tau_global,
                       const std::vector<Eigen::Index>& rows) {
      SoftProblem sp;
      sp.Xt = st.apply(d.resp.X(rows, Eigen::all));
      sp.w0 = d.w0(rows);
      sp.q = q;
      sp.tau = adaptive_tau(pilot_beta, tau_global);
      sp.n_pop = d.n_pop;
      return sp;
    };

    double tau_global;
    if (opt.tau == "auto") {
      const CvTauResult cv = cv_select_tau(gen, builder, d.resp.y,
                                           default_tau_grid(), opt.cv_folds,
                                           opt.seed);
      tau_global = cv.tau_selected;
      const std::string curve_path = opt.out + ".cv_curve.csv";
      std::vector<std::vector<std::string>> rows;
      for (const auto& pt : cv.curve) {
        rows.push_back({format_double(pt.tau),
                        pt.feasible ? format_double(pt.criterion) : "nan",
                        pt.feasible ? "1" : "0"});
      }
      write_table_csv(curve_path, {"tau", "criterion", "feasible"}, rows);
      outputs.push_back(curve_path);
      diag["tau_curve"] = curve_path;
    } else {
      tau_global = std::stod(opt.tau);
    }

    std::vector<Eigen::Index> all(d.resp.X.rows());
    for (Eigen::Index i = 0; i < d.resp.X.rows(); ++i) all[i] = i;
    const SoftProblem sp = builder(tau_global, all);
    const SoftResult res = solve_soft(gen, sp);
    write_weights_csv(opt.out, d.resp.ids, res.weights);

    diag["method"] = "sbc";
    diag["q"] = opt.q;
    diag["pilot"] = opt.pilot;
    diag["tau_global"] = tau_global;
    diag["lambda0"] = res.lambda0;
    diag["lambda"] = std::vector<double>(
        res.lambda.data(), res.lambda.data() + res.lambda.size());
    std::vector<std::string> active;
    for (const auto k : res.active_set) {
      active.push_back("x" + std::to_string(k + 1));
    }
    diag["active_set"] = active;
    diag["kkt_gap"] = res.kkt_gap;
    diag["iterations"] = res.iterations;
    diag["converged"] = res.converged;
  }

  const std::string diag_path =
      opt.diagnostics.empty() ? opt.out + ".diagnostics.json" : opt.diagnostics;
  write_json(diag_path, diag);
  outputs.push_back(diag_path);

  const std::string manifest_path =
      opt.manifest.empty() ? opt.out + ".manifest.json" : opt.manifest;
  write_manifest(manifest_path, "calibrate", opt.seed, seconds_since(t0),
                 outputs);
  return 0;
}

// ----------------------------------------------------------------- estimate

struct EstimateOptions : IoOptions {
  std::string method = "bc";
  std::string variance = "none";
  std::string joint_file;
  std::string target = "mean";
  std::string out;
  std::string manifest;
};

JointInclusion load_joint(const std::string& path, Eigen::Index n,
                          const Eigen::VectorXd& pi) {
  if (path.empty()) return JointInclusion::poisson();
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open file: " + path);
  Eigen::MatrixXd m = pi * pi.transpose();
  m.diagonal() = pi;
  std::string line;
  std::getline(in, line);  // header i,j,value
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string a, b, c;
    if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') ||
        !std::getline(ss, c, ',')) {
      throw SchemaError("joint file rows must be i,j,value triples");
    }
    const long i = std::stol(a), j = std::stol(b);
    if (i < 0 || j < 0 || i >= n || j >= n) {
      throw SchemaError("joint file index out of range");
    }
    const double v = std::stod(c);
    m(i, j) = v;
    m(j, i) = v;
  }
  return JointInclusion::user(std::move(m));
}

int cmd_estimate(const EstimateOptions& opt) {
  const auto t0 = Clock::now();
  const Generator gen = Generator::from_key(opt.generator);
  const LoadedData d = load_inputs(opt);
  const Target target = opt.target == "total" ? Target::PopulationTotal
                                              : Target::PopulationMean;
  const Eigen::Index n = d.resp.X.rows();

  SolverOptions sopts;
  sopts.tol = opt.tol;
  sopts.max_iter = opt.max_iter;

  // Weighted estimate under the problem's scale conventions.
  const auto estimate_from = [&](const CalibrationProblem& p,
                                 const Eigen::VectorXd& w) {
    if (target == Target::PopulationTotal) return w.dot(d.resp.y);
    if (p.scale == Scale::Mean) {
      return w.dot(d.resp.y) / static_cast<double>(n);
    }
    return w.dot(d.resp.y) / static_cast<double>(d.n_pop);
  };

  double value = 0.0;
  Eigen::VectorXd weights = d.w0;
  const CalibrationProblem prob = opt.method == "ipw"
                                      ? CalibrationProblem{}
                                      : build_problem(d, opt);
  if (opt.method == "ipw") {
    value = ipw(d.resp.y, d.w0, target);
  } else if (opt.method == "bc" || opt.method == "dp") {
    const CalibrationResult res = solve(gen, prob, sopts);
    weights = res.weights;
    if (opt.method == "bc") {
      value = estimate_from(prob, weights);
    } else {
      if (!d.pop.has_value()) {
        throw UnsupportedWithoutFrameError(
            "--method dp needs --population for the prediction term");
      }
      const WeightedRegCoef beta = weighted_reg_coef(
          prob.X, d.resp.y, curvature_weights(gen, weights));
      value = dp_estimate(with_intercept(d.pop->X), prob.X, d.resp.y, weights,
                          beta.beta);
    }
  } else if (opt.method == "ds") {
    const CalibrationResult res = ds_solve(gen, prob, sopts);
    weights = res.weights;
    value = estimate_from(prob, weights);
  } else {
    throw InvalidArgument("--method must be bc, ds, dp or ipw");
  }

  json out;
  out["estimator"] = opt.method;
  out["generator"] = gen.key();
  out["value"] = value;
  json diag;
  diag["n"] = n;
  diag["n_pop"] = d.n_pop;
  diag["pi"] = opt.pi_mode;
  out["diagnostics"] = diag;

  if (opt.variance != "none") {
    const Eigen::MatrixXd Xv =
        opt.method == "ipw" ? with_intercept(d.resp.X) : prob.X;
    WeightedRegCoef beta;
    if (opt.method == "ipw") {
      beta.beta = Eigen::VectorXd::Zero(Xv.cols());
      beta.qhat = Eigen::VectorXd::Ones(n);
    } else {
      beta = weighted_reg_coef(Xv, d.resp.y, curvature_weights(gen, weights));
    }
    VarianceEstimate ve;
    if (opt.variance == "design") {
      const JointInclusion joint = load_joint(opt.joint_file, n, d.pi_hat);
      ve = var_design(Xv, d.resp.y, d.pi_hat, joint, beta, value, d.n_pop);
    } else if (opt.variance == "eta") {
      if (!d.pop.has_value()) {
        throw UnsupportedWithoutFrameError(
            "--variance eta needs unit-level population covariates "
            "(--population)");
      }
      ve = var_missing_eta(with_intercept(d.pop->X), d.pop->delta, Xv,
                           d.resp.y, weights, beta, value);
    } else if (opt.variance == "sample-only") {
      ve = var_sample_only(Xv, d.resp.y, d.pi_hat, beta, value, d.n_pop);
    } else {
      throw InvalidArgument("--variance must be design, eta or sample-only");
    }
    out["variance"] = {{"method", opt.variance},
                       {"value", ve.value},
                       {"ci_low", ve.ci_low},
                       {"ci_high", ve.ci_high},
                       {"clipped_negative", ve.clipped_negative}};
  }

  if (opt.out.empty()) {
    std::cout << out.dump() << '\n';
  } else {
    write_json(opt.out, out);
    write_manifest(opt.manifest.empty() ? opt.out + ".manifest.json"
                                        : opt.manifest,
                   "estimate", opt.seed, seconds_since(t0), {opt.out});
  }
  return 0;
}

// ----------------------------------------------------------------- simulate

struct SimulateOptions {
  int study = 1;
  std::string cells = "ps0-or0,ps0-or1,ps1-or0,ps1-or1";
  std::string learner = "glm";
  long n_pop = 2000;
  int reps = 200;
  int folds = 5;
  std::uint64_t seed = 20250801;
  std::string generator = "kl";
  double fixed_tau = 5e-4;
  bool tau_sweep = false;
  int p = 50;
  double rho = 0.5;
  bool full_scale = false;
  std::string out_dir = ".";
  std::string config;
};

std::vector<std::pair<PsModel, OrModel>> parse_cells(const std::string& s) {
  std::vector<std::pair<PsModel, OrModel>> cells;
  std::istringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    PsModel ps;
    OrModel om;
    if (tok == "ps0-or0") { ps = PsModel::PS0; om = OrModel::OR0; }
    else if (tok == "ps0-or1") { ps = PsModel::PS0; om = OrModel::OR1; }
    else if (tok == "ps1-or0") { ps = PsModel::PS1; om = OrModel::OR0; }
    else if (tok == "ps1-or1") { ps = PsModel::PS1; om = OrModel::OR1; }
    else throw InvalidArgument("unknown cell '" + tok + "'");
    cells.emplace_back(ps, om);
  }
  if (cells.empty()) throw InvalidArgument("--cells is empty");
  return cells;
}

void apply_config_file(SimulateOptions& opt) {
  if (opt.config.empty()) return;
  std::ifstream in(opt.config);
  if (!in) throw SchemaError("cannot open config: " + opt.config);
  json j;
  in >> j;
  if (j.contains("study")) opt.study = j["study"];
  if (j.contains("cells")) opt.cells = j["cells"];
  if (j.contains("learner")) opt.learner = j["learner"];
  if (j.contains("n_pop")) opt.n_pop = j["n_pop"];
  if (j.contains("replicates")) opt.reps = j["replicates"];
  if (j.contains("folds")) opt.folds = j["folds"];
  if (j.contains("seed")) opt.seed = j["seed"];
  if (j.contains("generator")) opt.generator = j["generator"];
  if (j.contains("fixed_tau")) opt.fixed_tau = j["fixed_tau"];
  if (j.contains("tau_sweep")) opt.tau_sweep = j["tau_sweep"];
  if (j.contains("p")) opt.p = j["p"];
  if (j.contains("rho")) opt.rho = j["rho"];
}

int cmd_simulate(const SimulateOptions& opt_in) {
  const auto t0 = Clock::now();
  SimulateOptions opt = opt_in;
  apply_config_file(opt);
  if (opt.full_scale) {
    opt.n_pop = 10000;
    opt.reps = 500;
    if (opt.study == 2) opt.p = 500;
  }

  const std::string report_path = opt.out_dir + "/report.csv";
  std::vector<std::string> outputs{report_path};
  MCReport report;
  std::vector<TauCurvePoint> curves;
  std::string study_label = std::to_string(opt.study);

  if (opt.study == 1) {
    Study1Config cfg;
    cfg.cells = parse_cells(opt.cells);
    cfg.learner = opt.learner == "spline" ? PropensityLearner::LogisticSpline
                                          : PropensityLearner::LogisticLinear;
    cfg.n_pop = opt.n_pop;
    cfg.replicates = opt.reps;
    cfg.k_folds = opt.folds;
    cfg.seed = opt.seed;
    report = run_study1(cfg);
  } else if (opt.study == 2) {
    Study2Config cfg;
    cfg.n_pop = opt.n_pop;
    cfg.p = opt.p;
    cfg.rho = opt.rho;
    cfg.replicates = opt.reps;
    cfg.k_folds = opt.folds;
    cfg.generator_key = opt.generator;
    cfg.fixed_tau = opt.fixed_tau;
    cfg.tau_sweep = opt.tau_sweep;
    cfg.seed = opt.seed;
    Study2Output out = run_study2(cfg);
    report = std::move(out.report);
    curves = std::move(out.curves);
  } else {
    throw InvalidArgument("--study must be 1 or 2");
  }

  std::vector<std::vector<std::string>> rows;
  for (const auto& r : report.rows) {
    rows.push_back({study_label, r.cell, r.learner, r.estimator, r.q,
                    format_double(r.bias_x100), format_double(r.se_x100),
                    format_double(r.rmse_x100),
                    std::to_string(report.replicates)});
  }
  write_table_csv(report_path,
                  {"study", "cell", "learner", "estimator", "q", "bias_x100",
                   "se_x100", "rmse_x100", "replicates"},
                  rows);

  if (!curves.empty()) {
    const std::string curve_path = opt.out_dir + "/tau_curves.csv";
    std::vector<std::vector<std::string>> crows;
    for (const auto& c : curves) {
      crows.push_back({c.pilot, c.q, format_double(c.tau),
                       format_double(c.bias_x100), format_double(c.se_x100),
                       format_double(c.rmse_x100)});
    }
    write_table_csv(curve_path,
                    {"pilot", "q", "tau", "bias_x100", "se_x100", "rmse_x100"},
                    crows);
    outputs.push_back(curve_path);
  }

  write_manifest(opt.out_dir + "/manifest.json", "simulate", opt.seed,
                 seconds_since(t0), outputs);
  return 0;
}

// ---------------------------------------------------------- conjugate-check

int cmd_conjugate_check(const std::string& only_key) {
  std::vector<Generator> gens;
  if (!only_key.empty()) {
    gens.push_back(Generator::from_key(only_key));
  } else {
    gens = {Generator::squared_loss(),   Generator::kullback_leibler(),
            Generator::shifted_kl(),     Generator::empirical_likelihood(),
            Generator::squared_hellinger(), Generator::renyi(0.5),
            Generator::renyi(1.0),       Generator::renyi(2.0),
            Generator::contrast_entropy()};
  }

  std::printf("%-22s %-14s %-14s %-14s %s\n", "generator", "inverse-link",
              "fenchel-young", "curvature", "result");
  bool all_ok = true;
  for (const auto& gen : gens) {
    double worst_inv = 0.0, worst_fy = 0.0, worst_curv = 0.0;
    for (int i = 0; i < 200; ++i) {
      const double t = i / 199.0;
      const double w =
          std::isinf(gen.domain_lo())
              ? -20.0 + 40.0 * t
              : gen.domain_lo() +
                    std::exp(std::log(1e-2) + t * std::log(50.0 / 1e-2));
      const double nu = gen.g(w);
      worst_inv = std::max(
          worst_inv, std::abs(gen.Fprime(nu) - w) / std::max(1.0, w));
      worst_fy = std::max(worst_fy,
                          std::abs(gen.F(nu) + gen.G(w) - w * nu) /
                              std::max(1.0, std::abs(w * nu)));
      worst_curv = std::max(
          worst_curv,
          std::abs(gen.Fsecond(nu) * gen.gprime(gen.Fprime(nu)) - 1.0));
    }
    const bool ok = worst_inv <= 1e-10 && worst_fy <= 1e-10 &&
                    worst_curv <= 1e-10;
    all_ok = all_ok && ok;
    std::printf("%-22s %-14.3e %-14.3e %-14.3e %s\n", gen.name().c_str(),
                worst_inv, worst_fy, worst_curv, ok ? "PASS" : "FAIL");
  }

  // Contrast-entropy design-optimality identity.
  {
    const auto ce = Generator::contrast_entropy();
    double worst = 0.0;
    for (int i = 0; i < 2000; ++i) {
      const double w = 1.0 + 1e-3 + (99.0 - 1e-3) * i / 1999.0;
      worst = std::max(worst, std::abs(ce.qweight(w) - (w * (w - 1.0))));
    }
    const bool ok = worst <= 1e-12;
    all_ok = all_ok && ok;
    std::printf("%-22s %-14.3e %-14s %-14s %s\n", "ce design-optimality",
                worst, "-", "-", ok ? "PASS" : "FAIL");
  }
  return all_ok ? 0 : 1;
}

std::string error_code(const std::exception& e) {
  if (dynamic_cast<const DomainError*>(&e)) return "domain";
  if (dynamic_cast<const MaxIterationsError*>(&e)) return "max-iterations";
  if (dynamic_cast<const InfeasibleError*>(&e)) return "infeasible";
  if (dynamic_cast<const DegenerateFoldError*>(&e)) return "degenerate-fold";
  if (dynamic_cast<const SingularFitError*>(&e)) return "singular-fit";
  if (dynamic_cast<const UnsupportedWithoutFrameError*>(&e)) {
    return "unsupported-without-frame";
  }
  if (dynamic_cast<const SchemaError*>(&e)) return "schema";
  if (dynamic_cast<const InvalidArgument*>(&e)) return "invalid-argument";
  return "error";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bregman calibration weighting"};
  app.require_subcommand(1);
  app.set_version_flag("--version", BREGCAL_VERSION);

  CalibrateOptions cal;
  auto* c = app.add_subcommand("calibrate", "compute calibration weights");
  c->add_option("--respondents", cal.respondents)->required();
  c->add_option("--population", cal.population);
  c->add_option("--targets", cal.targets);
  c->add_option("--pop-size", cal.pop_size);
  c->add_option("--scale", cal.scale)->check(CLI::IsMember({"mean", "total"}));
  c->add_option("--generator", cal.generator);
  c->add_option("--method", cal.method)->check(CLI::IsMember({"bc", "ds"}));
  c->add_option("--tol", cal.tol);
  c->add_option("--max-iter", cal.max_iter);
  c->add_option("--pi", cal.pi_mode)->check(CLI::IsMember({"known", "crossfit"}));
  c->add_option("--learner", cal.learner)->check(CLI::IsMember({"glm", "spline"}));
  c->add_option("--folds", cal.folds);
  c->add_option("--seed", cal.seed);
  c->add_option("--out", cal.out);
  c->add_option("--diagnostics", cal.diagnostics);
  c->add_option("--manifest", cal.manifest);
  c->add_flag("--soft", cal.soft);
  c->add_option("--q", cal.q)->check(CLI::IsMember({"1", "2", "inf"}));
  c->add_option("--tau", cal.tau);
  c->add_option("--pilot", cal.pilot)->check(CLI::IsMember({"ols", "lasso", "none"}));
  c->add_option("--cv-folds", cal.cv_folds);

  EstimateOptions est;
  auto* e = app.add_subcommand("estimate", "point estimate with variance");
  e->add_option("--respondents", est.respondents)->required();
  e->add_option("--population", est.population);
  e->add_option("--targets", est.targets);
  e->add_option("--pop-size", est.pop_size);
  e->add_option("--scale", est.scale)->check(CLI::IsMember({"mean", "total"}));
  e->add_option("--generator", est.generator);
  e->add_option("--method", est.method)
      ->check(CLI::IsMember({"bc", "ds", "dp", "ipw"}));
  e->add_option("--tol", est.tol);
  e->add_option("--max-iter", est.max_iter);
  e->add_option("--pi", est.pi_mode)->check(CLI::IsMember({"known", "crossfit"}));
  e->add_option("--learner", est.learner)->check(CLI::IsMember({"glm", "spline"}));
  e->add_option("--folds", est.folds);
  e->add_option("--seed", est.seed);
  e->add_option("--variance", est.variance)
      ->check(CLI::IsMember({"none", "design", "eta", "sample-only"}));
  e->add_option("--joint-file", est.joint_file);
  e->add_option("--target", est.target)->check(CLI::IsMember({"mean", "total"}));
  e->add_option("--out", est.out);
  e->add_option("--manifest", est.manifest);

  SimulateOptions sim;
  auto* s = app.add_subcommand("simulate", "Monte Carlo studies");
  s->add_option("--study", sim.study);
  s->add_option("--cells", sim.cells);
  s->add_option("--learner", sim.learner)->check(CLI::IsMember({"glm", "spline"}));
  s->add_option("--n-pop", sim.n_pop);
  s->add_option("--reps", sim.reps);
  s->add_option("--folds", sim.folds);
  s->add_option("--seed", sim.seed);
  s->add_option("--generator", sim.generator);
  s->add_option("--fixed-tau", sim.fixed_tau);
  s->add_flag("--tau-sweep", sim.tau_sweep);
  s->add_option("--p", sim.p);
  s->add_option("--rho", sim.rho);
  s->add_flag("--full-scale", sim.full_scale);
  s->add_option("--out-dir", sim.out_dir);
  s->add_option("--config", sim.config);

  std::string check_key;
  auto* k = app.add_subcommand("conjugate-check",
                               "run the generator conjugacy suite");
  k->add_option("--generator", check_key);

  CLI11_PARSE(app, argc, argv);

  try {
    if (app.got_subcommand(c)) return cmd_calibrate(cal);
    if (app.got_subcommand(e)) return cmd_estimate(est);
    if (app.got_subcommand(s)) return cmd_simulate(sim);
    if (app.got_subcommand(k)) return cmd_conjugate_check(check_key);
  } catch (const std::exception& ex) {
    nlohmann::json err;
    err["error"] = {{"type", error_code(ex)}, {"message", ex.what()}};
    std::cerr << err.dump() << std::endl;
    return 1;
  }
  return 0;
}
