#include "bregcal/simkit.hpp"

#include <chrono>
#include <cmath>

#include "bregcal/errors.hpp"
#include "bregcal/estimate.hpp"
#include "bregcal/math.hpp"
#include "bregcal/parallel.hpp"

namespace bregcal {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

double linear_ps(PsModel m, double x2, double x3) {
  if (m == PsModel::PS0) {
    return -1.0 - 0.25 * x2 + 0.5 * x3;
  }
  const double quart = x2 - 2.5;
  return -1.0 - 0.25 * (x2 - 3.0) * (x3 - 4.0) +
         0.5 * quart * quart * quart * quart;
}

double outcome_mean(OrModel m, double x1, double x2) {
  double v = 1.0 + x1 - x2;
  if (m == OrModel::OR1) v += x1 * x2 + (x2 * x2 - 1.0);
  return v;
}

struct ErrorTable {
  // errors(b, e) = estimate - replicate truth
  Eigen::MatrixXd errors;
  std::vector<MCRow> rows;  // templates carrying labels

  void summarize(MCReport& report) const {
    const double B = static_cast<double>(errors.rows());
    for (Eigen::Index e = 0; e < errors.cols(); ++e) {
      MCRow row = rows[e];
      const double bias = errors.col(e).mean();
      const double msq = errors.col(e).squaredNorm() / B;
      const double var = std::max(msq - bias * bias, 0.0);
      row.bias_x100 = 100.0 * bias;
      row.se_x100 = 100.0 * std::sqrt(var);
      row.rmse_x100 = 100.0 * std::sqrt(msq);
      report.rows.push_back(row);
    }
  }
};

}  // namespace

std::string or_model_name(OrModel m) { return m == OrModel::OR0 ? "or0" : "or1"; }
std::string ps_model_name(PsModel m) { return m == PsModel::PS0 ? "ps0" : "ps1"; }

void Scenario::validate() const {
  if (n_pop < 100) throw InvalidArgument("scenario: N must be >= 100");
  if (!(rho > -1.0 && rho < 1.0)) {
    throw InvalidArgument("scenario: rho must lie in (-1, 1)");
  }
  if (p_extra < 0) throw InvalidArgument("scenario: p_extra must be >= 0");
  if (p_extra > 0 && p_extra < 3) {
    throw InvalidArgument("scenario: study-two draws need p_extra >= 3");
  }
}

Population gen_population(const Scenario& scn) {
  scn.validate();
  const Eigen::Index N = scn.n_pop;
  const int p = scn.p_extra == 0 ? 4 : scn.p_extra;

  Population pop;
  pop.X.resize(N, p);
  pop.y.resize(N);
  pop.pi.resize(N);
  pop.delta.resize(N);

  Rng rng(mix_seed(scn.seed, 0x706f7075ULL));  // "popu"
  const double ar = scn.rho;
  const double ar_noise = std::sqrt(1.0 - ar * ar);
  for (Eigen::Index i = 0; i < N; ++i) {
    if (scn.p_extra == 0) {
      for (int j = 0; j < 4; ++j) {
        pop.X(i, j) = rng.truncated_normal(2.0, 1.0, 0.0, 4.0);
      }
    } else {
      // Stationary AR-1 path shifted to mean 2.
      double z = rng.normal();
      pop.X(i, 0) = 2.0 + z;
      for (int j = 1; j < p; ++j) {
        z = ar * z + ar_noise * rng.normal();
        pop.X(i, j) = 2.0 + z;
      }
    }
    const double e = rng.normal();
    pop.y[i] = outcome_mean(scn.or_model, pop.X(i, 0), pop.X(i, 1)) + e;
    pop.pi[i] = logistic(linear_ps(scn.ps_model, pop.X(i, 1), pop.X(i, 2)));
    pop.delta[i] = rng.bernoulli(pop.pi[i]) ? 1 : 0;
  }
  return pop;
}

namespace {

struct RespondentData {
  Eigen::MatrixXd X;  // n x p raw
  Eigen::VectorXd y;
  Eigen::Index n = 0;
};

RespondentData respondents(const Population& pop) {
  RespondentData r;
  r.n = pop.delta.sum();
  r.X.resize(r.n, pop.X.cols());
  r.y.resize(r.n);
  Eigen::Index k = 0;
  for (Eigen::Index i = 0; i < pop.X.rows(); ++i) {
    if (pop.delta[i] == 1) {
      r.X.row(k) = pop.X.row(i);
      r.y[k] = pop.y[i];
      ++k;
    }
  }
  return r;
}

}  // namespace

MCReport run_study1(const Study1Config& config) {
  const auto t0 = Clock::now();
  const Generator kl = Generator::kullback_leibler();
  const Generator el = Generator::empirical_likelihood();
  const Generator hd = Generator::squared_hellinger();
  const char* names[] = {"ipw", "et", "ds-el", "bc-el", "ds-hd", "bc-hd"};
  const int n_est = 6;

  MCReport report;
  report.replicates = config.replicates;
  const std::string learner_name =
      config.learner == PropensityLearner::LogisticLinear ? "glm" : "spline";

  for (std::size_t c = 0; c < config.cells.size(); ++c) {
    const auto [ps, om] = config.cells[c];
    const std::string cell = ps_model_name(ps) + "-" + or_model_name(om);

    ErrorTable table;
    table.errors.resize(config.replicates, n_est);
    for (int e = 0; e < n_est; ++e) {
      table.rows.push_back({cell, learner_name, names[e], "", 0, 0, 0});
    }

    parallel_for(config.replicates, [&](long b) {
      Scenario scn;
      scn.or_model = om;
      scn.ps_model = ps;
      scn.n_pop = config.n_pop;
      scn.seed = mix_seed(mix_seed(config.seed, c), static_cast<std::uint64_t>(b));
      const Population pop = gen_population(scn);
      const double mu_true = pop.y.mean();

      const PropensityFit fit = fit_crossfitted(
          pop.X, pop.delta, config.k_folds, config.learner, scn.seed);
      const Eigen::VectorXd w0 = baseline_weights(fit, pop.delta);
      const RespondentData r = respondents(pop);

      CalibrationProblem prob;
      prob.X.resize(r.n, 5);
      prob.X.col(0).setOnes();
      prob.X.rightCols(4) = r.X;
      prob.w0 = w0;
      prob.targets.resize(5);
      prob.targets[0] = 1.0;
      prob.targets.tail(4) = pop.X.colwise().mean();
      prob.scale = Scale::Mean;
      prob.n_pop = config.n_pop;

      table.errors(b, 0) = ipw(r.y, w0, Target::PopulationMean) - mu_true;
      table.errors(b, 1) = bc_estimate(kl, prob, r.y) - mu_true;
      table.errors(b, 2) = ds_estimate(el, prob, r.y) - mu_true;
      table.errors(b, 3) = bc_estimate(el, prob, r.y) - mu_true;
      table.errors(b, 4) = ds_estimate(hd, prob, r.y) - mu_true;
      table.errors(b, 5) = bc_estimate(hd, prob, r.y) - mu_true;
    });

    table.summarize(report);
  }
  report.runtime_sec = seconds_since(t0);
  return report;
}

Study2Output run_study2(const Study2Config& config) {
  const auto t0 = Clock::now();
  const Generator gen = Generator::from_key(config.generator_key);
  const NormOrder qs[] = {NormOrder::L1, NormOrder::L2, NormOrder::LInf};
  const PilotMethod pilots[] = {PilotMethod::OLS, PilotMethod::LassoRefit};
  const char* pilot_names[] = {"ols", "lasso"};

  // Column layout: ipw, full, oracle, then sbc per (pilot, q).
  const int n_base = 3;
  const int n_sbc = 2 * 3;
  const int n_est = n_base + n_sbc;
  const int n_grid = static_cast<int>(config.tau_grid.size());
  const int n_curve = config.tau_sweep ? n_sbc * n_grid : 0;

  ErrorTable table;
  table.errors.resize(config.replicates, n_est + n_curve);
  table.rows.push_back({"", "", "ipw", "", 0, 0, 0});
  table.rows.push_back({"", "", "full", "", 0, 0, 0});
  table.rows.push_back({"", "", "oracle", "", 0, 0, 0});
  for (int pi = 0; pi < 2; ++pi) {
    for (int qi = 0; qi < 3; ++qi) {
      table.rows.push_back(
          {"", pilot_names[pi], "sbc", norm_order_name(qs[qi]), 0, 0, 0});
    }
  }
  for (int pi = 0; pi < 2; ++pi) {
    for (int qi = 0; qi < 3; ++qi) {
      for (int t = 0; t < n_grid; ++t) {
        table.rows.push_back(
            {"", pilot_names[pi], "sbc", norm_order_name(qs[qi]), 0, 0, 0});
      }
    }
  }

  parallel_for(config.replicates, [&](long b) {
    Scenario scn;
    scn.or_model = OrModel::OR0;
    scn.ps_model = PsModel::PS0;
    scn.n_pop = config.n_pop;
    scn.p_extra = config.p;
    scn.rho = config.rho;
    scn.seed = mix_seed(config.seed, static_cast<std::uint64_t>(b));
    const Population pop = gen_population(scn);
    const double mu_true = pop.y.mean();

    const PropensityFit fit =
        fit_crossfitted(pop.X, pop.delta, config.k_folds,
                        PropensityLearner::LogisticLinear, scn.seed);
    const Eigen::VectorXd w0 = baseline_weights(fit, pop.delta);
    const RespondentData r = respondents(pop);

    const PopulationStandardizer std_fit = PopulationStandardizer::fit(pop.X);
    const Eigen::MatrixXd Xt = std_fit.apply(r.X);
    const Eigen::Index n = r.n;
    const Eigen::Index p = Xt.cols();

    table.errors(b, 0) = ipw(r.y, w0, Target::PopulationMean) - mu_true;

    // Full: exact calibration on the intercept plus all standardized
    // covariates (whose population means are zero by construction).
    CalibrationProblem full;
    full.X.resize(n, p + 1);
    full.X.col(0).setOnes();
    full.X.rightCols(p) = Xt;
    full.w0 = w0;
    full.targets = Eigen::VectorXd::Zero(p + 1);
    full.targets[0] = 1.0;
    full.scale = Scale::Mean;
    full.n_pop = config.n_pop;
    table.errors(b, 1) = bc_estimate(gen, full, r.y) - mu_true;

    CalibrationProblem oracle;
    oracle.X.resize(n, 3);
    oracle.X.col(0).setOnes();
    oracle.X.col(1) = Xt.col(0);
    oracle.X.col(2) = Xt.col(1);
    oracle.w0 = w0;
    oracle.targets = Eigen::VectorXd::Zero(3);
    oracle.targets[0] = 1.0;
    oracle.scale = Scale::Mean;
    oracle.n_pop = config.n_pop;
    table.errors(b, 2) = bc_estimate(gen, oracle, r.y) - mu_true;

    for (int pidx = 0; pidx < 2; ++pidx) {
      const Eigen::VectorXd beta =
          pilot_coef(Xt, r.y, pilots[pidx], scn.seed);
      for (int qi = 0; qi < 3; ++qi) {
        SoftProblem sp;
        sp.Xt = Xt;
        sp.w0 = w0;
        sp.q = qs[qi];
        sp.tau = adaptive_tau(beta, config.fixed_tau);
        sp.n_pop = config.n_pop;
        const SoftResult sres = solve_soft(gen, sp);
        const double est = sres.weights.dot(r.y) / static_cast<double>(n);
        table.errors(b, n_base + pidx * 3 + qi) = est - mu_true;

        if (config.tau_sweep) {
          for (int t = 0; t < n_grid; ++t) {
            SoftProblem sw = sp;
            sw.tau = adaptive_tau(beta, config.tau_grid[t]);
            const SoftResult swres = solve_soft(gen, sw);
            const double swest =
                swres.weights.dot(r.y) / static_cast<double>(n);
            const int col = n_est + (pidx * 3 + qi) * n_grid + t;
            table.errors(b, col) = swest - mu_true;
          }
        }
      }
    }
  });

  Study2Output out;
  out.report.replicates = config.replicates;
  MCReport all;
  table.summarize(all);
  for (int e = 0; e < n_est; ++e) out.report.rows.push_back(all.rows[e]);
  if (config.tau_sweep) {
    for (int pidx = 0; pidx < 2; ++pidx) {
      for (int qi = 0; qi < 3; ++qi) {
        for (int t = 0; t < n_grid; ++t) {
          const MCRow& row =
              all.rows[n_est + (pidx * 3 + qi) * n_grid + t];
          out.curves.push_back({pilot_names[pidx], norm_order_name(qs[qi]),
                                config.tau_grid[t], row.bias_x100,
                                row.se_x100, row.rmse_x100});
        }
      }
    }
  }
  out.report.runtime_sec = seconds_since(t0);
  return out;
}

}  // namespace bregcal
