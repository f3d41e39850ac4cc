#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Dense>

#include "bregcal/errors.hpp"
#include "bregcal/estimate.hpp"
#include "bregcal/math.hpp"
#include "bregcal/simkit.hpp"

using namespace bregcal;

namespace {

std::vector<Generator> mean_scale_generators() {
  // Generators whose domain admits mean-scale baselines near 1.
  return {Generator::squared_loss(), Generator::kullback_leibler(),
          Generator::empirical_likelihood(), Generator::squared_hellinger(),
          Generator::renyi(2.0)};
}

// Mean-scale instance with intercept. Targets are reachable by
// construction: they are the moments of an exponentially tilted baseline,
// which keeps the optimum interior for every positive-weight generator.
CalibrationProblem mean_instance(Eigen::Index n, std::uint64_t seed,
                                 double tilt = 0.05) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  CalibrationProblem prob;
  prob.X.resize(n, 3);
  prob.X.col(0).setOnes();
  for (Eigen::Index i = 0; i < n; ++i) {
    prob.X(i, 1) = 2.0 * unif(rng);
    prob.X(i, 2) = unif(rng) + 0.5;
  }
  prob.w0.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) prob.w0[i] = 0.6 + 0.8 * unif(rng);

  Eigen::VectorXd eta(3);
  for (int j = 0; j < 3; ++j) eta[j] = tilt * (2.0 * unif(rng) - 1.0);
  prob.targets = Eigen::VectorXd::Zero(3);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w_true = prob.w0[i] * std::exp(prob.X.row(i).dot(eta));
    prob.targets += w_true * prob.X.row(i).transpose();
  }
  prob.targets /= static_cast<double>(n);
  prob.scale = Scale::Mean;
  prob.n_pop = 5 * n;
  return prob;
}

}  // namespace

TEST_CASE("ipw examples") {
  Eigen::VectorXd y(3), w(3);
  y << 1.0, 2.0, 6.0;
  w << 2.0, 2.0, 2.0;
  CHECK(ipw(y, w, Target::PopulationMean) == doctest::Approx(3.0));

  Eigen::VectorXd yc = Eigen::VectorXd::Constant(5, 4.2);
  Eigen::VectorXd wc(5);
  wc << 1, 2, 3, 4, 5;
  CHECK(ipw(yc, wc, Target::PopulationMean) == doctest::Approx(4.2));

  Eigen::VectorXd y2(2), w2(2);
  y2 << 0.0, 4.0;
  w2 << 1.0, 3.0;
  CHECK(ipw(y2, w2, Target::PopulationMean) == doctest::Approx(3.0));
  CHECK(ipw(y2, w2, Target::PopulationTotal) == doctest::Approx(12.0));

  CHECK_THROWS_AS(ipw(Eigen::VectorXd(), Eigen::VectorXd(),
                      Target::PopulationMean),
                  InvalidArgument);
}

TEST_CASE("linear outcomes are estimated exactly by calibration") {
  const auto prob = mean_instance(120, 3);
  Eigen::VectorXd b(3);
  b << 0.5, -1.25, 2.0;
  const Eigen::VectorXd y = prob.X * b;
  const double expected = prob.targets.dot(b);
  for (const auto& gen : mean_scale_generators()) {
    CAPTURE(gen.name());
    CHECK(std::abs(bc_estimate(gen, prob, y) - expected) <= 1e-8);
  }
}

TEST_CASE("calibrated baseline reduces BC and DS to IPW") {
  auto prob = mean_instance(80, 7, 0.0);
  // Normalize the baseline so the intercept target is already met, then set
  // targets to the baseline-weighted means.
  prob.w0 *= static_cast<double>(prob.n()) / prob.w0.sum();
  prob.targets = prob.X.transpose() * prob.w0 / static_cast<double>(prob.n());

  std::mt19937_64 rng(9);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd y(prob.n());
  for (Eigen::Index i = 0; i < prob.n(); ++i) y[i] = gauss(rng);

  const double hajek = ipw(y, prob.w0, Target::PopulationMean);
  for (const auto& gen : mean_scale_generators()) {
    CAPTURE(gen.name());
    CHECK(bc_estimate(gen, prob, y) == doctest::Approx(hajek).epsilon(1e-9));
    CHECK(ds_estimate(gen, prob, y) == doctest::Approx(hajek).epsilon(1e-9));
  }
}

TEST_CASE("quadratic generator reproduces the GREG closed forms") {
  const auto sq = Generator::squared_loss();
  const auto prob = mean_instance(90, 13);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd y(prob.n());
  for (Eigen::Index i = 0; i < prob.n(); ++i) {
    y[i] = 1.0 + prob.X(i, 1) - 0.5 * prob.X(i, 2) + 0.3 * gauss(rng);
  }
  const double n = static_cast<double>(prob.n());

  // BC with the quadratic generator: GREG with unweighted OLS coefficients
  // (q_i = 1/g'(w) = 1 identically).
  {
    const Eigen::MatrixXd A = prob.X.transpose() * prob.X;
    const Eigen::VectorXd beta =
        A.ldlt().solve(prob.X.transpose() * y);
    const double greg = prob.targets.dot(beta) +
                        prob.w0.dot(y - prob.X * beta) / n;
    CHECK(bc_estimate(sq, prob, y) == doctest::Approx(greg).epsilon(1e-10));
  }
  // DS with the quadratic generator: GREG with w0-weighted coefficients.
  {
    const Eigen::MatrixXd A =
        prob.X.transpose() * prob.w0.asDiagonal() * prob.X;
    const Eigen::VectorXd beta =
        A.ldlt().solve(prob.X.transpose() * (prob.w0.asDiagonal() * y));
    const double greg = prob.targets.dot(beta) +
                        prob.w0.dot(y - prob.X * beta) / n;
    CHECK(ds_estimate(sq, prob, y) == doctest::Approx(greg).epsilon(1e-10));
  }
}

TEST_CASE("exponential tilting ties DS and BC weight vectors") {
  const auto kl = Generator::kullback_leibler();
  for (std::uint64_t seed : {21u, 22u, 23u, 24u}) {
    const auto prob = mean_instance(100, seed);
    const auto bc = solve(kl, prob);
    const auto ds = ds_solve(kl, prob);
    const double rel =
        ((bc.weights - ds.weights).cwiseAbs().cwiseQuotient(
             bc.weights.cwiseAbs().cwiseMax(1.0)))
            .maxCoeff();
    CHECK(rel <= 1e-8);
  }
}

TEST_CASE("empirical likelihood separates DS from BC") {
  const auto el = Generator::empirical_likelihood();
  const auto prob = mean_instance(100, 3);
  std::mt19937_64 rng(3);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd y(prob.n());
  for (Eigen::Index i = 0; i < prob.n(); ++i) {
    y[i] = prob.X(i, 1) + 0.5 * gauss(rng);
  }
  const double bc = bc_estimate(el, prob, y);
  const double ds = ds_estimate(el, prob, y);
  CHECK(std::abs(bc - ds) > 0.0);
}

TEST_CASE("DS rejects generators whose domain excludes the ratio anchor") {
  const auto ce = Generator::contrast_entropy();
  const auto prob = mean_instance(20, 5);
  CHECK_THROWS_AS(ds_solve(ce, prob), InvalidArgument);
}

TEST_CASE("weighted regression coefficient") {
  std::mt19937_64 rng(31);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const Eigen::Index n = 150;
  Eigen::MatrixXd X(n, 3);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = gauss(rng);
    X(i, 2) = gauss(rng) + 1.0;
    y[i] = 2.0 - X(i, 1) + 0.5 * X(i, 2) + 0.2 * gauss(rng);
  }

  // Constant curvature weights cancel: OLS.
  const auto ols = weighted_reg_coef(X, y, Eigen::VectorXd::Ones(n));
  const auto scaled = weighted_reg_coef(X, y, Eigen::VectorXd::Constant(n, 3.7));
  CHECK((ols.beta - scaled.beta).lpNorm<Eigen::Infinity>() <= 1e-10);

  // Normal-equation residual bound.
  Eigen::VectorXd qhat(n);
  for (Eigen::Index i = 0; i < n; ++i) qhat[i] = 0.5 + std::abs(gauss(rng));
  const auto wls = weighted_reg_coef(X, y, qhat);
  const Eigen::VectorXd resid =
      X.transpose() * (qhat.asDiagonal() * (y - X * wls.beta));
  const double scale =
      (X.transpose() * (qhat.asDiagonal() * y)).cwiseAbs().maxCoeff();
  CHECK(resid.lpNorm<Eigen::Infinity>() <= 1e-8 * std::max(1.0, scale));

  // Contrast entropy turns design weights into the design-optimal q.
  const auto ce = Generator::contrast_entropy();
  Eigen::VectorXd d(4);
  d << 2.0, 3.0, 5.0, 10.0;
  const Eigen::VectorXd q = curvature_weights(ce, d);
  for (int i = 0; i < 4; ++i) {
    CHECK(q[i] == doctest::Approx(d[i] * d[i] - d[i]).epsilon(1e-14));
  }
}

TEST_CASE("debiased prediction estimator") {
  const auto kl = Generator::kullback_leibler();
  const auto prob = mean_instance(100, 41);
  std::mt19937_64 rng(41);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::VectorXd y(prob.n());
  for (Eigen::Index i = 0; i < prob.n(); ++i) {
    y[i] = 0.3 + prob.X(i, 1) + gauss(rng);
  }
  // Fake population matrix consistent with the targets.
  Eigen::MatrixXd pop_X = prob.X;

  // beta = 0 reduces to the pure weighting term.
  const auto res = solve(kl, prob);
  const double pure =
      res.weights.dot(y) / static_cast<double>(prob.n());
  CHECK(dp_estimate(pop_X, prob.X, y, res.weights,
                    Eigen::VectorXd::Zero(3)) == doctest::Approx(pure));

  // Exactly linear outcomes + calibrated weights: DP equals BC.
  Eigen::VectorXd b(3);
  b << 1.0, -2.0, 0.25;
  const Eigen::VectorXd ylin = prob.X * b;
  // pop_X must reproduce the targets for the prediction term to match.
  // Use a two-row matrix whose column means equal the targets.
  Eigen::MatrixXd pop2(2, 3);
  pop2.row(0) = prob.targets.transpose() * 0.5;
  pop2.row(1) = prob.targets.transpose() * 1.5;
  const double bc = bc_estimate(kl, prob, ylin);
  CHECK(dp_estimate(pop2, prob.X, ylin, res.weights, b) ==
        doctest::Approx(bc).epsilon(1e-9));
}

TEST_CASE("BC-DP gap shrinks with the sample size") {
  // Light version of the O(1/n) equivalence: the median gap at n ~ 1000
  // should sit well below the gap at n ~ 250.
  const auto el = Generator::empirical_likelihood();
  auto median_gap = [&](Eigen::Index n_pop, std::uint64_t base) {
    std::vector<double> gaps;
    for (int rep = 0; rep < 40; ++rep) {
      Scenario scn;
      scn.n_pop = n_pop;
      scn.seed = mix_seed(base, rep);
      const Population pop = gen_population(scn);
      const Eigen::Index n = pop.delta.sum();
      Eigen::MatrixXd X(n, 5);
      Eigen::VectorXd y(n), w0(n);
      Eigen::Index r = 0;
      const double rate =
          static_cast<double>(n) / static_cast<double>(n_pop);
      for (Eigen::Index i = 0; i < pop.X.rows(); ++i) {
        if (pop.delta[i] == 1) {
          X(r, 0) = 1.0;
          X.row(r).tail(4) = pop.X.row(i);
          y[r] = pop.y[i];
          w0[r] = rate / pop.pi[i];
          ++r;
        }
      }
      CalibrationProblem prob;
      prob.X = X;
      prob.w0 = w0;
      prob.targets.resize(5);
      prob.targets[0] = 1.0;
      prob.targets.tail(4) = pop.X.colwise().mean();
      prob.scale = Scale::Mean;
      prob.n_pop = n_pop;

      const auto res = solve(el, prob);
      const double mu_bc = res.weights.dot(y) / static_cast<double>(n);
      Eigen::MatrixXd pop_X(pop.X.rows(), 5);
      pop_X.col(0).setOnes();
      pop_X.rightCols(4) = pop.X;
      const auto beta =
          weighted_reg_coef(X, y, curvature_weights(el, res.weights));
      const double mu_dp = dp_estimate(pop_X, X, y, res.weights, beta.beta);
      gaps.push_back(std::abs(mu_bc - mu_dp));
    }
    std::sort(gaps.begin(), gaps.end());
    return gaps[gaps.size() / 2];
  };

  const double g_small = median_gap(700, 1001);
  const double g_large = median_gap(2800, 2002);
  CHECK(g_large < g_small);
}

TEST_CASE("mean-scale estimation requires an intercept column") {
  const auto kl = Generator::kullback_leibler();
  auto prob = mean_instance(50, 51);
  prob.X.col(0) = prob.X.col(2);  // intercept destroyed
  prob.targets[0] = prob.X.col(0).mean();
  Eigen::VectorXd y = prob.X.col(1);
  CHECK_THROWS_AS(bc_estimate(kl, prob, y), InvalidArgument);
}
