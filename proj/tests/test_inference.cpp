#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "bregcal/errors.hpp"
#include "bregcal/estimate.hpp"
#include "bregcal/inference.hpp"
#include "bregcal/math.hpp"
#include "bregcal/simkit.hpp"
#include "bregcal/solver.hpp"

using namespace bregcal;

namespace {

WeightedRegCoef zero_beta(Eigen::Index p, Eigen::Index n) {
  WeightedRegCoef b;
  b.beta = Eigen::VectorXd::Zero(p);
  b.qhat = Eigen::VectorXd::Ones(n);
  return b;
}

}  // namespace

TEST_CASE("design variance, Poisson kind") {
  // Zero residuals give zero variance.
  Eigen::MatrixXd X(3, 1);
  X << 1.0, 2.0, 3.0;
  Eigen::VectorXd beta1(1);
  beta1 << 2.0;
  const Eigen::VectorXd y = X * beta1;
  WeightedRegCoef wrc;
  wrc.beta = beta1;
  wrc.qhat = Eigen::VectorXd::Ones(3);
  const Eigen::VectorXd pi = Eigen::VectorXd::Constant(3, 0.4);
  const auto v0 = var_design(X, y, pi, JointInclusion::poisson(), wrc, 1.0, 10);
  CHECK(v0.value == doctest::Approx(0.0));
  CHECK(v0.ci_low <= 1.0);
  CHECK(v0.ci_high >= 1.0);

  // Hand arithmetic: one unit, pi = 0.5, e = 2, N = 10.
  Eigen::MatrixXd X1 = Eigen::MatrixXd::Ones(1, 1);
  Eigen::VectorXd y1(1);
  y1 << 2.0;
  const auto v1 = var_design(X1, y1, Eigen::VectorXd::Constant(1, 0.5),
                             JointInclusion::poisson(), zero_beta(1, 1), 0.0,
                             10);
  CHECK(v1.value == doctest::Approx(0.08).epsilon(1e-12));
}

TEST_CASE("user joint-inclusion matrix") {
  Rng rng(3);
  const Eigen::Index n = 12;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXd y(n), pi(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
    y[i] = 0.4 * X(i, 1) + rng.normal();
    pi[i] = 0.3 + 0.4 * rng.uniform();
  }
  const auto beta = zero_beta(2, n);

  // pi_ij = pi_i pi_j off the diagonal reproduces the Poisson value.
  Eigen::MatrixXd m = pi * pi.transpose();
  m.diagonal() = pi;
  const auto vp = var_design(X, y, pi, JointInclusion::poisson(), beta, 0.0, 40);
  const auto vu = var_design(X, y, pi, JointInclusion::user(m), beta, 0.0, 40);
  CHECK(vu.value == doctest::Approx(vp.value).epsilon(1e-12));

  // Direct-evaluation oracle with beta = 0: HT variance of the raw
  // weighted mean of y.
  double oracle = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    oracle += (1.0 - pi[i]) * (y[i] / pi[i]) * (y[i] / pi[i]);
  }
  oracle /= 1600.0;
  CHECK(vp.value == doctest::Approx(oracle).epsilon(1e-12));

  // Adversarial pairwise matrix pushing the quadratic form negative.
  Eigen::MatrixXd bad(2, 2);
  bad << 0.5, 0.9, 0.9, 0.5;
  Eigen::MatrixXd X2 = Eigen::MatrixXd::Ones(2, 1);
  Eigen::VectorXd y2(2);
  y2 << 2.0, -2.0;
  const auto vneg =
      var_design(X2, y2, Eigen::VectorXd::Constant(2, 0.5),
                 JointInclusion::user(bad), zero_beta(1, 2), 0.0, 10);
  CHECK(vneg.value == 0.0);
  CHECK(vneg.clipped_negative);

  CHECK_THROWS_AS(JointInclusion::user(Eigen::MatrixXd::Zero(2, 2)),
                  InvalidArgument);
}

TEST_CASE("eta-based missing-data variance") {
  // delta = 1 everywhere with unit weights and exactly linear y: only the
  // prediction spread survives.
  const Eigen::Index N = 50;
  Rng rng(9);
  Eigen::MatrixXd pop_X(N, 2);
  for (Eigen::Index i = 0; i < N; ++i) {
    pop_X(i, 0) = 1.0;
    pop_X(i, 1) = rng.normal();
  }
  Eigen::VectorXd b(2);
  b << 1.0, 0.7;
  const Eigen::VectorXd y = pop_X * b;
  WeightedRegCoef wrc;
  wrc.beta = b;
  wrc.qhat = Eigen::VectorXd::Ones(N);
  const Eigen::VectorXi delta = Eigen::VectorXi::Ones(N);
  const Eigen::VectorXd w = Eigen::VectorXd::Ones(N);

  const auto v = var_missing_eta(pop_X, delta, pop_X, y, w, wrc, y.mean());
  const Eigen::VectorXd pred = pop_X * b;
  const double spread =
      (pred.array() - pred.mean()).square().sum() / (double(N) * N);
  CHECK(v.value == doctest::Approx(spread).epsilon(1e-12));

  // Constant eta: zero variance.
  const Eigen::VectorXd yc = Eigen::VectorXd::Constant(N, 3.0);
  WeightedRegCoef wc;
  wc.beta = Eigen::VectorXd::Zero(2);
  wc.beta[0] = 3.0;
  wc.qhat = Eigen::VectorXd::Ones(N);
  const auto vc = var_missing_eta(pop_X, delta, pop_X, yc, w, wc, 3.0);
  CHECK(vc.value == doctest::Approx(0.0));

  CHECK_THROWS_AS(var_missing_eta(Eigen::MatrixXd(), Eigen::VectorXi(),
                                  pop_X, y, w, wrc, 0.0),
                  UnsupportedWithoutFrameError);
}

TEST_CASE("sample-only variance") {
  const Eigen::Index n = 40;
  Rng rng(13);
  Eigen::MatrixXd X(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = rng.normal();
  }
  Eigen::VectorXd b(2);
  b << 0.5, 1.0;
  const Eigen::VectorXd y = X * b;
  WeightedRegCoef wrc;
  wrc.beta = b;
  wrc.qhat = Eigen::VectorXd::Ones(n);

  // census: pi = 1 kills the second term; first term is the finite
  // population variance of y (scaled by 1/N afterwards)
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(n);
  const double mu = y.mean();
  const auto v = var_sample_only(X, y, ones, wrc, mu, n);
  const double fpv = (y.array() - mu).square().sum() / double(n);
  CHECK(v.value == doctest::Approx(fpv / n).epsilon(1e-12));

  // y equal to mu and exactly linear: zero
  const Eigen::VectorXd yflat = Eigen::VectorXd::Constant(n, 2.0);
  WeightedRegCoef wflat;
  wflat.beta = Eigen::VectorXd::Zero(2);
  wflat.beta[0] = 2.0;
  wflat.qhat = Eigen::VectorXd::Ones(n);
  const auto v0 = var_sample_only(X, yflat, ones, wflat, 2.0, n);
  CHECK(v0.value == doctest::Approx(0.0));
}

TEST_CASE("eta and sample-only variances agree in order of magnitude") {
  // PS0/OR0 with known propensities; the two estimators are consistent for
  // the same limit, so the median ratio over instances stays near one.
  const auto kl = Generator::kullback_leibler();
  std::vector<double> ratios;
  for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u, 6u, 7u, 8u, 9u}) {
    Scenario scn;
    scn.n_pop = 1500;
    scn.seed = seed;
    const Population pop = gen_population(scn);
    const Eigen::Index N = pop.X.rows();
    const Eigen::Index n = pop.delta.sum();
    const double rate = double(n) / double(N);

    Eigen::MatrixXd X(n, 5);
    Eigen::VectorXd y(n), w0(n), pi(n);
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < N; ++i) {
      if (pop.delta[i] == 1) {
        X(r, 0) = 1.0;
        X.row(r).tail(4) = pop.X.row(i);
        y[r] = pop.y[i];
        pi[r] = pop.pi[i];
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
    prob.n_pop = N;

    const auto res = solve(kl, prob);
    const double mu = res.weights.dot(y) / double(n);
    const auto beta = weighted_reg_coef(X, y, curvature_weights(kl, res.weights));

    Eigen::MatrixXd pop_X(N, 5);
    pop_X.col(0).setOnes();
    pop_X.rightCols(4) = pop.X;
    const auto veta =
        var_missing_eta(pop_X, pop.delta, X, y, res.weights, beta, mu);
    const auto vso = var_sample_only(X, y, pi, beta, mu, N);
    ratios.push_back(vso.value / veta.value);
  }
  std::sort(ratios.begin(), ratios.end());
  const double med = ratios[ratios.size() / 2];
  CHECK(med >= 0.75);
  CHECK(med <= 1.25);
}
