#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bregcal/errors.hpp"
#include "bregcal/math.hpp"
#include "bregcal/propensity.hpp"
#include "bregcal/simkit.hpp"

using namespace bregcal;

namespace {

// Population draws from the study-one design, keeping the true coefficients.
Population ps0_population(Eigen::Index N, std::uint64_t seed) {
  Scenario scn;
  scn.n_pop = N;
  scn.seed = seed;
  return gen_population(scn);
}

}  // namespace

TEST_CASE("logistic IRLS recovers the PS0 coefficients") {
  const Population pop = ps0_population(10000, 42);
  const LogisticModel m = fit_logistic_linear(pop.X, pop.delta);
  // True linear predictor: -1 - 0.25 x2 + 0.5 x3 over (1, x1, x2, x3, x4).
  Eigen::VectorXd truth(5);
  truth << -1.0, 0.0, -0.25, 0.5, 0.0;
  REQUIRE(m.coef().size() == 5);
  for (int j = 0; j < 5; ++j) {
    CAPTURE(j);
    CHECK(std::abs(m.coef()[j] - truth[j]) <= 3.0 * m.coef_se()[j]);
  }
  const Eigen::VectorXd fitted = m.predict(pop.X);
  CHECK(fitted.minCoeff() > 0.0);
  CHECK(fitted.maxCoeff() < 1.0);
}

TEST_CASE("cross-fitted probabilities on a constant propensity") {
  const Eigen::Index N = 5000;
  Rng rng(7);
  Eigen::MatrixXd X(N, 2);
  Eigen::VectorXi delta(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    X(i, 0) = rng.normal();
    X(i, 1) = rng.normal();
    delta[i] = rng.bernoulli(0.5) ? 1 : 0;
  }
  const PropensityFit fit = fit_crossfitted(
      X, delta, 5, PropensityLearner::LogisticLinear, 99);
  CHECK(fit.pi_hat.mean() >= 0.45);
  CHECK(fit.pi_hat.mean() <= 0.55);
  CHECK(fit.pi_hat.minCoeff() >= 0.01);
  CHECK(fit.pi_hat.maxCoeff() <= 0.99);
}

TEST_CASE("fold labels are a uniform iid partition and K = N is honored") {
  const Eigen::Index N = 80;
  Eigen::MatrixXd X(N, 1);
  Eigen::VectorXi delta(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    X(i, 0) = 0.1 * static_cast<double>(i % 13) - 0.5;
    delta[i] = static_cast<int>(i % 2);  // both classes in every complement
  }
  const PropensityFit fit = fit_crossfitted(
      X, delta, static_cast<int>(N), PropensityLearner::LogisticLinear, 3);
  CHECK(fit.k_folds == N);
  for (Eigen::Index i = 0; i < N; ++i) {
    CHECK(fit.folds[i] >= 1);
    CHECK(fit.folds[i] <= N);
  }
  CHECK_THROWS_AS(
      fit_crossfitted(X, delta, 1, PropensityLearner::LogisticLinear, 3),
      InvalidArgument);
}

TEST_CASE("training-set hash audit proves out-of-fold honesty") {
  const Population pop = ps0_population(1200, 11);
  for (int K : {2, 5, 10}) {
    CAPTURE(K);
    const PropensityFit fit = fit_crossfitted(
        pop.X, pop.delta, K, PropensityLearner::LogisticLinear, 1234);
    REQUIRE(static_cast<int>(fit.fold_train_hash.size()) == K);
    for (int k = 1; k <= K; ++k) {
      std::vector<Eigen::Index> expected;  // ascending complement of fold k
      for (Eigen::Index i = 0; i < pop.X.rows(); ++i) {
        if (fit.folds[i] != k) expected.push_back(i);
      }
      CHECK(fit.fold_train_hash[k - 1] == hash_index_set(expected));
    }
  }
}

TEST_CASE("fit depends only on (X, delta, K, learner, seed)") {
  const Population pop = ps0_population(900, 21);
  const auto a = fit_crossfitted(pop.X, pop.delta, 4,
                                 PropensityLearner::LogisticLinear, 5);
  const auto b = fit_crossfitted(pop.X, pop.delta, 4,
                                 PropensityLearner::LogisticLinear, 5);
  CHECK((a.pi_hat - b.pi_hat).lpNorm<Eigen::Infinity>() == 0.0);
  CHECK(a.folds == b.folds);
}

TEST_CASE("degenerate training complement raises") {
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(50, 2);
  Eigen::VectorXi delta = Eigen::VectorXi::Ones(50);
  CHECK_THROWS_AS(
      fit_crossfitted(X, delta, 5, PropensityLearner::LogisticLinear, 1),
      DegenerateFoldError);
}

TEST_CASE("baseline weights from cross-fitted probabilities") {
  PropensityFit fit;
  fit.pi_hat.resize(4);
  fit.pi_hat << 0.5, 0.2, 0.5, 0.8;
  fit.folds = {1, 2, 1, 2};
  fit.k_folds = 2;
  Eigen::VectorXi delta(4);
  delta << 1, 1, 0, 1;
  // n/N = 3/4
  const Eigen::VectorXd w = baseline_weights(fit, delta);
  REQUIRE(w.size() == 3);
  CHECK(w[0] == doctest::Approx(0.75 / 0.5));
  CHECK(w[1] == doctest::Approx(0.75 / 0.2));
  CHECK(w[2] == doctest::Approx(0.75 / 0.8));

  // pi identically n/N gives unit weights
  PropensityFit unit;
  unit.pi_hat = Eigen::VectorXd::Constant(4, 0.75);
  unit.folds = {1, 1, 2, 2};
  const Eigen::VectorXd w1 = baseline_weights(unit, delta);
  CHECK((w1.array() - 1.0).abs().maxCoeff() <= 1e-15);

  // pi = 0.2 with n/N = 0.1
  PropensityFit half;
  half.pi_hat = Eigen::VectorXd::Constant(10, 0.2);
  half.folds.assign(10, 1);
  Eigen::VectorXi d10 = Eigen::VectorXi::Zero(10);
  d10[3] = 1;
  CHECK(baseline_weights(half, d10)[0] == doctest::Approx(0.5));
}

TEST_CASE("spline learner captures strong smooth nonlinearity") {
  // Quartic propensity in one covariate: far outside the linear model.
  const Eigen::Index N = 4000;
  Rng rng(31);
  Eigen::MatrixXd X(N, 1);
  Eigen::VectorXi delta(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    X(i, 0) = rng.truncated_normal(2.0, 1.0, 0.0, 4.0);
    const double c = -2.0 + 0.5 * std::pow(X(i, 0) - 2.0, 4.0);
    delta[i] = rng.bernoulli(logistic(c)) ? 1 : 0;
  }
  // Held-out deviance comparison on a fresh draw.
  Eigen::MatrixXd X2(N, 1);
  Eigen::VectorXi d2(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    X2(i, 0) = rng.truncated_normal(2.0, 1.0, 0.0, 4.0);
    d2[i] = rng.bernoulli(logistic(-2.0 + 0.5 * std::pow(X2(i, 0) - 2.0, 4.0)))
                ? 1
                : 0;
  }
  auto heldout_dev = [&](Eigen::VectorXd p) {
    p = p.cwiseMax(1e-12).cwiseMin(1.0 - 1e-12);
    double dev = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      dev -= 2.0 * (d2[i] * std::log(p[i]) + (1 - d2[i]) * std::log1p(-p[i]));
    }
    return dev;
  };
  const LogisticModel lin = fit_logistic_linear(X, delta);
  const LogisticModel spl = fit_logistic_spline(X, delta, 77);
  CHECK(heldout_dev(spl.predict(X2)) < heldout_dev(lin.predict(X2)) - 10.0);
  const Eigen::VectorXd fitted = spl.predict(X);
  CHECK(fitted.minCoeff() > 0.0);
  CHECK(fitted.maxCoeff() < 1.0);
}
