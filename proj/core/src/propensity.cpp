#include "bregcal/propensity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <Eigen/Cholesky>

#include "bregcal/errors.hpp"
#include "bregcal/math.hpp"

namespace bregcal {

namespace {

constexpr int kIrlsMaxIter = 50;
constexpr double kIrlsDevTol = 1e-10;
constexpr double kEtaClip = 30.0;
constexpr int kSplineKnots = 5;
const double kRidgeGrid[] = {1e-4, 1e-2, 1.0};

double softplus(double x) { return x > kEtaClip ? x : std::log1p(std::exp(x)); }

// -2 log-likelihood given linear predictors.
double deviance(const Eigen::VectorXd& eta, const Eigen::VectorXd& y) {
  double d = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    d += softplus(eta[i]) - y[i] * eta[i];
  }
  return 2.0 * d;
}

struct IrlsFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd info;  // Z'WZ + penalty at the solution
};

// Penalized IRLS with step-halving; `penalty` is a per-coefficient ridge.
IrlsFit irls(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
             const Eigen::VectorXd& penalty) {
  const Eigen::Index q = Z.cols();
  Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
  Eigen::VectorXd eta = Eigen::VectorXd::Zero(Z.rows());
  double dev = deviance(eta, y) + 0.0;

  Eigen::MatrixXd info(q, q);
  for (int iter = 0; iter < kIrlsMaxIter; ++iter) {
    Eigen::VectorXd p(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      p[i] = logistic(eta[i]);
      w[i] = std::max(p[i] * (1.0 - p[i]), 1e-10);
    }
    const Eigen::VectorXd z = eta + (y - p).cwiseQuotient(w);
    info = Z.transpose() * w.asDiagonal() * Z;
    info.diagonal() += penalty;
    Eigen::LLT<Eigen::MatrixXd> llt(info);
    if (llt.info() != Eigen::Success) {
      throw SingularFitError("logistic fit: information matrix is singular");
    }
    Eigen::VectorXd beta_new = llt.solve(Z.transpose() * (w.asDiagonal() * z));

    // Step-halve on penalized-deviance increase.
    double dev_new;
    Eigen::VectorXd eta_new;
    for (int h = 0;; ++h) {
      eta_new = (Z * beta_new).cwiseMin(kEtaClip).cwiseMax(-kEtaClip);
      dev_new = deviance(eta_new, y) + beta_new.dot(penalty.asDiagonal() * beta_new);
      if (dev_new <= dev + 1e-8 || h >= 30) break;
      beta_new = 0.5 * (beta + beta_new);
    }
    const double change = std::abs(dev - dev_new);
    beta = beta_new;
    eta = eta_new;
    dev = dev_new;
    if (change < kIrlsDevTol) break;
  }
  return {beta, info};
}

Eigen::VectorXd to_double(const Eigen::VectorXi& delta) {
  return delta.cast<double>();
}

// Quantile of a copy of v at probability prob (linear interpolation).
double quantile(Eigen::VectorXd v, double prob) {
  std::sort(v.data(), v.data() + v.size());
  const double h = prob * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<Eigen::Index>(std::floor(h));
  const auto hi = std::min<Eigen::Index>(lo + 1, v.size() - 1);
  return v[lo] + (h - lo) * (v[hi] - v[lo]);
}

// Natural cubic spline terms beyond the linear one, truncated-power form:
// d_k(x) = [(x-k_k)_+^3 - (x-k_K)_+^3]/(k_K - k_k), N_k = d_k - d_{K-1}.
void spline_terms(double x, const Eigen::RowVectorXd& knots, double* out) {
  const int K = static_cast<int>(knots.size());
  auto cube_plus = [](double t) { return t > 0.0 ? t * t * t : 0.0; };
  auto d = [&](int k) {
    const double denom = knots[K - 1] - knots[k];
    if (denom <= 1e-12) return 0.0;
    return (cube_plus(x - knots[k]) - cube_plus(x - knots[K - 1])) / denom;
  };
  const double dlast = d(K - 2);
  for (int k = 0; k < K - 2; ++k) out[k] = d(k) - dlast;
}

Eigen::MatrixXd spline_design(const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& knots) {
  const Eigen::Index n = X.rows(), p = X.cols();
  const int terms = kSplineKnots - 2;  // nonlinear terms per covariate
  Eigen::MatrixXd Z(n, 1 + p * (1 + terms));
  Z.col(0).setOnes();
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::Index base = 1 + j * (1 + terms);
    Z.col(base) = X.col(j);
    for (Eigen::Index i = 0; i < n; ++i) {
      double t[terms];
      spline_terms(X(i, j), knots.row(j), t);
      for (int k = 0; k < terms; ++k) Z(i, base + 1 + k) = t[k];
    }
  }
  return Z;
}

}  // namespace

Eigen::MatrixXd LogisticModel::design(const Eigen::MatrixXd& X) const {
  if (learner_ == PropensityLearner::LogisticLinear) {
    Eigen::MatrixXd Z(X.rows(), X.cols() + 1);
    Z.col(0).setOnes();
    Z.rightCols(X.cols()) = X;
    return Z;
  }
  Eigen::MatrixXd Z = spline_design(X, knots_);
  for (Eigen::Index j = 1; j < Z.cols(); ++j) {
    Z.col(j) = (Z.col(j).array() - col_mean_[j]) / col_sd_[j];
  }
  return Z;
}

Eigen::VectorXd LogisticModel::predict(const Eigen::MatrixXd& X) const {
  const Eigen::MatrixXd Z = design(X);
  Eigen::VectorXd p(Z.rows());
  const Eigen::VectorXd eta = Z * beta_;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    p[i] = logistic(std::clamp(eta[i], -kEtaClip, kEtaClip));
  }
  return p;
}

LogisticModel fit_logistic_linear(const Eigen::MatrixXd& X,
                                  const Eigen::VectorXi& delta) {
  LogisticModel m;
  m.learner_ = PropensityLearner::LogisticLinear;
  const Eigen::MatrixXd Z = m.design(X);
  const IrlsFit fit = irls(Z, to_double(delta), Eigen::VectorXd::Zero(Z.cols()));
  m.beta_ = fit.beta;
  m.coef_raw_ = fit.beta;
  const Eigen::MatrixXd cov =
      fit.info.llt().solve(Eigen::MatrixXd::Identity(Z.cols(), Z.cols()));
  m.se_ = cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  return m;
}

LogisticModel fit_logistic_spline(const Eigen::MatrixXd& X,
                                  const Eigen::VectorXi& delta,
                                  std::uint64_t seed) {
  LogisticModel m;
  m.learner_ = PropensityLearner::LogisticSpline;
  const Eigen::Index p = X.cols();

  m.knots_.resize(p, kSplineKnots);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (int k = 0; k < kSplineKnots; ++k) {
      m.knots_(j, k) = quantile(X.col(j), (k + 1.0) / (kSplineKnots + 1.0));
    }
  }

  Eigen::MatrixXd Z = spline_design(X, m.knots_);
  const Eigen::Index q = Z.cols();
  m.col_mean_ = Eigen::VectorXd::Zero(q);
  m.col_sd_ = Eigen::VectorXd::Ones(q);
  for (Eigen::Index j = 1; j < q; ++j) {
    m.col_mean_[j] = Z.col(j).mean();
    const double var =
        (Z.col(j).array() - m.col_mean_[j]).square().sum() / Z.rows();
    m.col_sd_[j] = std::max(std::sqrt(var), 1e-12);
    Z.col(j) = (Z.col(j).array() - m.col_mean_[j]) / m.col_sd_[j];
  }

  // Ridge on the nonlinear terms only.
  const int terms = kSplineKnots - 2;
  Eigen::VectorXd pen_mask = Eigen::VectorXd::Zero(q);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (int k = 0; k < terms; ++k) pen_mask[1 + j * (1 + terms) + 1 + k] = 1.0;
  }

  const Eigen::VectorXd y = to_double(delta);

  // 3-fold deviance CV over the ridge grid.
  Rng rng(mix_seed(seed, 0x73706c6eULL));  // "spln"
  std::vector<int> fold(Z.rows());
  for (auto& f : fold) f = rng.uniform_int(3);
  double best_ridge = kRidgeGrid[0];
  double best_score = std::numeric_limits<double>::infinity();
  for (const double ridge : kRidgeGrid) {
    double score = 0.0;
    bool ok = true;
    for (int k = 0; k < 3 && ok; ++k) {
      std::vector<Eigen::Index> tr, te;
      for (Eigen::Index i = 0; i < Z.rows(); ++i) {
        (fold[i] == k ? te : tr).push_back(i);
      }
      if (tr.empty() || te.empty()) continue;
      Eigen::MatrixXd Ztr = Z(tr, Eigen::all);
      Eigen::VectorXd ytr = y(tr);
      try {
        const IrlsFit f = irls(Ztr, ytr, ridge * pen_mask);
        const Eigen::VectorXd eta_te = Z(te, Eigen::all) * f.beta;
        score += deviance(eta_te, y(te));
      } catch (const SingularFitError&) {
        ok = false;
      }
    }
    if (ok && score < best_score) {
      best_score = score;
      best_ridge = ridge;
    }
  }

  m.ridge_ = best_ridge;
  m.beta_ = irls(Z, y, best_ridge * pen_mask).beta;
  return m;
}

std::uint64_t hash_index_set(const std::vector<Eigen::Index>& sorted_indices) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const Eigen::Index idx : sorted_indices) {
    std::uint64_t v = static_cast<std::uint64_t>(idx);
    for (int b = 0; b < 8; ++b) {
      h ^= (v >> (8 * b)) & 0xffULL;
      h *= 1099511628211ULL;
    }
  }
  return h;
}

PropensityFit fit_crossfitted(const Eigen::MatrixXd& X_pop,
                              const Eigen::VectorXi& delta, int K,
                              PropensityLearner learner, std::uint64_t seed,
                              const CrossFitOptions& options) {
  const Eigen::Index N = X_pop.rows();
  if (delta.size() != N) {
    throw InvalidArgument("fit_crossfitted: delta length != rows of X");
  }
  if (K < 2) throw InvalidArgument("fit_crossfitted: K must be >= 2");

  PropensityFit fit;
  fit.learner = learner;
  fit.k_folds = K;
  fit.clip_lo = options.clip_lo;
  fit.clip_hi = options.clip_hi;
  fit.pi_hat.resize(N);
  fit.folds.resize(N);
  fit.fold_train_hash.resize(K);

  Rng rng(mix_seed(seed, 0x666f6c64ULL));  // "fold"
  for (Eigen::Index i = 0; i < N; ++i) fit.folds[i] = 1 + rng.uniform_int(K);

  for (int k = 1; k <= K; ++k) {
    std::vector<Eigen::Index> train, test;
    for (Eigen::Index i = 0; i < N; ++i) {
      (fit.folds[i] == k ? test : train).push_back(i);
    }
    fit.fold_train_hash[k - 1] = hash_index_set(train);
    if (test.empty()) continue;

    const Eigen::VectorXi dtr = delta(train);
    const int ones = dtr.sum();
    if (ones == 0 || ones == static_cast<int>(train.size())) {
      std::ostringstream msg;
      msg << "fold " << k << ": training complement has a single response class";
      throw DegenerateFoldError(msg.str());
    }
    const Eigen::MatrixXd Xtr = X_pop(train, Eigen::all);
    LogisticModel model =
        learner == PropensityLearner::LogisticLinear
            ? fit_logistic_linear(Xtr, dtr)
            : fit_logistic_spline(Xtr, dtr, mix_seed(seed, 1000 + k));
    const Eigen::VectorXd p = model.predict(X_pop(test, Eigen::all));
    for (std::size_t t = 0; t < test.size(); ++t) {
      fit.pi_hat[test[t]] = std::clamp(p[t], options.clip_lo, options.clip_hi);
    }
  }
  return fit;
}

Eigen::VectorXd baseline_weights(const PropensityFit& fit,
                                 const Eigen::VectorXi& delta) {
  const Eigen::Index N = delta.size();
  if (fit.pi_hat.size() != N) {
    throw InvalidArgument("baseline_weights: fit size != delta length");
  }
  const Eigen::Index n = delta.sum();
  Eigen::VectorXd w0(n);
  Eigen::Index r = 0;
  const double rate = static_cast<double>(n) / static_cast<double>(N);
  for (Eigen::Index i = 0; i < N; ++i) {
    if (delta[i] == 1) w0[r++] = rate / fit.pi_hat[i];
  }
  return w0;
}

}  // namespace bregcal
