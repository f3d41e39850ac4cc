#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "bregcal/entropy.hpp"

namespace bregcal {

enum class PropensityLearner { LogisticLinear, LogisticSpline };

/// A fitted probabilistic classifier for P(delta = 1 | x). The spline
/// variant expands each covariate in a natural cubic spline basis (5
/// interior knots at training quantiles) and ridges the nonlinear terms,
/// with the penalty picked by 3-fold deviance cross-validation.
class LogisticModel {
 public:
  Eigen::VectorXd predict(const Eigen::MatrixXd& X) const;

  /// Coefficients on the raw design scale, intercept first (linear learner).
  const Eigen::VectorXd& coef() const { return coef_raw_; }
  /// IRLS standard errors matching coef() (linear learner only).
  const Eigen::VectorXd& coef_se() const { return se_; }

  PropensityLearner learner() const { return learner_; }
  double ridge() const { return ridge_; }

 private:
  friend LogisticModel fit_logistic_linear(const Eigen::MatrixXd&,
                                           const Eigen::VectorXi&);
  friend LogisticModel fit_logistic_spline(const Eigen::MatrixXd&,
                                           const Eigen::VectorXi&,
                                           std::uint64_t);

  Eigen::MatrixXd design(const Eigen::MatrixXd& X) const;

  PropensityLearner learner_ = PropensityLearner::LogisticLinear;
  Eigen::VectorXd beta_;      // on the (standardized) design scale
  Eigen::VectorXd coef_raw_;  // linear learner: raw-scale coefficients
  Eigen::VectorXd se_;
  Eigen::MatrixXd knots_;     // p x 5, spline learner
  Eigen::VectorXd col_mean_, col_sd_;  // design standardization (spline)
  double ridge_ = 0.0;
};

LogisticModel fit_logistic_linear(const Eigen::MatrixXd& X,
                                  const Eigen::VectorXi& delta);
LogisticModel fit_logistic_spline(const Eigen::MatrixXd& X,
                                  const Eigen::VectorXi& delta,
                                  std::uint64_t seed);

/// Cross-fitted inclusion probabilities. pi_hat[i] comes from a model that
/// never saw any record of fold folds[i]; fold_train_hash[k-1] is an FNV-1a
/// digest of the sorted training row indices used for fold k, so tests can
/// audit the honesty structurally.
struct PropensityFit {
  Eigen::VectorXd pi_hat;  // N, clipped to [clip_lo, clip_hi]
  std::vector<int> folds;  // N, labels in {1..K}
  PropensityLearner learner = PropensityLearner::LogisticLinear;
  int k_folds = 0;
  double clip_lo = 0.01;
  double clip_hi = 0.99;
  std::vector<std::uint64_t> fold_train_hash;
};

struct CrossFitOptions {
  double clip_lo = 0.01;
  double clip_hi = 0.99;
};

/// Draws i.i.d. uniform fold labels for all N units, trains each fold's
/// learner on the complement (x, delta only), and assigns out-of-fold
/// probabilities. Throws DegenerateFoldError when a training complement
/// contains a single response class.
PropensityFit fit_crossfitted(const Eigen::MatrixXd& X_pop,
                              const Eigen::VectorXi& delta, int K,
                              PropensityLearner learner, std::uint64_t seed,
                              const CrossFitOptions& options = {});

/// Cross-fitted baseline weights (n/N)/pi_hat_i for the delta = 1 units, in
/// population row order.
Eigen::VectorXd baseline_weights(const PropensityFit& fit,
                                 const Eigen::VectorXi& delta);

/// FNV-1a digest of a sorted index set; exposed so tests can recompute the
/// expected per-fold training hash.
std::uint64_t hash_index_set(const std::vector<Eigen::Index>& sorted_indices);

}  // namespace bregcal
