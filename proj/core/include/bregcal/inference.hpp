#pragma once

#include <Eigen/Core>

#include "bregcal/estimate.hpp"

namespace bregcal {

enum class VarianceMethod { DesignHT, EtaPopulation, SampleOnly };

/// Joint inclusion probabilities pi_ij for the sampled pairs. Poisson
/// sampling has pi_ij = pi_i pi_j for i != j, so only diagonal terms
/// survive in the HT variance.
struct JointInclusion {
  enum class Kind { PoissonIndependent, UserMatrix };
  Kind kind = Kind::PoissonIndependent;
  Eigen::MatrixXd matrix;  // n x n, used when kind == UserMatrix

  static JointInclusion poisson() { return {}; }
  static JointInclusion user(Eigen::MatrixXd m);
};

/// Variance of a point estimate plus its normal-theory 95% interval.
/// `clipped_negative` flags a user pi_ij matrix that produced a negative
/// value (reported as 0).
struct VarianceEstimate {
  double value = 0.0;
  VarianceMethod method = VarianceMethod::DesignHT;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool clipped_negative = false;
};

/// Horvitz-Thompson style design variance of the calibration estimator of a
/// population mean, using residuals e_i = y_i - x_i'beta:
///   N^{-2} sum_{i,j in S} (pi_ij - pi_i pi_j)/pi_ij * (e_i/pi_i)(e_j/pi_j).
/// `mu_hat` centers the confidence interval.
VarianceEstimate var_design(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& pi,
                            const JointInclusion& joint,
                            const WeightedRegCoef& beta, double mu_hat,
                            Eigen::Index N);

/// Missing-data variance through the debiased-prediction equivalence:
///   V = N^{-2} sum_{i=1}^N (eta_i - etabar)^2,
///   eta_i = x_i'beta + (N/n) w_i delta_i (y_i - x_i'beta).
/// Requires unit-level covariates for the whole population; respondent rows
/// of X/y/w_hat follow population row order.
VarianceEstimate var_missing_eta(const Eigen::MatrixXd& pop_X,
                                 const Eigen::VectorXi& delta,
                                 const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& w_hat,
                                 const WeightedRegCoef& beta, double mu_hat);

/// Sample-only variance of the mean estimator (no population frame needed):
///   [N^{-1} sum_S pihat^{-1}(y - mu)^2
///    + N^{-1} sum_S pihat^{-1}(pihat^{-1} - 1)(y - x'beta)^2] / N.
/// The bracket estimates the eta-variance sigma^2; dividing by N puts it on
/// the same estimator-variance scale as var_missing_eta.
VarianceEstimate var_sample_only(const Eigen::MatrixXd& X_resp,
                                 const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& pi_hat,
                                 const WeightedRegCoef& beta, double mu_hat,
                                 Eigen::Index N);

}  // namespace bregcal
