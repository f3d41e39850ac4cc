#pragma once

#include <Eigen/Core>

#include "bregcal/entropy.hpp"
#include "bregcal/solver.hpp"

namespace bregcal {

enum class Target { PopulationMean, PopulationTotal };

/// Inverse-probability weighted estimator. For PopulationMean this is the
/// Hajek ratio (sum w0 y)/(sum w0); for PopulationTotal the plain weighted
/// sum (so w0 should be design weights pi^{-1}).
double ipw(const Eigen::VectorXd& y, const Eigen::VectorXd& w0, Target target);

/// Bregman calibration estimate: solves the problem, then averages. On the
/// Mean scale the first auxiliary column must be an intercept so the 1/n
/// normalization is exact.
double bc_estimate(const Generator& gen, const CalibrationProblem& prob,
                   const Eigen::VectorXd& y,
                   Target target = Target::PopulationMean,
                   const SolverOptions& opts = {});

/// Deville-Sarndal weights: minimize sum_i w0_i Gt(w_i/w0_i) under the same
/// constraints, where Gt(u) = D_G(u || 1) is the generator re-anchored at 1
/// (Gt(1) = 0, Gt'(1) = 0). Solved through the same dual machinery in the
/// ratio variable: w_i = w0_i * g^{-1}(g(1) + x_i'lambda).
CalibrationResult ds_solve(const Generator& gen,
                           const CalibrationProblem& prob,
                           const SolverOptions& opts = {});

double ds_estimate(const Generator& gen, const CalibrationProblem& prob,
                   const Eigen::VectorXd& y,
                   Target target = Target::PopulationMean,
                   const SolverOptions& opts = {});

/// Generator-weighted regression coefficient: solves the qhat-weighted
/// normal equations sum_i q_i x_i x_i' beta = sum_i q_i x_i y_i.
struct WeightedRegCoef {
  Eigen::VectorXd beta;
  Eigen::VectorXd qhat;
};

WeightedRegCoef weighted_reg_coef(const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& qhat);

/// Curvature weights q_i = 1/g'(w_i) for a fitted weight vector.
Eigen::VectorXd curvature_weights(const Generator& gen,
                                  const Eigen::VectorXd& weights);

/// Debiased prediction estimator
///   N^{-1} sum_pop x'beta + n^{-1} sum_resp w*(y - x'beta).
double dp_estimate(const Eigen::MatrixXd& pop_X, const Eigen::MatrixXd& X,
                   const Eigen::VectorXd& y, const Eigen::VectorXd& w_star,
                   const Eigen::VectorXd& beta);

}  // namespace bregcal
