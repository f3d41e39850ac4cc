#pragma once

#include <Eigen/Core>

#include "bregcal/entropy.hpp"

namespace bregcal {

enum class Scale { Total, Mean };

/// Exact calibration instance: respondent auxiliaries X (n x p), baseline
/// weights w0, and population targets on the stated scale. On the Mean scale
/// the constraint is n^{-1} sum_i w_i x_i = targets, i.e. total-scale targets
/// equal n * targets.
struct CalibrationProblem {
  Eigen::MatrixXd X;
  Eigen::VectorXd w0;
  Eigen::VectorXd targets;
  Scale scale = Scale::Mean;
  Eigen::Index n_pop = 0;

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }
  Eigen::VectorXd targets_total() const;

  /// Dimension checks and no all-zero auxiliary column.
  void validate_dims() const;
  /// validate_dims plus every baseline weight strictly inside the
  /// generator's domain.
  void validate(const Generator& gen) const;
};

struct SolverOptions {
  double tol = 1e-9;       // on ||grad||_inf relative to max(1, ||T||_inf)
  int max_iter = 100;
  double armijo = 1e-4;
  double backtrack = 0.5;
  int max_halvings = 30;
  double domain_margin = 1e-10;  // keep nu_i this far inside the dual domain
};

struct CalibrationResult {
  Eigen::VectorXd weights;
  Eigen::VectorXd lambda;
  int iterations = 0;
  double grad_norm = 0.0;
  double dual_value = 0.0;
  bool converged = false;
};

/// Dual objective l(lambda) = sum_i F(g(w0_i) + x_i'lambda) - lambda'T + C(w0)
/// with C(w0) = sum_i {G(w0_i) - g(w0_i) w0_i}; l(0) = 0 by Fenchel-Young.
double dual_value(const Generator& gen, const CalibrationProblem& prob,
                  const Eigen::VectorXd& lambda);

/// Gradient sum_i F'(nu_i) x_i - T: the achieved-minus-target imbalance.
Eigen::VectorXd dual_grad(const Generator& gen, const CalibrationProblem& prob,
                          const Eigen::VectorXd& lambda);

/// Hessian sum_i F''(nu_i) x_i x_i', symmetric positive semidefinite.
Eigen::MatrixXd dual_hess(const Generator& gen, const CalibrationProblem& prob,
                          const Eigen::VectorXd& lambda);

/// Damped Newton minimization of the dual from lambda = 0, with backtracking
/// line search and hard dual-domain guards. Returns weights
/// g^{-1}(g(w0_i) + x_i'lambda_hat).
///
/// Throws MaxIterationsError when the iteration budget runs out and
/// InfeasibleError when the line search stalls against a domain wall.
CalibrationResult solve(const Generator& gen, const CalibrationProblem& prob,
                        const SolverOptions& opts = {});

/// Residual of the dual-Bregman identity
///   l(lambda) - l(lambda_hat) = sum_i D_F(nu_i(lambda) || nu_i(lambda_hat)),
/// evaluated with both sides computed independently. Zero (up to rounding)
/// whenever `result` solves the calibration equation.
double verify_dual_identity(const Generator& gen,
                            const CalibrationProblem& prob,
                            const Eigen::VectorXd& lambda_probe,
                            const CalibrationResult& result);

}  // namespace bregcal
