#pragma once

// Internal damped-Newton driver shared by the exact Bregman solver and the
// Deville-Sarndal ratio solver. Both duals have the form
//   l(lambda) = sum_i c_i F(o_i + x_i'lambda) - lambda'T + constant
// with per-unit multipliers c_i > 0 and offsets o_i; the calibrated weights
// are w_i = c_i F'(nu_i). Bregman calibration uses c_i = 1, o_i = g(w0_i);
// the DS ratio form uses c_i = w0_i, o_i = g(1).

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "bregcal/entropy.hpp"
#include "bregcal/errors.hpp"
#include "bregcal/solver.hpp"

namespace bregcal::detail {

struct DualModel {
  const Generator& gen;
  const Eigen::MatrixXd& X;   // n x p
  Eigen::VectorXd c;          // n, positive
  Eigen::VectorXd offset;     // n
  Eigen::VectorXd target;    // p, total scale
  double constant = 0.0;      // additive constant making l(0) = 0

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }

  Eigen::VectorXd nu(const Eigen::VectorXd& lambda) const {
    return offset + X * lambda;
  }

  bool nu_feasible(const Eigen::VectorXd& nu, double margin) const {
    const double lo = gen.dual_lo();
    const double hi = gen.dual_hi();
    for (Eigen::Index i = 0; i < nu.size(); ++i) {
      const double v = nu[i];
      if (!std::isfinite(v)) return false;
      if (std::isfinite(lo) && v - lo <= margin) return false;
      if (std::isfinite(hi) && hi - v <= margin) return false;
    }
    return true;
  }

  void check_nu(const Eigen::VectorXd& nu) const {
    for (Eigen::Index i = 0; i < nu.size(); ++i) gen.check_dual(nu[i], i);
  }

  double value_at_nu(const Eigen::VectorXd& nu,
                     const Eigen::VectorXd& lambda) const {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < nu.size(); ++i) acc += c[i] * gen.F(nu[i]);
    return acc - lambda.dot(target) + constant;
  }

  Eigen::VectorXd weights_at_nu(const Eigen::VectorXd& nu) const {
    Eigen::VectorXd w(nu.size());
    for (Eigen::Index i = 0; i < nu.size(); ++i) w[i] = c[i] * gen.Fprime(nu[i]);
    return w;
  }

  Eigen::VectorXd grad_at_nu(const Eigen::VectorXd& nu) const {
    return X.transpose() * weights_at_nu(nu) - target;
  }

  Eigen::MatrixXd hess_at_nu(const Eigen::VectorXd& nu) const {
    Eigen::VectorXd d(nu.size());
    for (Eigen::Index i = 0; i < nu.size(); ++i) {
      d[i] = c[i] * gen.Fsecond(nu[i]);
    }
    return X.transpose() * d.asDiagonal() * X;
  }
};

/// Solves a Hessian system with an escalating ridge fallback for collinear
/// auxiliaries: ridge = 1e-10 * trace/p, escalated x10 up to three times.
Eigen::VectorXd solve_spd(Eigen::MatrixXd H, const Eigen::VectorXd& rhs);

CalibrationResult newton_solve(const DualModel& model,
                               const SolverOptions& opts);

}  // namespace bregcal::detail
