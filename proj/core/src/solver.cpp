#include "bregcal/solver.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "bregcal/errors.hpp"
#include "newton_core.hpp"

namespace bregcal {

namespace detail {

Eigen::VectorXd solve_spd(Eigen::MatrixXd H, const Eigen::VectorXd& rhs) {
  const Eigen::Index p = H.cols();
  double ridge = 1e-10 * H.trace() / static_cast<double>(p);
  if (!(ridge > 0.0)) ridge = 1e-12;
  for (int attempt = 0; attempt < 4; ++attempt) {
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() == Eigen::Success) {
      return llt.solve(rhs);
    }
    H.diagonal().array() += ridge;
    ridge *= 10.0;
  }
  throw SingularFitError("newton: Hessian not positive definite after ridge fallback");
}

CalibrationResult newton_solve(const DualModel& model,
                               const SolverOptions& opts) {
  const Eigen::Index p = model.p();
  const double gtol =
      opts.tol * std::max(1.0, model.target.lpNorm<Eigen::Infinity>());

  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd nu = model.nu(lambda);
  model.check_nu(nu);  // lambda = 0 must be dual-feasible
  double value = model.value_at_nu(nu, lambda);
  Eigen::VectorXd grad = model.grad_at_nu(nu);
  double gnorm = grad.lpNorm<Eigen::Infinity>();

  const double lo = model.gen.dual_lo();
  const double hi = model.gen.dual_hi();

  CalibrationResult res;
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    if (gnorm <= gtol) {
      for (Eigen::Index i = 0; i < nu.size(); ++i) {
        if (!model.gen.weight_in_domain(model.gen.Fprime(nu[i]))) {
          throw InfeasibleError(
              "calibration pinned a weight onto the boundary of the open "
              "weight domain; the optimum is a limit point, not attained",
              gnorm);
        }
      }
      res.weights = model.weights_at_nu(nu);
      res.lambda = lambda;
      res.iterations = iter;
      res.grad_norm = gnorm;
      res.dual_value = value;
      res.converged = true;
      return res;
    }

    const Eigen::MatrixXd H = model.hess_at_nu(nu);
    const Eigen::VectorXd dir = solve_spd(H, -grad);
    const double slope = grad.dot(dir);

    // Fraction-to-boundary cap: never step onto a dual-domain wall.
    const Eigen::VectorXd dnu = model.X * dir;
    double t_wall = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < dnu.size(); ++i) {
      if (dnu[i] < 0.0 && std::isfinite(lo)) {
        t_wall = std::min(t_wall, (nu[i] - lo - opts.domain_margin) / -dnu[i]);
      } else if (dnu[i] > 0.0 && std::isfinite(hi)) {
        t_wall = std::min(t_wall, (hi - opts.domain_margin - nu[i]) / dnu[i]);
      }
    }
    double step = std::min(1.0, 0.99 * t_wall);

    // Armijo backtracking with an absolute slack covering the rounding
    // noise of the dual value near convergence.
    const double slack = 1e-12 * (1.0 + std::abs(value));
    bool accepted = false;
    Eigen::VectorXd cand, nu_cand;
    double cand_value = 0.0;
    Eigen::VectorXd last_cand, last_nu;
    bool have_fallback = false;
    for (int halvings = 0; halvings <= opts.max_halvings && step > 0.0;
         ++halvings) {
      cand = lambda + step * dir;
      nu_cand = model.nu(cand);
      if (model.nu_feasible(nu_cand, opts.domain_margin)) {
        cand_value = model.value_at_nu(nu_cand, cand);
        if (cand_value <= value + opts.armijo * step * slope + slack) {
          accepted = true;
          break;
        }
        last_cand = cand;
        last_nu = nu_cand;
        have_fallback = true;
      }
      step *= opts.backtrack;
    }
    if (!accepted) {
      // The stated give-up rule: exhausted halvings are tolerated only if
      // the shortest feasible step still reduces the gradient norm.
      bool rescued = false;
      if (have_fallback) {
        const Eigen::VectorXd g2 = model.grad_at_nu(last_nu);
        if (g2.lpNorm<Eigen::Infinity>() < gnorm) {
          cand = last_cand;
          nu_cand = last_nu;
          cand_value = model.value_at_nu(nu_cand, cand);
          rescued = true;
        }
      }
      if (!rescued) {
        std::ostringstream msg;
        msg << "calibration infeasible: line search stalled after "
            << opts.max_halvings
            << " halvings without reducing the gradient (max imbalance "
            << gnorm << ")";
        throw InfeasibleError(msg.str(), gnorm);
      }
    }

    lambda.swap(cand);
    nu.swap(nu_cand);
    value = cand_value;
    grad = model.grad_at_nu(nu);
    gnorm = grad.lpNorm<Eigen::Infinity>();
  }

  std::ostringstream msg;
  msg << "calibration did not converge in " << opts.max_iter
      << " iterations (||grad||_inf = " << gnorm << ", tol = " << gtol << ")";
  throw MaxIterationsError(msg.str(), gnorm);
}

}  // namespace detail

namespace {

detail::DualModel bc_model(const Generator& gen,
                           const CalibrationProblem& prob) {
  const Eigen::Index n = prob.n();
  Eigen::VectorXd offset(n);
  double constant = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w0 = prob.w0[i];
    gen.check_weight(w0, i);
    offset[i] = gen.g(w0);
    constant += gen.G(w0) - offset[i] * w0;
  }
  return detail::DualModel{gen, prob.X, Eigen::VectorXd::Ones(n), offset,
                           prob.targets_total(), constant};
}

}  // namespace

Eigen::VectorXd CalibrationProblem::targets_total() const {
  if (scale == Scale::Mean) {
    return targets * static_cast<double>(n());
  }
  return targets;
}

void CalibrationProblem::validate_dims() const {
  if (X.rows() == 0 || X.cols() == 0) {
    throw InvalidArgument("calibration problem: empty auxiliary matrix");
  }
  if (w0.size() != X.rows()) {
    throw InvalidArgument("calibration problem: w0 length != rows of X");
  }
  if (targets.size() != X.cols()) {
    throw InvalidArgument("calibration problem: targets length != cols of X");
  }
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    if (X.col(j).cwiseAbs().maxCoeff() == 0.0) {
      std::ostringstream msg;
      msg << "calibration problem: auxiliary column " << j << " is all zero";
      throw InvalidArgument(msg.str());
    }
  }
}

void CalibrationProblem::validate(const Generator& gen) const {
  validate_dims();
  for (Eigen::Index i = 0; i < w0.size(); ++i) gen.check_weight(w0[i], i);
}

double dual_value(const Generator& gen, const CalibrationProblem& prob,
                  const Eigen::VectorXd& lambda) {
  const auto model = bc_model(gen, prob);
  const Eigen::VectorXd nu = model.nu(lambda);
  model.check_nu(nu);
  return model.value_at_nu(nu, lambda);
}

Eigen::VectorXd dual_grad(const Generator& gen, const CalibrationProblem& prob,
                          const Eigen::VectorXd& lambda) {
  const auto model = bc_model(gen, prob);
  const Eigen::VectorXd nu = model.nu(lambda);
  model.check_nu(nu);
  return model.grad_at_nu(nu);
}

Eigen::MatrixXd dual_hess(const Generator& gen, const CalibrationProblem& prob,
                          const Eigen::VectorXd& lambda) {
  const auto model = bc_model(gen, prob);
  const Eigen::VectorXd nu = model.nu(lambda);
  model.check_nu(nu);
  return model.hess_at_nu(nu);
}

CalibrationResult solve(const Generator& gen, const CalibrationProblem& prob,
                        const SolverOptions& opts) {
  prob.validate(gen);
  return detail::newton_solve(bc_model(gen, prob), opts);
}

double verify_dual_identity(const Generator& gen,
                            const CalibrationProblem& prob,
                            const Eigen::VectorXd& lambda_probe,
                            const CalibrationResult& result) {
  const auto model = bc_model(gen, prob);
  const Eigen::VectorXd nu_probe = model.nu(lambda_probe);
  const Eigen::VectorXd nu_hat = model.nu(result.lambda);
  model.check_nu(nu_probe);
  model.check_nu(nu_hat);

  const double lhs = model.value_at_nu(nu_probe, lambda_probe) -
                     model.value_at_nu(nu_hat, result.lambda);
  double rhs = 0.0;
  for (Eigen::Index i = 0; i < nu_probe.size(); ++i) {
    rhs += gen.conjugate_bregman(nu_probe[i], nu_hat[i]);
  }
  return std::abs(lhs - rhs);
}

}  // namespace bregcal
