#include "bregcal/estimate.hpp"

#include <cmath>

#include "bregcal/errors.hpp"
#include "newton_core.hpp"

namespace bregcal {

namespace {

void require_intercept(const CalibrationProblem& prob) {
  if ((prob.X.col(0).array() != 1.0).any()) {
    throw InvalidArgument(
        "mean-scale estimation requires an explicit all-ones intercept column "
        "(column 0) so the weights sum to n");
  }
}

// Preconditions of the mean estimate, checked before any solve runs.
void check_mean_preconditions(const CalibrationProblem& prob, Target target) {
  if (target != Target::PopulationMean) return;
  require_intercept(prob);
  if (prob.scale == Scale::Total && prob.n_pop <= 0) {
    throw InvalidArgument(
        "mean estimate from total-scale weights needs n_pop > 0");
  }
}

double weighted_estimate(const CalibrationProblem& prob,
                         const Eigen::VectorXd& weights,
                         const Eigen::VectorXd& y, Target target) {
  if (target == Target::PopulationTotal) {
    return weights.dot(y);
  }
  if (prob.scale == Scale::Mean) {
    return weights.dot(y) / static_cast<double>(prob.n());
  }
  // Total-scale weights (e.g. contrast entropy, whose domain needs w > 1):
  // with an intercept constraint the weights sum to N, so the mean is the
  // weighted sum rescaled by the population size.
  return weights.dot(y) / static_cast<double>(prob.n_pop);
}

}  // namespace

double ipw(const Eigen::VectorXd& y, const Eigen::VectorXd& w0,
           Target target) {
  if (y.size() == 0) throw InvalidArgument("ipw: empty sample");
  if (y.size() != w0.size()) throw InvalidArgument("ipw: length mismatch");
  if (target == Target::PopulationTotal) {
    return w0.dot(y);
  }
  return w0.dot(y) / w0.sum();
}

double bc_estimate(const Generator& gen, const CalibrationProblem& prob,
                   const Eigen::VectorXd& y, Target target,
                   const SolverOptions& opts) {
  if (y.size() != prob.n()) throw InvalidArgument("bc_estimate: y length != n");
  check_mean_preconditions(prob, target);
  const CalibrationResult res = solve(gen, prob, opts);
  return weighted_estimate(prob, res.weights, y, target);
}

CalibrationResult ds_solve(const Generator& gen,
                           const CalibrationProblem& prob,
                           const SolverOptions& opts) {
  prob.validate_dims();
  const Eigen::Index n = prob.n();
  // The DS distance applies the generator to the ratio u = w/w0, so the
  // baseline only needs positivity while u must admit the anchor u = 1.
  if ((prob.w0.array() <= 0.0).any()) {
    throw InvalidArgument("ds_solve: baseline weights must be positive");
  }
  if (!gen.weight_in_domain(1.0)) {
    throw InvalidArgument("ds_solve: " + gen.name() +
                          " cannot anchor the ratio form (u = 1 is outside "
                          "its weight domain)");
  }
  const double g1 = gen.g(1.0);
  const double G1 = gen.G(1.0);
  // l_DS(lambda) = sum_i w0_i F(g(1) + x_i'lambda) - lambda'T + const,
  // const = sum_i w0_i (G(1) - g(1)) makes l_DS(0) = 0.
  detail::DualModel model{gen,
                          prob.X,
                          prob.w0,
                          Eigen::VectorXd::Constant(n, g1),
                          prob.targets_total(),
                          prob.w0.sum() * (G1 - g1)};
  return detail::newton_solve(model, opts);
}

double ds_estimate(const Generator& gen, const CalibrationProblem& prob,
                   const Eigen::VectorXd& y, Target target,
                   const SolverOptions& opts) {
  if (y.size() != prob.n()) throw InvalidArgument("ds_estimate: y length != n");
  check_mean_preconditions(prob, target);
  const CalibrationResult res = ds_solve(gen, prob, opts);
  return weighted_estimate(prob, res.weights, y, target);
}

WeightedRegCoef weighted_reg_coef(const Eigen::MatrixXd& X,
                                  const Eigen::VectorXd& y,
                                  const Eigen::VectorXd& qhat) {
  if (X.rows() != y.size() || X.rows() != qhat.size()) {
    throw InvalidArgument("weighted_reg_coef: dimension mismatch");
  }
  const Eigen::MatrixXd A = X.transpose() * qhat.asDiagonal() * X;
  const Eigen::VectorXd b = X.transpose() * (qhat.asDiagonal() * y);
  WeightedRegCoef out;
  out.beta = detail::solve_spd(A, b);
  out.qhat = qhat;
  return out;
}

Eigen::VectorXd curvature_weights(const Generator& gen,
                                  const Eigen::VectorXd& weights) {
  Eigen::VectorXd q(weights.size());
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    q[i] = gen.qweight(weights[i]);
  }
  return q;
}

double dp_estimate(const Eigen::MatrixXd& pop_X, const Eigen::MatrixXd& X,
                   const Eigen::VectorXd& y, const Eigen::VectorXd& w_star,
                   const Eigen::VectorXd& beta) {
  if (pop_X.cols() != X.cols() || pop_X.cols() != beta.size()) {
    throw InvalidArgument("dp_estimate: column mismatch");
  }
  if (X.rows() != y.size() || X.rows() != w_star.size()) {
    throw InvalidArgument("dp_estimate: respondent dimension mismatch");
  }
  const double pred =
      (pop_X * beta).sum() / static_cast<double>(pop_X.rows());
  const Eigen::VectorXd resid = y - X * beta;
  const double corr = w_star.dot(resid) / static_cast<double>(X.rows());
  return pred + corr;
}

}  // namespace bregcal
