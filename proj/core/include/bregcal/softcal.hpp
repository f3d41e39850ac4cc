#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "bregcal/entropy.hpp"

namespace bregcal {

/// Primal norm order of the soft balance constraint.
enum class NormOrder { L1, L2, LInf };

/// Holder conjugate: 1 <-> inf, 2 <-> 2.
NormOrder holder_conjugate(NormOrder q);

std::string norm_order_name(NormOrder q);

/// Soft-calibration instance over standardized non-intercept covariates.
/// Columns of Xt are standardized with finite-population moments (mean 0,
/// variance 1 over all N units); tau entries are positive tolerances,
/// +infinity meaning the coordinate is dropped from calibration entirely.
struct SoftProblem {
  Eigen::MatrixXd Xt;  // n x p
  Eigen::VectorXd w0;  // n baseline weights
  NormOrder q = NormOrder::LInf;
  Eigen::VectorXd tau;  // p
  Eigen::Index n_pop = 0;

  Eigen::Index n() const { return Xt.rows(); }
  Eigen::Index p() const { return Xt.cols(); }
  void validate(const Generator& gen) const;
};

struct SoftOptions {
  double kkt_tol = 1e-6;
  int max_iter = 50000;
  double domain_margin = 1e-10;
  double intercept_tol = 1e-12;  // on |sum w - n| / n
};

struct SoftResult {
  Eigen::VectorXd weights;
  double lambda0 = 0.0;
  Eigen::VectorXd lambda;
  std::vector<Eigen::Index> active_set;  // coordinates with lambda_k != 0
  double kkt_gap = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Holder-regularized dual objective
///   sum_i F(g(w0_i) + lambda0 + xt_i'lambda) - n lambda0 + C(w0)
///   + n ||(tau_1 lambda_1, ..., tau_p lambda_p)||_{q*}.
/// Returns +infinity when some lambda_k != 0 has tau_k = infinity.
double soft_dual_value(const Generator& gen, const SoftProblem& prob,
                       double lambda0, const Eigen::VectorXd& lambda);

/// Proximal-gradient (FISTA) minimization of the Holder-regularized dual.
/// The unpenalized intercept is profiled out exactly: every iterate solves
/// sum_i w_i = n by a safeguarded 1-D Newton, so the intercept constraint
/// holds to intercept_tol at the solution. kkt_gap reports the distance of
/// -grad(smooth)/n from the penalty subdifferential.
SoftResult solve_soft(const Generator& gen, const SoftProblem& prob,
                      const SoftOptions& opts = {});

/// Outcome-guided tolerances tau_k = tau_global / |beta_k|, with
/// tau_k = +infinity when beta_k = 0.
Eigen::VectorXd adaptive_tau(const Eigen::VectorXd& beta_pilot,
                             double tau_global);

enum class PilotMethod { OLS, LassoRefit };

/// Pilot slope estimate of the outcome model on the respondent sample.
/// OLS requires n > p; LassoRefit runs 5-fold cross-validated lasso
/// (1-SE rule) and refits OLS on the selected support, returning zeros
/// outside it.
Eigen::VectorXd pilot_coef(const Eigen::MatrixXd& X_resp,
                           const Eigen::VectorXd& y, PilotMethod method,
                           std::uint64_t seed);

/// Builds a SoftProblem at a given global tolerance restricted to a subset
/// of respondent rows (all rows when the subset spans 0..n-1).
using SoftProblemBuilder = std::function<SoftProblem(
    double tau_global, const std::vector<Eigen::Index>& rows)>;

struct CvCurvePoint {
  double tau = 0.0;
  double criterion = 0.0;
  bool feasible = false;
  std::string message;
};

struct CvTauResult {
  double tau_selected = 0.0;
  std::vector<CvCurvePoint> curve;
};

/// K-fold cross-validation over a tolerance grid. For each tau the
/// criterion is
///   (K-1)/K * sum_k (mu^{(-k)}(tau) - mu_all(tau))^2 + V_sample_only(tau),
/// a CV estimate of the estimator variance plus a residual-dispersion
/// penalty. Throws when every grid value is infeasible, listing failures.
CvTauResult cv_select_tau(const Generator& gen,
                          const SoftProblemBuilder& builder,
                          const Eigen::VectorXd& y,
                          const std::vector<double>& grid, int K_cv,
                          std::uint64_t seed);

/// 20 log-spaced points in [1e-5, 1e-1].
std::vector<double> default_tau_grid();

/// Finite-population standardizer: column means and standard deviations
/// over all N units, verified to reproduce mean 0 / variance 1 to 1e-8.
struct PopulationStandardizer {
  Eigen::VectorXd mean;
  Eigen::VectorXd sd;

  static PopulationStandardizer fit(const Eigen::MatrixXd& pop_X);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& X) const;
};

}  // namespace bregcal
