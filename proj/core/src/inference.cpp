#include "bregcal/inference.hpp"

#include <cmath>

#include "bregcal/errors.hpp"
#include "bregcal/math.hpp"

namespace bregcal {

namespace {

VarianceEstimate with_ci(double value, VarianceMethod method, double mu_hat,
                         bool clipped = false) {
  VarianceEstimate v;
  v.value = value;
  v.method = method;
  v.clipped_negative = clipped;
  const double half = kNormal975 * std::sqrt(std::max(value, 0.0));
  v.ci_low = mu_hat - half;
  v.ci_high = mu_hat + half;
  return v;
}

}  // namespace

JointInclusion JointInclusion::user(Eigen::MatrixXd m) {
  if (m.rows() != m.cols()) {
    throw InvalidArgument("joint inclusion matrix must be square");
  }
  if (!m.isApprox(m.transpose(), 1e-12)) {
    throw InvalidArgument("joint inclusion matrix must be symmetric");
  }
  if ((m.array() <= 0.0).any() || (m.array() > 1.0).any()) {
    throw InvalidArgument("joint inclusion entries must lie in (0, 1]");
  }
  JointInclusion j;
  j.kind = Kind::UserMatrix;
  j.matrix = std::move(m);
  return j;
}

VarianceEstimate var_design(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                            const Eigen::VectorXd& pi,
                            const JointInclusion& joint,
                            const WeightedRegCoef& beta, double mu_hat,
                            Eigen::Index N) {
  const Eigen::Index n = X.rows();
  if (y.size() != n || pi.size() != n) {
    throw InvalidArgument("var_design: dimension mismatch");
  }
  if ((pi.array() <= 0.0).any()) {
    throw InvalidArgument("var_design: inclusion probabilities must be > 0");
  }
  const Eigen::VectorXd e = (y - X * beta.beta).cwiseQuotient(pi);
  const double N2 = static_cast<double>(N) * static_cast<double>(N);

  if (joint.kind == JointInclusion::Kind::PoissonIndependent) {
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      acc += (1.0 - pi[i]) * e[i] * e[i];
    }
    return with_ci(acc / N2, VarianceMethod::DesignHT, mu_hat);
  }

  if (joint.matrix.rows() != n) {
    throw InvalidArgument("var_design: joint matrix size != sample size");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      const double pij = joint.matrix(i, j);
      acc += (pij - pi[i] * pi[j]) / pij * e[i] * e[j];
    }
  }
  acc /= N2;
  const bool clipped = acc < 0.0;
  return with_ci(std::max(acc, 0.0), VarianceMethod::DesignHT, mu_hat,
                 clipped);
}

VarianceEstimate var_missing_eta(const Eigen::MatrixXd& pop_X,
                                 const Eigen::VectorXi& delta,
                                 const Eigen::MatrixXd& X,
                                 const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& w_hat,
                                 const WeightedRegCoef& beta, double mu_hat) {
  const Eigen::Index N = pop_X.rows();
  if (N == 0) {
    throw UnsupportedWithoutFrameError(
        "var_missing_eta needs unit-level population covariates");
  }
  if (delta.size() != N) {
    throw InvalidArgument("var_missing_eta: delta length != population size");
  }
  const Eigen::Index n = X.rows();
  if (delta.sum() != n || y.size() != n || w_hat.size() != n) {
    throw InvalidArgument("var_missing_eta: respondent dimension mismatch");
  }

  const Eigen::VectorXd pred = pop_X * beta.beta;
  const Eigen::VectorXd resid = y - X * beta.beta;
  const double scale = static_cast<double>(N) / static_cast<double>(n);

  Eigen::VectorXd eta = pred;
  Eigen::Index r = 0;
  for (Eigen::Index i = 0; i < N; ++i) {
    if (delta[i] == 1) {
      eta[i] += scale * w_hat[r] * resid[r];
      ++r;
    }
  }
  const double etabar = eta.mean();
  const double value =
      (eta.array() - etabar).square().sum() / (static_cast<double>(N) * N);
  return with_ci(value, VarianceMethod::EtaPopulation, mu_hat);
}

VarianceEstimate var_sample_only(const Eigen::MatrixXd& X_resp,
                                 const Eigen::VectorXd& y,
                                 const Eigen::VectorXd& pi_hat,
                                 const WeightedRegCoef& beta, double mu_hat,
                                 Eigen::Index N) {
  const Eigen::Index n = X_resp.rows();
  if (y.size() != n || pi_hat.size() != n) {
    throw InvalidArgument("var_sample_only: dimension mismatch");
  }
  const Eigen::VectorXd d = pi_hat.cwiseInverse();
  const Eigen::VectorXd resid = y - X_resp * beta.beta;
  const double Nd = static_cast<double>(N);
  double sigma2 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double dy = y[i] - mu_hat;
    sigma2 += d[i] * dy * dy + d[i] * (d[i] - 1.0) * resid[i] * resid[i];
  }
  sigma2 /= Nd;
  return with_ci(sigma2 / Nd, VarianceMethod::SampleOnly, mu_hat);
}

}  // namespace bregcal
