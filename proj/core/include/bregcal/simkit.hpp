#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "bregcal/propensity.hpp"
#include "bregcal/softcal.hpp"

namespace bregcal {

enum class OrModel { OR0, OR1 };
enum class PsModel { PS0, PS1 };

std::string or_model_name(OrModel m);
std::string ps_model_name(PsModel m);

/// Data-generating scenario. p_extra = 0 draws the four i.i.d. TN(2,1,0,4)
/// covariates of study one; p_extra > 0 draws that many N(2, Sigma)
/// covariates with AR-1 correlation Sigma_jk = rho^|j-k| (study two).
struct Scenario {
  OrModel or_model = OrModel::OR0;
  PsModel ps_model = PsModel::PS0;
  Eigen::Index n_pop = 2000;
  int p_extra = 0;
  double rho = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Population {
  Eigen::MatrixXd X;      // N x p raw covariates, no intercept column
  Eigen::VectorXd y;
  Eigen::VectorXd pi;     // true inclusion probabilities
  Eigen::VectorXi delta;  // response indicators
};

/// Outcomes use standard normal noise; OR0 is 1 + x1 - x2, OR1 adds
/// x1*x2 + (x2^2 - 1). Response follows logistic propensities, PS0 linear
/// in (x2, x3), PS1 with the interaction and quartic terms.
Population gen_population(const Scenario& scn);

struct MCRow {
  std::string cell;       // study 1: "ps0-or0" etc.
  std::string learner;    // study 1: "glm"/"spline"; study 2: pilot
  std::string estimator;
  std::string q;          // study 2 SBC rows: "1", "2", "inf"
  double bias_x100 = 0.0;
  double se_x100 = 0.0;
  double rmse_x100 = 0.0;
};

struct MCReport {
  std::vector<MCRow> rows;
  int replicates = 0;
  double runtime_sec = 0.0;
};

struct Study1Config {
  std::vector<std::pair<PsModel, OrModel>> cells = {
      {PsModel::PS0, OrModel::OR0},
      {PsModel::PS0, OrModel::OR1},
      {PsModel::PS1, OrModel::OR0},
      {PsModel::PS1, OrModel::OR1},
  };
  PropensityLearner learner = PropensityLearner::LogisticLinear;
  Eigen::Index n_pop = 2000;
  int replicates = 200;
  int k_folds = 5;
  std::uint64_t seed = 20250801;
};

/// Study one: IPW, ET (= DS-ET = BC-ET), DS/BC under EL and HD, with
/// cross-fitted baselines and common random numbers across estimators
/// within each replicate.
MCReport run_study1(const Study1Config& config);

struct Study2Config {
  Eigen::Index n_pop = 2000;
  int p = 50;
  double rho = 0.5;
  int replicates = 200;
  int k_folds = 5;
  std::string generator_key = "kl";
  double fixed_tau = 5e-4;
  bool tau_sweep = false;
  std::vector<double> tau_grid = default_tau_grid();
  std::uint64_t seed = 20250802;
};

struct TauCurvePoint {
  std::string pilot;
  std::string q;
  double tau = 0.0;
  double bias_x100 = 0.0;
  double se_x100 = 0.0;
  double rmse_x100 = 0.0;
};

struct Study2Output {
  MCReport report;
  std::vector<TauCurvePoint> curves;
};

/// Study two: IPW, Full and Oracle exact calibration, and SBC at a fixed
/// tolerance for q in {1, 2, inf} under OLS and lasso-refit pilots, plus
/// optional RMSE-versus-tau sweep curves.
Study2Output run_study2(const Study2Config& config);

}  // namespace bregcal
