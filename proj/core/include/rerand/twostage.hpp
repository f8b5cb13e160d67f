#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rerand/criteria.hpp"
#include "rerand/population.hpp"
#include "rerand/rng.hpp"
#include "rerand/sampler.hpp"

namespace rerand {

enum class Stage1Kind { bcrd, rem };
enum class PriorMode { full, point_mass };

struct TwoStageConfig {
  double rho = 0.2;                    // stage-1 sample fraction
  Stage1Kind stage1_kind = Stage1Kind::bcrd;
  double alpha_stage1 = 0.05;          // used when stage1_kind is rem
  double alpha_stage2 = 0.05;
  PriorMode prior_mode = PriorMode::full;
  long long max_draws = 10'000'000;
  McConfig mc;                         // stage-2 threshold Monte Carlo budget
};

// Arm-wise least squares on the pilot data: slope vectors, their sampling
// covariances (residual mean square times the slope block of (X'X)^-1), and
// the stage-1 difference in means.
struct PilotFit {
  Eigen::VectorXd beta1_hat;
  Eigen::VectorXd beta0_hat;
  Eigen::MatrixXd v1;
  Eigen::MatrixXd v0;
  double tau1_hat = 0;
};

struct SplitResult {
  Population stage1;
  Population stage2;
  std::vector<int> stage1_index;  // rows of the parent population, ascending
  std::vector<int> stage2_index;
};

struct TwoStageResult {
  double tau_hat = 0;   // rho * tau1 + (1 - rho) * tau2, rho realized as N1/N
  double tau1_hat = 0;
  double tau2_hat = 0;
  double rho = 0;
  PriorSpec prior;
  SamplerStats stats1;
  SamplerStats stats2;
  BalanceCriterion stage2_criterion;
  Assignment w1;
  Assignment w2;
  std::vector<int> stage1_index;
  std::vector<int> stage2_index;
};

// Uniform partition with N1 = round(rho * N); both stages keep balanced arms
// (treated count floor(N_s * r1)).
SplitResult split_population(const Population& pop, double rho, RngStream& rng);

// Requires both arm sizes >= p + 2; smaller pilots raise pilot-singular.
PilotFit pilot_estimate(const Population& stage1, const Assignment& w1);

// mu = r0 * beta1_hat + r1 * beta0_hat; Sigma = r0^2 V1 + r1^2 V0 in full
// mode, zero in point-mass mode.
PriorSpec pilot_prior(const PilotFit& fit, double r0, double r1, PriorMode mode);

TwoStageResult run_two_stage(const Population& pop, const TwoStageConfig& config,
                             RngStream& rng);

}  // namespace rerand
