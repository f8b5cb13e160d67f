#pragma once

#include <Eigen/Dense>
#include <utility>

#include "rerand/criteria.hpp"

namespace rerand {

enum class EfficiencyMethod { analytic, monte_carlo };

// One efficiency figure: the normalized truncated second moment v and the
// percent reduction in asymptotic sampling variance it implies,
// priasv = 100 * (1 - v) * R^2.
struct EfficiencyReport {
  double alpha = 0;
  int p = 0;
  double r_squared = 1.0;
  double v_value = 0;
  double priasv = 0;
  EfficiencyMethod method = EfficiencyMethod::analytic;
  double mc_stderr = 0;  // standard error of v_value when method is monte_carlo
};

struct PointMassAngle {
  double cos2_theta = 0;
};

// E(chi^2_p | chi^2_p <= xi_{alpha,p}) / p, computed through the identity
// with P(chi^2_{p+2} <= xi_{alpha,p}) / alpha.
double v_alpha_p(double alpha, int p);

EfficiencyReport priasv_rem(double alpha, int p, double r_squared);
EfficiencyReport priasv_reo(double alpha, double r_squared);

// (1 - v_{alpha,p}) / (1 - v_{alpha,1}), in (0, 1]; decays like 1/sqrt(p)
double priasv_ratio_rem_over_reo(double alpha, int p);

// Full-rank prior: v = beta' (M^-1)' G' C G M^-1 beta / (beta' V_xx beta)
// with Lambda = M M', M' V_xx M = G' diag(lambda) G, and C the conditional
// second moments E(lambda_i Z_i^2 | sum_j lambda_j Z_j^2 <= xi). The C
// estimates share the draws of the threshold estimate. Requires Lambda SPD;
// rank-deficient priors belong to the point-mass path.
EfficiencyReport v_alpha_pi(const Eigen::MatrixXd& v_xx, const Eigen::MatrixXd& lambda_pi,
                            const Eigen::VectorXd& beta, double alpha,
                            const McConfig& mc = McConfig{}, double r_squared = 1.0);

// Point-mass prior: cos^2(theta) between (V_xx^{1/2})' mu and
// (V_xx^{1/2})' beta, and v = 1 - (1 - v_{alpha,1}) cos^2(theta).
std::pair<PointMassAngle, EfficiencyReport> v_alpha_pi_pointmass(
    const Eigen::MatrixXd& v_xx, const Eigen::VectorXd& mu_pi,
    const Eigen::VectorXd& beta, double alpha, double r_squared = 1.0);

// A point-mass prior beats the Mahalanobis criterion iff cos^2(theta)
// exceeds this; numerically identical to priasv_ratio_rem_over_reo.
double cos2_outperformance_threshold(double alpha, int p);

enum class TwoStageKind { bcrd_reb, rem_reb };

// alpha_stage1 is the pilot-stage acceptance rate (meaningful for rem_reb
// only), alpha_stage2 the second-stage rate.
EfficiencyReport priasv_two_stage(TwoStageKind kind, double rho_star,
                                  double alpha_stage1, double alpha_stage2, int p,
                                  double r_squared);

}  // namespace rerand
