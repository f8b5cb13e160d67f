#include "rerand/theory.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "rerand/errors.hpp"
#include "rerand/math.hpp"
#include "rerand/rng.hpp"

namespace rerand {

namespace {

void check_alpha(double alpha) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw Error(ErrorCode::invalid_argument, "alpha must lie in (0, 1)");
}

void check_r_squared(double r_squared) {
  if (!(r_squared >= 0.0) || !(r_squared <= 1.0))
    throw Error(ErrorCode::invalid_argument, "R^2 must lie in [0, 1]");
}

EfficiencyReport analytic_report(double alpha, int p, double r_squared, double v) {
  EfficiencyReport report;
  report.alpha = alpha;
  report.p = p;
  report.r_squared = r_squared;
  report.v_value = v;
  report.priasv = 100.0 * (1.0 - v) * r_squared;
  report.method = EfficiencyMethod::analytic;
  return report;
}

}  // namespace

double v_alpha_p(double alpha, int p) {
  check_alpha(alpha);
  if (p < 1) throw Error(ErrorCode::invalid_argument, "p must be >= 1");
  const double xi = chisq_quantile(static_cast<double>(p), alpha);
  return chisq_cdf(xi, static_cast<double>(p) + 2.0) / alpha;
}

EfficiencyReport priasv_rem(double alpha, int p, double r_squared) {
  check_r_squared(r_squared);
  return analytic_report(alpha, p, r_squared, v_alpha_p(alpha, p));
}

EfficiencyReport priasv_reo(double alpha, double r_squared) {
  check_r_squared(r_squared);
  return analytic_report(alpha, 1, r_squared, v_alpha_p(alpha, 1));
}

double priasv_ratio_rem_over_reo(double alpha, int p) {
  return (1.0 - v_alpha_p(alpha, p)) / (1.0 - v_alpha_p(alpha, 1));
}

double cos2_outperformance_threshold(double alpha, int p) {
  return priasv_ratio_rem_over_reo(alpha, p);
}

EfficiencyReport v_alpha_pi(const Eigen::MatrixXd& v_xx, const Eigen::MatrixXd& lambda_pi,
                            const Eigen::VectorXd& beta, double alpha,
                            const McConfig& mc, double r_squared) {
  check_alpha(alpha);
  check_r_squared(r_squared);
  const int p = static_cast<int>(v_xx.rows());
  if (lambda_pi.rows() != p || beta.size() != p)
    throw Error(ErrorCode::shape_mismatch, "v_xx, lambda and beta disagree on dimension");
  if (!(beta.cwiseAbs().maxCoeff() > 0.0))
    throw Error(ErrorCode::invalid_argument, "beta must be nonzero");

  Eigen::LLT<Eigen::MatrixXd> lambda_llt(lambda_pi);
  if (lambda_llt.info() != Eigen::Success || lambda_llt.rcond() < 1e-12)
    throw Error(ErrorCode::not_positive_definite,
                "lambda is rank deficient; use the point-mass path for rank-1 priors");

  const Eigen::MatrixXd m_factor = lambda_llt.matrixL();
  const Eigen::MatrixXd a = m_factor.transpose() * v_xx * m_factor;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::not_positive_definite, "eigendecomposition failed");

  // descending eigenvalues; gamma rows follow the same order
  Eigen::VectorXd lambdas = es.eigenvalues().reverse();
  Eigen::MatrixXd gamma(p, p);
  for (int i = 0; i < p; ++i) gamma.row(i) = es.eigenvectors().col(p - 1 - i).transpose();

  const double max_lambda = lambdas.maxCoeff();
  for (int i = 0; i < p; ++i)
    if (lambdas[i] <= 1e-10 * max_lambda) lambdas[i] = 0.0;

  // g = Gamma M^-1 beta, so the target is g' C g / (beta' V_xx beta)
  const Eigen::VectorXd m_inv_beta =
      m_factor.triangularView<Eigen::Lower>().solve(beta);
  const Eigen::VectorXd g = gamma * m_inv_beta;
  const double denom = beta.dot(v_xx * beta);
  if (!(denom > 0.0))
    throw Error(ErrorCode::undefined_quantity, "beta' V_xx beta must be positive");

  EfficiencyReport report;
  report.alpha = alpha;
  report.p = p;
  report.r_squared = r_squared;

  const double spread = lambdas.maxCoeff() - lambdas.minCoeff();
  if (spread <= 1e-9 * max_lambda) {
    // equal weights: every conditional second moment is lambda * v_{alpha,p}
    const double v = v_alpha_p(alpha, p);
    const double mean_lambda = lambdas.mean();
    report.v_value = (g.array().square() * mean_lambda * v).sum() / denom;
    report.method = EfficiencyMethod::analytic;
    report.priasv = 100.0 * (1.0 - report.v_value) * r_squared;
    return report;
  }

  // pass 1: threshold from the weighted chi-square sample
  EigenSpectrum spectrum{lambdas};
  const ThresholdSpec threshold = weighted_chisq_quantile(spectrum, alpha, mc.draws, mc.seed);

  // pass 2: identical draws (same seed), conditional moments below threshold
  Eigen::VectorXd c_sum = Eigen::VectorXd::Zero(p);
  double t_sum = 0.0, t_sumsq = 0.0;
  long long n_accepted = 0;
  const Eigen::VectorXd g2 = g.array().square();
  {
    RngStream mc_rng(mc.seed, 0);
    Eigen::VectorXd terms(p);
    for (int i = 0; i < mc.draws; ++i) {
      double s = 0.0;
      for (int j = 0; j < p; ++j) {
        if (lambdas[j] == 0.0) {
          terms[j] = 0.0;
          continue;
        }
        const double z = mc_rng.normal();
        terms[j] = lambdas[j] * z * z;
        s += terms[j];
      }
      if (s <= threshold.xi) {
        ++n_accepted;
        c_sum += terms;
        const double t = g2.dot(terms);
        t_sum += t;
        t_sumsq += t * t;
      }
    }
  }
  if (n_accepted < 2)
    throw Error(ErrorCode::degenerate_prior,
                "too few Monte Carlo draws fell inside the acceptance region");

  const Eigen::VectorXd c = c_sum / static_cast<double>(n_accepted);
  report.v_value = g2.dot(c) / denom;
  report.method = EfficiencyMethod::monte_carlo;
  const double t_mean = t_sum / static_cast<double>(n_accepted);
  const double t_var =
      (t_sumsq - static_cast<double>(n_accepted) * t_mean * t_mean) /
      static_cast<double>(n_accepted - 1);
  report.mc_stderr = std::sqrt(std::max(t_var, 0.0) / static_cast<double>(n_accepted)) / denom;
  report.priasv = 100.0 * (1.0 - report.v_value) * r_squared;
  return report;
}

std::pair<PointMassAngle, EfficiencyReport> v_alpha_pi_pointmass(
    const Eigen::MatrixXd& v_xx, const Eigen::VectorXd& mu_pi,
    const Eigen::VectorXd& beta, double alpha, double r_squared) {
  check_alpha(alpha);
  check_r_squared(r_squared);
  const int p = static_cast<int>(v_xx.rows());
  if (mu_pi.size() != p || beta.size() != p)
    throw Error(ErrorCode::shape_mismatch, "v_xx, mu and beta disagree on dimension");

  const double mu_v_mu = mu_pi.dot(v_xx * mu_pi);
  const double beta_v_beta = beta.dot(v_xx * beta);
  const double mu_v_beta = mu_pi.dot(v_xx * beta);
  if (!(mu_v_mu > 0.0) || !(beta_v_beta > 0.0))
    throw Error(ErrorCode::undefined_quantity,
                "angle is undefined for a zero prior mean or zero beta");

  PointMassAngle angle;
  angle.cos2_theta = (mu_v_beta * mu_v_beta) / (mu_v_mu * beta_v_beta);
  angle.cos2_theta = std::min(angle.cos2_theta, 1.0);

  const double v1 = v_alpha_p(alpha, 1);
  const double v = 1.0 - (1.0 - v1) * angle.cos2_theta;
  EfficiencyReport report = analytic_report(alpha, p, r_squared, v);
  return {angle, report};
}

EfficiencyReport priasv_two_stage(TwoStageKind kind, double rho_star,
                                  double alpha_stage1, double alpha_stage2, int p,
                                  double r_squared) {
  if (!(rho_star > 0.0) || !(rho_star < 1.0))
    throw Error(ErrorCode::invalid_argument, "rho_star must lie in (0, 1)");
  check_r_squared(r_squared);

  double reduction = 0.0;  // 1 - composite v
  switch (kind) {
    case TwoStageKind::bcrd_reb:
      reduction = (1.0 - rho_star) * (1.0 - v_alpha_p(alpha_stage2, 1));
      break;
    case TwoStageKind::rem_reb:
      reduction = rho_star * (1.0 - v_alpha_p(alpha_stage1, p)) +
                  (1.0 - rho_star) * (1.0 - v_alpha_p(alpha_stage2, 1));
      break;
  }
  return analytic_report(alpha_stage2, p, r_squared, 1.0 - reduction);
}

}  // namespace rerand
