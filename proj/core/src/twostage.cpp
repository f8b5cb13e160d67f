#include "rerand/twostage.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <numeric>

#include "rerand/errors.hpp"

namespace rerand {

namespace {

int balanced_treated(int n_stage, double r1) {
  const int n_t = static_cast<int>(std::floor(n_stage * r1 + 1e-12));
  return std::clamp(n_t, 1, n_stage - 1);
}

Population subset_population(const Population& pop, const std::vector<int>& rows) {
  const int n = static_cast<int>(rows.size());
  RowMatrixXd x(n, pop.dim());
  for (int i = 0; i < n; ++i) x.row(i) = pop.covariates().row(rows[static_cast<std::size_t>(i)]);
  const int n_t = balanced_treated(n, pop.r1());
  if (!pop.has_outcomes()) return Population(std::move(x), n_t, n - n_t);
  Eigen::VectorXd y1(n), y0(n);
  for (int i = 0; i < n; ++i) {
    y1[i] = pop.y1()[rows[static_cast<std::size_t>(i)]];
    y0[i] = pop.y0()[rows[static_cast<std::size_t>(i)]];
  }
  return Population(std::move(x), std::move(y1), std::move(y0), n_t, n - n_t);
}

}  // namespace

SplitResult split_population(const Population& pop, double rho, RngStream& rng) {
  if (!(rho > 0.0) || !(rho < 1.0))
    throw Error(ErrorCode::invalid_argument, "rho must lie in (0, 1)");
  const int n = pop.size();
  const int n1 = static_cast<int>(std::lround(rho * n));
  const int n2 = n - n1;
  if (n1 < 2 || n2 < 2)
    throw Error(ErrorCode::split_error, "each stage needs at least 2 units");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int i = 0; i < n1; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }

  std::vector<int> index1(order.begin(), order.begin() + n1);
  std::vector<int> index2(order.begin() + n1, order.end());
  std::sort(index1.begin(), index1.end());
  std::sort(index2.begin(), index2.end());
  // braced init evaluates left to right, so the subsets are built before the
  // index vectors are moved out
  return SplitResult{subset_population(pop, index1), subset_population(pop, index2),
                     std::move(index1), std::move(index2)};
}

namespace {

struct ArmFit {
  Eigen::VectorXd slopes;
  Eigen::MatrixXd slope_cov;
};

ArmFit fit_arm(const RowMatrixXd& x_all, const Eigen::VectorXd& y_all,
               const std::vector<int>& rows, int p) {
  const int n = static_cast<int>(rows.size());
  if (n < p + 2)
    throw Error(ErrorCode::pilot_singular,
                "pilot arm has fewer than p + 2 units; slopes are not estimable");

  Eigen::MatrixXd design(n, p + 1);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    design(i, 0) = 1.0;
    design.row(i).tail(p) = x_all.row(rows[static_cast<std::size_t>(i)]);
    y[i] = y_all[rows[static_cast<std::size_t>(i)]];
  }

  const Eigen::MatrixXd xtx = design.transpose() * design;
  Eigen::LLT<Eigen::MatrixXd> llt(xtx);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-12)
    throw Error(ErrorCode::pilot_singular, "pilot design matrix is rank deficient");

  const Eigen::VectorXd coef = llt.solve(design.transpose() * y);
  const Eigen::VectorXd residual = y - design * coef;
  const double sigma2 = residual.squaredNorm() / static_cast<double>(n - p - 1);
  const Eigen::MatrixXd xtx_inv = llt.solve(Eigen::MatrixXd::Identity(p + 1, p + 1));

  ArmFit fit;
  fit.slopes = coef.tail(p);
  fit.slope_cov = sigma2 * xtx_inv.bottomRightCorner(p, p);
  return fit;
}

}  // namespace

PilotFit pilot_estimate(const Population& stage1, const Assignment& w1) {
  if (static_cast<int>(w1.w.size()) != stage1.size())
    throw Error(ErrorCode::shape_mismatch, "assignment length does not match the pilot");
  const int p = stage1.dim();

  std::vector<int> treated, control;
  for (int i = 0; i < stage1.size(); ++i)
    (w1.w[static_cast<std::size_t>(i)] ? treated : control).push_back(i);

  // observed outcomes only: Y(1) in the treated arm, Y(0) in the control arm
  const ArmFit fit1 = fit_arm(stage1.covariates(), stage1.y1(), treated, p);
  const ArmFit fit0 = fit_arm(stage1.covariates(), stage1.y0(), control, p);

  double mean_t = 0.0, mean_c = 0.0;
  for (int i : treated) mean_t += stage1.y1()[i];
  for (int i : control) mean_c += stage1.y0()[i];
  mean_t /= static_cast<double>(treated.size());
  mean_c /= static_cast<double>(control.size());

  PilotFit fit;
  fit.beta1_hat = fit1.slopes;
  fit.beta0_hat = fit0.slopes;
  fit.v1 = fit1.slope_cov;
  fit.v0 = fit0.slope_cov;
  fit.tau1_hat = mean_t - mean_c;
  return fit;
}

PriorSpec pilot_prior(const PilotFit& fit, double r0, double r1, PriorMode mode) {
  PriorSpec prior;
  prior.mu = r0 * fit.beta1_hat + r1 * fit.beta0_hat;
  const auto p = prior.mu.size();
  if (mode == PriorMode::full)
    prior.sigma = r0 * r0 * fit.v1 + r1 * r1 * fit.v0;
  else
    prior.sigma = Eigen::MatrixXd::Zero(p, p);
  return prior;
}

TwoStageResult run_two_stage(const Population& pop, const TwoStageConfig& config,
                             RngStream& rng) {
  if (!pop.has_outcomes())
    throw Error(ErrorCode::missing_outcomes,
                "a two-stage run reveals outcomes stage by stage; the population needs them");

  RngStream split_rng = rng.child(1);
  RngStream stage1_rng = rng.child(2);
  RngStream stage2_rng = rng.child(3);

  SplitResult split = split_population(pop, config.rho, split_rng);

  TwoStageResult result;
  result.stage1_index = std::move(split.stage1_index);
  result.stage2_index = std::move(split.stage2_index);

  // stage 1: pilot experiment
  if (config.stage1_kind == Stage1Kind::bcrd) {
    result.w1 = bcrd_assignment(split.stage1.size(), split.stage1.n_treated(), stage1_rng);
    result.stats1.draws_total = 1;
    result.stats1.accepted = 1;
  } else {
    const BalanceCriterion stage1_criterion =
        build_criterion(CriterionKind::rem, CriterionParams{},
                        design_moments(split.stage1), config.alpha_stage1, config.mc);
    RerandomizeResult one =
        rerandomize(split.stage1, stage1_criterion, stage1_rng, config.max_draws);
    result.w1 = std::move(one.assignment);
    result.stats1 = one.stats;
  }
  result.tau1_hat = diff_in_means_tau(split.stage1, result.w1);

  // prior from the pilot fit, combined with the full-design proportions
  const PilotFit fit = pilot_estimate(split.stage1, result.w1);
  result.prior = pilot_prior(fit, pop.r0(), pop.r1(), config.prior_mode);

  // stage 2: ReB with the learned prior, moments from stage-2 units only
  CriterionParams params;
  params.prior = result.prior;
  result.stage2_criterion =
      build_criterion(CriterionKind::reb, params, design_moments(split.stage2),
                      config.alpha_stage2, config.mc);
  RerandomizeResult two =
      rerandomize(split.stage2, result.stage2_criterion, stage2_rng, config.max_draws);
  result.w2 = std::move(two.assignment);
  result.stats2 = two.stats;
  result.tau2_hat = diff_in_means_tau(split.stage2, result.w2);

  result.rho = static_cast<double>(split.stage1.size()) / pop.size();
  result.tau_hat = result.rho * result.tau1_hat + (1.0 - result.rho) * result.tau2_hat;
  return result;
}

}  // namespace rerand
