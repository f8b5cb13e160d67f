#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "rerand/errors.hpp"
#include "rerand/harness.hpp"
#include "rerand/twostage.hpp"
#include "test_util.hpp"

using namespace rerand;
using namespace rerand::test;

namespace {

Population linear_population(int n, int p, double noise_sd, RngStream& rng,
                             double* tau_out = nullptr) {
  RowMatrixXd x = random_matrix(n, p, rng);
  Eigen::VectorXd beta1(p), beta0(p);
  for (int j = 0; j < p; ++j) beta1[j] = 2.0;
  for (int j = 0; j < p; ++j) beta0[j] = 1.0;
  Eigen::VectorXd y1(n), y0(n);
  for (int i = 0; i < n; ++i) {
    y1[i] = 5.0 + x.row(i) * beta1 + noise_sd * rng.normal();
    y0[i] = x.row(i) * beta0 + noise_sd * rng.normal();
  }
  Population pop(std::move(x), std::move(y1), std::move(y0), n / 2, n - n / 2);
  if (tau_out) *tau_out = average_effect(pop);
  return pop;
}

}  // namespace

TEST_CASE("population splits") {
  RngStream data_rng(401, 0);
  const Population pop = linear_population(100, 3, 1.0, data_rng);

  SUBCASE("half split is exact") {
    RngStream rng(402, 0);
    const SplitResult split = split_population(pop, 0.5, rng);
    CHECK(split.stage1.size() == 50);
    CHECK(split.stage2.size() == 50);
    CHECK(split.stage1.n_treated() == 25);
  }
  SUBCASE("index sets partition the population") {
    RngStream rng(403, 0);
    const SplitResult split = split_population(pop, 0.3, rng);
    std::set<int> seen(split.stage1_index.begin(), split.stage1_index.end());
    for (int i : split.stage2_index) CHECK(seen.insert(i).second);
    CHECK(static_cast<int>(seen.size()) == 100);
    // rows really are the parent rows
    for (std::size_t k = 0; k < split.stage1_index.size(); ++k)
      CHECK((split.stage1.covariates().row(static_cast<int>(k)) -
             pop.covariates().row(split.stage1_index[k]))
                .cwiseAbs()
                .maxCoeff() == 0.0);
  }
  SUBCASE("a fifth of twelve hundred units is two hundred forty") {
    RngStream big_rng(404, 0);
    const Population big = linear_population(1200, 2, 1.0, big_rng);
    RngStream rng(405, 0);
    CHECK(split_population(big, 0.2, rng).stage1.size() == 240);
  }
  SUBCASE("degenerate shares are rejected") {
    RngStream rng(406, 0);
    CHECK_THROWS_AS(split_population(pop, 0.005, rng), Error);
  }
}

TEST_CASE("pilot estimation") {
  SUBCASE("noiseless outcomes are recovered exactly") {
    RngStream rng(411, 0);
    const Population pop = linear_population(60, 3, 0.0, rng);
    RngStream draw(412, 0);
    const Assignment w1 = bcrd_assignment(60, 30, draw);
    const PilotFit fit = pilot_estimate(pop, w1);
    for (int j = 0; j < 3; ++j) {
      CHECK(fit.beta1_hat[j] == doctest::Approx(2.0).epsilon(1e-8));
      CHECK(fit.beta0_hat[j] == doctest::Approx(1.0).epsilon(1e-8));
    }
    CHECK(fit.v1.cwiseAbs().maxCoeff() <= 1e-12);
  }

  SUBCASE("pure noise slopes average to zero across replications") {
    RngStream rng(421, 0);
    const int p = 2;
    Eigen::VectorXd mean_slope = Eigen::VectorXd::Zero(p);
    std::vector<std::vector<double>> slopes(p);
    constexpr int kReps = 200;
    for (int rep = 0; rep < kReps; ++rep) {
      const int n = 40;
      RowMatrixXd x = random_matrix(n, p, rng);
      Eigen::VectorXd y1(n), y0(n);
      for (int i = 0; i < n; ++i) {
        y1[i] = rng.normal();
        y0[i] = rng.normal();
      }
      const Population pop(std::move(x), std::move(y1), std::move(y0), 20, 20);
      const Assignment w1 = bcrd_assignment(40, 20, rng);
      const PilotFit fit = pilot_estimate(pop, w1);
      for (int j = 0; j < p; ++j) slopes[static_cast<std::size_t>(j)].push_back(fit.beta1_hat[j]);
    }
    for (int j = 0; j < p; ++j) {
      const auto& s = slopes[static_cast<std::size_t>(j)];
      const double se = std::sqrt(variance_of(s) / s.size());
      CHECK(std::fabs(mean_of(s)) <= 4.0 * se);
    }
  }

  SUBCASE("arms smaller than p + 2 cannot be fit") {
    RngStream rng(431, 0);
    const Population pop = linear_population(40, 20, 1.0, rng);  // arms of 20 < 22
    RngStream draw(432, 0);
    const Assignment w1 = bcrd_assignment(40, 20, draw);
    try {
      pilot_estimate(pop, w1);
      FAIL("expected pilot-singular");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::pilot_singular);
    }
  }
}

TEST_CASE("prior construction from a pilot fit") {
  PilotFit fit;
  fit.beta1_hat = Eigen::VectorXd::Constant(2, 3.0);
  fit.beta0_hat = Eigen::VectorXd::Constant(2, 3.0);
  fit.v1 = 4.0 * Eigen::MatrixXd::Identity(2, 2);
  fit.v0 = Eigen::MatrixXd::Zero(2, 2);

  SUBCASE("equal slopes pass through") {
    const PriorSpec prior = pilot_prior(fit, 0.5, 0.5, PriorMode::full);
    CHECK((prior.mu - Eigen::VectorXd::Constant(2, 3.0)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((prior.sigma - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("point mass drops the covariance") {
    const PriorSpec prior = pilot_prior(fit, 0.5, 0.5, PriorMode::point_mass);
    CHECK(prior.sigma.cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("zero sampling covariances collapse full onto point mass") {
    fit.v1.setZero();
    const PriorSpec full = pilot_prior(fit, 0.5, 0.5, PriorMode::full);
    const PriorSpec point = pilot_prior(fit, 0.5, 0.5, PriorMode::point_mass);
    CHECK((full.sigma - point.sigma).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("two-stage pipeline") {
  RngStream data_rng(441, 0);
  const Population pop = linear_population(200, 3, 2.0, data_rng);

  TwoStageConfig config;
  config.rho = 0.3;
  config.stage1_kind = Stage1Kind::bcrd;
  config.alpha_stage2 = 0.1;
  config.mc = McConfig{100'000, 13};

  SUBCASE("combined estimate is the exact convex combination") {
    RngStream rng(442, 0);
    const TwoStageResult result = run_two_stage(pop, config, rng);
    CHECK(result.tau_hat ==
          result.rho * result.tau1_hat + (1.0 - result.rho) * result.tau2_hat);
    CHECK(result.rho == doctest::Approx(0.3).epsilon(1e-12));
  }

  SUBCASE("point-mass runs make the same decisions as a projected criterion") {
    TwoStageConfig pm = config;
    pm.prior_mode = PriorMode::point_mass;
    RngStream rng(443, 0);
    const TwoStageResult result = run_two_stage(pop, pm, rng);

    // rebuild the stage-2 design and compare rule-for-rule
    const int n2 = static_cast<int>(result.stage2_index.size());
    RowMatrixXd x2(n2, pop.dim());
    for (int i = 0; i < n2; ++i)
      x2.row(i) = pop.covariates().row(result.stage2_index[static_cast<std::size_t>(i)]);
    const Population stage2(std::move(x2), n2 / 2, n2 - n2 / 2);

    CriterionParams params;
    params.beta = result.prior.mu;
    const BalanceCriterion reo = build_criterion(
        CriterionKind::reo, params, design_moments(stage2), pm.alpha_stage2, pm.mc);
    CHECK(reo.threshold == result.stage2_criterion.threshold);

    RngStream draw(444, 0);
    for (int rep = 0; rep < 200; ++rep) {
      const Eigen::VectorXd d =
          covariate_diff(stage2, bcrd_assignment(n2, stage2.n_treated(), draw));
      CHECK(accept(reo, d) == accept(result.stage2_criterion, d));
    }
  }

  SUBCASE("accepted stage-2 assignment replays through the stored criterion") {
    RngStream rng(445, 0);
    const TwoStageResult result = run_two_stage(pop, config, rng);
    const int n2 = static_cast<int>(result.stage2_index.size());
    RowMatrixXd x2(n2, pop.dim());
    for (int i = 0; i < n2; ++i)
      x2.row(i) = pop.covariates().row(result.stage2_index[static_cast<std::size_t>(i)]);
    const Population stage2(std::move(x2), n2 / 2, n2 - n2 / 2);
    CHECK(accept(result.stage2_criterion, covariate_diff(stage2, result.w2)));
  }

  SUBCASE("deterministic given the stream key") {
    RngStream a(446, 9), b(446, 9);
    const TwoStageResult ra = run_two_stage(pop, config, a);
    const TwoStageResult rb = run_two_stage(pop, config, b);
    CHECK(ra.tau_hat == rb.tau_hat);
    CHECK(ra.w1.w == rb.w1.w);
    CHECK(ra.w2.w == rb.w2.w);
  }

  SUBCASE("estimator is unbiased over replications") {
    TwoStageConfig pm = config;
    pm.prior_mode = PriorMode::point_mass;  // analytic threshold keeps this fast
    const double tau = average_effect(pop);
    std::vector<double> taus;
    RngStream rng(447, 0);
    for (int rep = 0; rep < 200; ++rep) {
      RngStream run_rng = rng.child(static_cast<std::uint64_t>(rep));
      taus.push_back(run_two_stage(pop, pm, run_rng).tau_hat);
    }
    const double se = std::sqrt(variance_of(taus) / taus.size());
    CHECK(std::fabs(mean_of(taus) - tau) <= 4.0 * se);
  }

  SUBCASE("insufficient pilots propagate the pilot error") {
    RngStream wide_rng(448, 0);
    const Population wide = linear_population(200, 20, 1.0, wide_rng);
    TwoStageConfig bad = config;
    bad.rho = 0.2;  // pilot of 40, arms of 20 < 22
    RngStream rng(449, 0);
    try {
      run_two_stage(wide, bad, rng);
      FAIL("expected pilot-singular");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::pilot_singular);
    }
  }
}
