#include <doctest.h>

#include <cmath>
#include <limits>

#include "rerand/criteria.hpp"
#include "rerand/errors.hpp"
#include "rerand/sampler.hpp"
#include "test_util.hpp"

using namespace rerand;
using namespace rerand::test;

TEST_CASE("bcrd assignments") {
  SUBCASE("every draw places exactly n_treated units") {
    RngStream rng(201, 0);
    for (int rep = 0; rep < 1000; ++rep)
      CHECK(count_treated(bcrd_assignment(17, 5, rng)) == 5);
  }
  SUBCASE("two-unit design is a fair coin") {
    RngStream rng(202, 0);
    int first_treated = 0;
    constexpr int kDraws = 100'000;
    for (int i = 0; i < kDraws; ++i)
      first_treated += bcrd_assignment(2, 1, rng).w[0];
    const double fraction = static_cast<double>(first_treated) / kDraws;
    CHECK(fraction > 0.49);
    CHECK(fraction < 0.51);
  }
  SUBCASE("identical keys reproduce identical draws") {
    RngStream a(77, 3), b(77, 3);
    for (int rep = 0; rep < 50; ++rep)
      CHECK(bcrd_assignment(30, 11, a).w == bcrd_assignment(30, 11, b).w);
  }
  SUBCASE("invalid sizes are rejected") {
    RngStream rng(203, 0);
    CHECK_THROWS_AS(bcrd_assignment(5, 0, rng), Error);
    CHECK_THROWS_AS(bcrd_assignment(5, 5, rng), Error);
  }
}

TEST_CASE("rerandomize") {
  RngStream data_rng(211, 0);
  const Population pop = gaussian_design(600, 4, data_rng);
  const DesignMoments dm = design_moments(pop);

  SUBCASE("an infinite threshold accepts the first draw") {
    BalanceCriterion open_gate =
        build_criterion(CriterionKind::rem, CriterionParams{}, dm, 0.5, McConfig{});
    open_gate.threshold = std::numeric_limits<double>::infinity();
    RngStream rng(212, 0);
    const RerandomizeResult result = rerandomize(pop, open_gate, rng);
    CHECK(result.stats.draws_total == 1);
    CHECK(result.stats.accepted == 1);
  }

  SUBCASE("draw counts follow the geometric expectation") {
    const BalanceCriterion rem =
        build_criterion(CriterionKind::rem, CriterionParams{}, dm, 0.05, McConfig{});
    RngStream rng(213, 0);
    long long total_draws = 0;
    for (int i = 0; i < 200; ++i)
      total_draws += rerandomize(pop, rem, rng).stats.draws_total;
    const double mean_draws = static_cast<double>(total_draws) / 200.0;
    CHECK(mean_draws > 16.0);
    CHECK(mean_draws < 24.0);
  }

  SUBCASE("draw counts have the geometric variance") {
    const BalanceCriterion rem =
        build_criterion(CriterionKind::rem, CriterionParams{}, dm, 0.05, McConfig{});
    RngStream rng(214, 0);
    std::vector<double> counts;
    counts.reserve(5000);
    for (int i = 0; i < 5000; ++i)
      counts.push_back(static_cast<double>(rerandomize(pop, rem, rng).stats.draws_total));
    const double expected = (1.0 - 0.05) / (0.05 * 0.05);
    CHECK(variance_of(counts) > 0.8 * expected);
    CHECK(variance_of(counts) < 1.2 * expected);
  }

  SUBCASE("accepted assignments replay through the acceptance rule") {
    const BalanceCriterion rem =
        build_criterion(CriterionKind::rem, CriterionParams{}, dm, 0.1, McConfig{});
    RngStream rng(215, 0);
    for (int i = 0; i < 25; ++i) {
      const RerandomizeResult result = rerandomize(pop, rem, rng);
      CHECK(accept(rem, covariate_diff(pop, result.assignment)));
      CHECK(result.distance <= rem.threshold);
    }
  }

  SUBCASE("starvation carries the realized statistics") {
    BalanceCriterion closed =
        build_criterion(CriterionKind::rem, CriterionParams{}, dm, 0.5, McConfig{});
    closed.threshold = 0.0;
    RngStream rng(216, 0);
    try {
      rerandomize(pop, closed, rng, 100);
      FAIL("expected starvation");
    } catch (const StarvationError& e) {
      CHECK(e.stats().draws_total == 100);
      CHECK(e.stats().accepted == 0);
      CHECK(e.code() == ErrorCode::acceptance_starvation);
    }
  }
}

TEST_CASE("sample_accepted") {
  RngStream data_rng(221, 0);
  const Population pop = gaussian_design(1200, 4, data_rng);
  const BalanceCriterion rem = build_criterion(
      CriterionKind::rem, CriterionParams{}, design_moments(pop), 0.05, McConfig{});

  SUBCASE("realized rate settles near the target") {
    const SampleAcceptedResult result =
        sample_accepted(pop, rem, 1000, RngStream(222, 0));
    CHECK(static_cast<int>(result.assignments.size()) == 1000);
    CHECK(result.stats.realized_rate() > 0.045);
    CHECK(result.stats.realized_rate() < 0.055);
  }

  SUBCASE("same key and worker count give identical assignment lists") {
    for (int workers : {1, 3}) {
      const SampleAcceptedResult a =
          sample_accepted(pop, rem, 60, RngStream(223, 5), 10'000'000, workers);
      const SampleAcceptedResult b =
          sample_accepted(pop, rem, 60, RngStream(223, 5), 10'000'000, workers);
      REQUIRE(a.assignments.size() == b.assignments.size());
      for (std::size_t i = 0; i < a.assignments.size(); ++i)
        CHECK(a.assignments[i].w == b.assignments[i].w);
      CHECK(a.stats.draws_total == b.stats.draws_total);
    }
  }

  SUBCASE("mirroring the covariates changes nothing about acceptance") {
    RowMatrixXd mirrored = -pop.covariates();
    const Population flipped(std::move(mirrored), pop.n_treated(), pop.n_control());
    const BalanceCriterion rem_flipped = build_criterion(
        CriterionKind::rem, CriterionParams{}, design_moments(flipped), 0.05, McConfig{});
    const SampleAcceptedResult a = sample_accepted(pop, rem, 50, RngStream(224, 0));
    const SampleAcceptedResult b = sample_accepted(flipped, rem_flipped, 50, RngStream(224, 0));
    CHECK(a.stats.draws_total == b.stats.draws_total);
    for (std::size_t i = 0; i < a.assignments.size(); ++i)
      CHECK(a.assignments[i].w == b.assignments[i].w);
  }
}

TEST_CASE("unbiasedness under rerandomization with balanced arms") {
  RngStream rng(231, 0);
  const int n = 200;
  RowMatrixXd x = random_matrix(n, 3, rng);
  Eigen::VectorXd beta(3);
  beta << 1.0, -0.5, 2.0;
  Eigen::VectorXd y0(n), y1(n);
  for (int i = 0; i < n; ++i) {
    y0[i] = x.row(i) * beta + 0.5 * rng.normal();
    y1[i] = 3.0 + x.row(i) * beta + 0.5 * rng.normal();
  }
  const Population pop(std::move(x), std::move(y1), std::move(y0), n / 2, n / 2);
  const double tau = average_effect(pop);

  const BalanceCriterion rem = build_criterion(
      CriterionKind::rem, CriterionParams{}, design_moments(pop), 0.05, McConfig{});
  RngStream draw_rng(232, 0);
  std::vector<double> taus;
  for (int i = 0; i < 500; ++i)
    taus.push_back(diff_in_means_tau(pop, rerandomize(pop, rem, draw_rng).assignment));
  const double se = std::sqrt(variance_of(taus) / taus.size());
  CHECK(std::fabs(mean_of(taus) - tau) <= 4.0 * se);
}

TEST_CASE("equal-cost calibration") {
  RngStream data_rng(241, 0);
  const Population pop = gaussian_design(600, 4, data_rng);
  const DesignMoments dm = design_moments(pop);
  const BalanceCriterion reference =
      build_criterion(CriterionKind::rem, CriterionParams{}, dm, 0.05, McConfig{});

  SUBCASE("a candidate identical to the reference is a fixed point") {
    CalibrationSpec candidate;
    candidate.kind = CriterionKind::rem;
    RngStream rng(242, 0);
    const double alpha = calibrate_equal_cost(pop, reference, pop, candidate, 20'000, rng);
    CHECK(std::fabs(alpha - 0.05) <= 2e-3);
  }

  SUBCASE("half the per-draw cost halves the calibrated rate") {
    CalibrationSpec candidate;
    candidate.kind = CriterionKind::rem;
    candidate.per_draw_cost_scale = 0.5;
    RngStream rng(243, 0);
    const double alpha = calibrate_equal_cost(pop, reference, pop, candidate, 20'000, rng);
    CHECK(std::fabs(alpha - 0.025) <= 3e-3);
  }

  SUBCASE("an unreachable budget fails loudly") {
    CalibrationSpec candidate;
    candidate.kind = CriterionKind::rem;
    candidate.fixed_cost_per_accept = 1e12;
    RngStream rng(244, 0);
    CHECK_THROWS_AS(calibrate_equal_cost(pop, reference, pop, candidate, 20'000, rng),
                    Error);
  }

  SUBCASE("a pilot-then-filter candidate calibrates above the reference rate") {
    // stage-2 candidate on the remaining units, charged the pilot sampling;
    // the calibrated second-stage rate sits above the reference level at
    // n = 200 and falls back toward it as n grows
    const CostModel cost;
    double previous = 1.0;
    for (int n : {200, 1200}) {
      RngStream rng(245, static_cast<std::uint64_t>(n));
      const Population full = gaussian_design(n, 10, rng);
      const int n1 = n / 5;
      RowMatrixXd x1 = full.covariates().topRows(n1);
      RowMatrixXd x2 = full.covariates().bottomRows(n - n1);
      const Population stage1(std::move(x1), n1 / 2, n1 - n1 / 2);
      const Population stage2(std::move(x2), (n - n1) / 2, (n - n1) - (n - n1) / 2);

      const BalanceCriterion ref_full = build_criterion(
          CriterionKind::rem, CriterionParams{}, design_moments(full), 0.05, McConfig{});

      CalibrationSpec candidate;
      candidate.kind = CriterionKind::reb;
      CriterionParams params;
      params.prior = PriorSpec{Eigen::VectorXd::Constant(10, 1.5),
                               0.5 * Eigen::MatrixXd::Identity(10, 10)};
      candidate.params = params;
      candidate.fixed_cost_per_accept = (1.0 / 0.05) * cost.per_draw(stage1.size(), 10);

      RngStream cal_rng(246, static_cast<std::uint64_t>(n));
      const double alpha =
          calibrate_equal_cost(full, ref_full, stage2, candidate, 20'000, cal_rng,
                               McConfig{120'000, 9});
      CHECK(alpha > 0.05);
      CHECK(alpha < 0.12);
      CHECK(alpha < previous);
      previous = alpha;
    }
  }
}
