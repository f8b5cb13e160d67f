#pragma once

#include <Eigen/Dense>
#include <vector>

#include "rerand/criteria.hpp"
#include "rerand/errors.hpp"
#include "rerand/population.hpp"
#include "rerand/rng.hpp"

namespace rerand {

struct SamplerStats {
  long long draws_total = 0;
  long long accepted = 0;

  double realized_rate() const {
    return draws_total > 0 ? static_cast<double>(accepted) / draws_total : 0.0;
  }
  double draws_per_accept() const {
    return accepted > 0 ? static_cast<double>(draws_total) / accepted : 0.0;
  }
  SamplerStats& operator+=(const SamplerStats& other) {
    draws_total += other.draws_total;
    accepted += other.accepted;
    return *this;
  }
};

class StarvationError : public Error {
 public:
  StarvationError(const std::string& message, SamplerStats stats)
      : Error(ErrorCode::acceptance_starvation, message), stats_(stats) {}
  const SamplerStats& stats() const noexcept { return stats_; }

 private:
  SamplerStats stats_;
};

// Uniform draw over assignments with exactly n_treated ones, via a partial
// Fisher-Yates shuffle.
Assignment bcrd_assignment(int n, int n_treated, RngStream& rng);

struct RerandomizeResult {
  Assignment assignment;
  Eigen::VectorXd d;
  double distance = 0;
  SamplerStats stats;
};

// Draws BCRD assignments until the criterion accepts one; throws
// acceptance-starvation (carrying the realized stats) after max_draws.
RerandomizeResult rerandomize(const Population& design, const BalanceCriterion& criterion,
                              RngStream& rng, long long max_draws = 10'000'000);

struct SampleAcceptedResult {
  std::vector<Assignment> assignments;
  SamplerStats stats;
};

// `count` accepted assignments. Work is partitioned across n_workers, each on
// its own child stream, and concatenated in stream order; the output depends
// only on (rng key, n_workers), never on scheduling.
SampleAcceptedResult sample_accepted(const Population& design,
                                     const BalanceCriterion& criterion, int count,
                                     const RngStream& rng,
                                     long long max_draws_per = 10'000'000,
                                     int n_workers = 1);

// Deterministic stand-in for wall-clock cost: one criterion evaluation on a
// design with n units and p covariates is charged n*p + p^2 + overhead cost
// units (covariate aggregation, quadratic form, fixed per-draw bookkeeping).
struct CostModel {
  double overhead = 500.0;
  double per_draw(int n_units, int p) const {
    return static_cast<double>(n_units) * p + static_cast<double>(p) * p + overhead;
  }
};

struct CalibrationSpec {
  CriterionKind kind = CriterionKind::rem;
  CriterionParams params;
  // charged once per accepted design, e.g. a pilot stage's expected sampling
  double fixed_cost_per_accept = 0.0;
  // scales the candidate's per-draw cost (testing hook and exotic candidates)
  double per_draw_cost_scale = 1.0;
};

// alpha' such that the candidate's expected cost per accepted design matches
// the reference's. Acceptance rates on both sides are measured empirically on
// budget_draws cached BCRD draws (common random numbers), so a candidate
// identical to the reference calibrates to alpha_ref exactly. Monotone
// bisection over alpha' in [1e-4, 0.5]; calibration-failure when the target
// cost cannot be met in that range.
double calibrate_equal_cost(const Population& reference_design,
                            const BalanceCriterion& reference,
                            const Population& candidate_design,
                            const CalibrationSpec& candidate, long long budget_draws,
                            RngStream& rng, const McConfig& mc = McConfig{},
                            const CostModel& cost = CostModel{});

}  // namespace rerand
