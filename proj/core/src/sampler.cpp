#include "rerand/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

namespace rerand {

namespace {

// Scores assignments against one design without re-touching every unit: D is
// assembled from the treated row sum and the precomputed column totals.
class DiffEvaluator {
 public:
  explicit DiffEvaluator(const Population& design)
      : x_(design.covariates()),
        col_sum_(x_.colwise().sum().transpose()),
        inv_nt_(1.0 / design.n_treated()),
        inv_nc_(1.0 / design.n_control()) {}

  Eigen::VectorXd diff(const std::vector<int>& treated) const {
    Eigen::VectorXd sum_t = Eigen::VectorXd::Zero(x_.cols());
    for (int i : treated) sum_t += x_.row(i).transpose();
    return sum_t * (inv_nt_ + inv_nc_) - col_sum_ * inv_nc_;
  }

 private:
  const RowMatrixXd& x_;
  Eigen::VectorXd col_sum_;
  double inv_nt_;
  double inv_nc_;
};

std::vector<int> draw_treated_set(int n, int n_treated, RngStream& rng,
                                  std::vector<int>& scratch) {
  scratch.resize(n);
  std::iota(scratch.begin(), scratch.end(), 0);
  for (int i = 0; i < n_treated; ++i) {
    const int j = i + static_cast<int>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(scratch[i], scratch[j]);
  }
  return std::vector<int>(scratch.begin(), scratch.begin() + n_treated);
}

Assignment to_assignment(int n, const std::vector<int>& treated) {
  Assignment a;
  a.w.assign(static_cast<std::size_t>(n), 0);
  for (int i : treated) a.w[static_cast<std::size_t>(i)] = 1;
  return a;
}

}  // namespace

Assignment bcrd_assignment(int n, int n_treated, RngStream& rng) {
  if (n < 2 || n_treated < 1 || n_treated >= n)
    throw Error(ErrorCode::invalid_argument,
                "bcrd needs 1 <= n_treated < n and n >= 2");
  std::vector<int> scratch;
  return to_assignment(n, draw_treated_set(n, n_treated, rng, scratch));
}

RerandomizeResult rerandomize(const Population& design, const BalanceCriterion& criterion,
                              RngStream& rng, long long max_draws) {
  if (criterion.lambda_matrix.rows() != design.dim())
    throw Error(ErrorCode::shape_mismatch, "criterion dimension does not match design");
  if (max_draws < 1)
    throw Error(ErrorCode::invalid_argument, "max_draws must be positive");

  const DiffEvaluator evaluator(design);
  std::vector<int> scratch;
  SamplerStats stats;
  while (stats.draws_total < max_draws) {
    const std::vector<int> treated =
        draw_treated_set(design.size(), design.n_treated(), rng, scratch);
    ++stats.draws_total;
    const Eigen::VectorXd d = evaluator.diff(treated);
    const double distance = criterion_distance(criterion, d);
    if (distance <= criterion.threshold) {
      ++stats.accepted;
      return RerandomizeResult{to_assignment(design.size(), treated), d, distance, stats};
    }
  }
  throw StarvationError("no acceptable assignment within the draw budget", stats);
}

SampleAcceptedResult sample_accepted(const Population& design,
                                     const BalanceCriterion& criterion, int count,
                                     const RngStream& rng, long long max_draws_per,
                                     int n_workers) {
  if (count < 1) throw Error(ErrorCode::invalid_argument, "count must be >= 1");
  if (n_workers < 1) n_workers = 1;
  n_workers = std::min(n_workers, count);

  std::vector<SampleAcceptedResult> partial(static_cast<std::size_t>(n_workers));
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(n_workers));

  const auto run_worker = [&](int worker) {
    try {
      const int base = count / n_workers;
      const int extra = count % n_workers;
      const int quota = base + (worker < extra ? 1 : 0);
      RngStream stream = rng.child(static_cast<std::uint64_t>(worker));
      SampleAcceptedResult& out = partial[static_cast<std::size_t>(worker)];
      out.assignments.reserve(static_cast<std::size_t>(quota));
      for (int i = 0; i < quota; ++i) {
        RerandomizeResult one = rerandomize(design, criterion, stream, max_draws_per);
        out.stats += one.stats;
        out.assignments.push_back(std::move(one.assignment));
      }
    } catch (...) {
      failures[static_cast<std::size_t>(worker)] = std::current_exception();
    }
  };

  if (n_workers == 1) {
    run_worker(0);
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(run_worker, w);
    for (auto& t : threads) t.join();
  }

  SampleAcceptedResult result;
  for (int w = 0; w < n_workers; ++w) {
    if (failures[static_cast<std::size_t>(w)])
      std::rethrow_exception(failures[static_cast<std::size_t>(w)]);
    auto& part = partial[static_cast<std::size_t>(w)];
    result.stats += part.stats;
    std::move(part.assignments.begin(), part.assignments.end(),
              std::back_inserter(result.assignments));
  }
  return result;
}

namespace {

// realized acceptance rate of a criterion over a cached set of difference
// vectors (one per BCRD draw)
double realized_rate(const BalanceCriterion& criterion,
                     const std::vector<Eigen::VectorXd>& diffs) {
  long long accepted = 0;
  for (const Eigen::VectorXd& d : diffs)
    if (accept(criterion, d)) ++accepted;
  return static_cast<double>(accepted) / static_cast<double>(diffs.size());
}

std::vector<Eigen::VectorXd> cache_diffs(const Population& design, long long budget,
                                         RngStream& rng) {
  const DiffEvaluator evaluator(design);
  std::vector<int> scratch;
  std::vector<Eigen::VectorXd> diffs;
  diffs.reserve(static_cast<std::size_t>(budget));
  for (long long i = 0; i < budget; ++i)
    diffs.push_back(
        evaluator.diff(draw_treated_set(design.size(), design.n_treated(), rng, scratch)));
  return diffs;
}

}  // namespace

double calibrate_equal_cost(const Population& reference_design,
                            const BalanceCriterion& reference,
                            const Population& candidate_design,
                            const CalibrationSpec& candidate, long long budget_draws,
                            RngStream& rng, const McConfig& mc, const CostModel& cost) {
  if (budget_draws < 10'000)
    throw Error(ErrorCode::invalid_argument,
                "equal-cost calibration needs at least 1e4 budget draws");

  const int p = static_cast<int>(reference.lambda_matrix.rows());
  const double ref_per_draw = cost.per_draw(reference_design.size(), p);
  const double cand_per_draw =
      cost.per_draw(candidate_design.size(), candidate_design.dim()) *
      candidate.per_draw_cost_scale;

  RngStream ref_rng = rng.child(1);
  RngStream cand_rng = rng.child(2);
  const std::vector<Eigen::VectorXd> ref_diffs =
      cache_diffs(reference_design, budget_draws, ref_rng);
  const std::vector<Eigen::VectorXd> cand_diffs =
      (&candidate_design == &reference_design)
          ? ref_diffs
          : cache_diffs(candidate_design, budget_draws, cand_rng);

  const double ref_rate = realized_rate(reference, ref_diffs);
  if (!(ref_rate > 0.0))
    throw Error(ErrorCode::calibration_failure,
                "reference criterion accepted none of the budget draws");
  const double target = ref_per_draw / ref_rate;

  const DesignMoments dm = design_moments(candidate_design);
  const auto cost_at = [&](double alpha) {
    const BalanceCriterion c = build_criterion(candidate.kind, candidate.params, dm, alpha, mc);
    const double rate = realized_rate(c, cand_diffs);
    if (!(rate > 0.0)) return std::numeric_limits<double>::infinity();
    return candidate.fixed_cost_per_accept + cand_per_draw / rate;
  };

  double lo = 1e-4, hi = 0.5;
  const double cost_lo = cost_at(lo);   // most expensive end
  const double cost_hi = cost_at(hi);   // cheapest end
  if (target > cost_lo || target < cost_hi)
    throw Error(ErrorCode::calibration_failure,
                "target cost is unreachable for alpha in [1e-4, 0.5]");

  while (hi - lo > 1e-3) {
    const double mid = 0.5 * (lo + hi);
    if (cost_at(mid) > target)
      lo = mid;  // still too expensive: raise acceptance
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace rerand
