#include "rerand/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <ostream>
#include <thread>

#include "rerand/errors.hpp"
#include "rerand/sampler.hpp"

namespace rerand {

const char* scheme_kind_name(Scheme::Kind kind) {
  switch (kind) {
    case Scheme::Kind::bcrd: return "bcrd";
    case Scheme::Kind::rem: return "rem";
    case Scheme::Kind::reo: return "reo";
    case Scheme::Kind::reb: return "reb";
    case Scheme::Kind::ridge_rem: return "ridge-rem";
    case Scheme::Kind::pca_rem: return "pca-rem";
    case Scheme::Kind::bcrd_reb: return "bcrd-reb";
    case Scheme::Kind::rem_reb: return "rem-reb";
    case Scheme::Kind::bcrd_reo: return "bcrd-reo";
    case Scheme::Kind::rem_reo: return "rem-reo";
  }
  return "unknown";
}

Scheme::Kind scheme_kind_from_name(const std::string& name) {
  if (name == "bcrd") return Scheme::Kind::bcrd;
  if (name == "rem") return Scheme::Kind::rem;
  if (name == "reo") return Scheme::Kind::reo;
  if (name == "reb") return Scheme::Kind::reb;
  if (name == "ridge-rem" || name == "ridge") return Scheme::Kind::ridge_rem;
  if (name == "pca-rem" || name == "pca") return Scheme::Kind::pca_rem;
  if (name == "bcrd-reb") return Scheme::Kind::bcrd_reb;
  if (name == "rem-reb") return Scheme::Kind::rem_reb;
  if (name == "bcrd-reo") return Scheme::Kind::bcrd_reo;
  if (name == "rem-reo") return Scheme::Kind::rem_reo;
  throw Error(ErrorCode::invalid_argument, "unknown scheme: " + name);
}

bool scheme_is_two_stage(Scheme::Kind kind) {
  return kind == Scheme::Kind::bcrd_reb || kind == Scheme::Kind::rem_reb ||
         kind == Scheme::Kind::bcrd_reo || kind == Scheme::Kind::rem_reo;
}

namespace {

constexpr double kInterceptY1 = 5.0;

GeneratedPopulation generate_impl(const SimConfig& cfg, double sigma2_eps,
                                  RngStream& rng, bool nonlinear) {
  if (cfg.p < 1 || cfg.n < 4)
    throw Error(ErrorCode::invalid_argument, "need p >= 1 and n >= 4");
  if (!(cfg.rho >= 0.0) || !(cfg.rho < 1.0))
    throw Error(ErrorCode::invalid_argument, "covariate correlation must lie in [0, 1)");
  if (!(sigma2_eps >= 0.0))
    throw Error(ErrorCode::invalid_argument, "noise variance must be nonnegative");

  const int n = cfg.n;
  const int p = cfg.p;
  const double sd_shared = std::sqrt(cfg.rho);
  const double sd_own = std::sqrt(1.0 - cfg.rho);

  RowMatrixXd x(n, p);
  for (int i = 0; i < n; ++i) {
    const double shared = sd_shared > 0.0 ? sd_shared * rng.normal() : 0.0;
    for (int j = 0; j < p; ++j) x(i, j) = sd_own * rng.normal() + shared;
  }

  const double sd_beta = std::sqrt(2.0 * cfg.sigma2_beta);
  Eigen::VectorXd beta1(p), beta0(p);
  for (int j = 0; j < p; ++j) beta1[j] = 2.0 + sd_beta * rng.normal();
  for (int j = 0; j < p; ++j) beta0[j] = 1.0 + sd_beta * rng.normal();

  // noise drawn last so the same stream yields the same X and slopes for
  // every candidate noise level during tuning
  const double sd_eps = std::sqrt(sigma2_eps);
  Eigen::VectorXd y1(n), y0(n);
  for (int i = 0; i < n; ++i) {
    double f1, f0;
    if (nonlinear) {
      const Eigen::ArrayXd features = x.row(i).transpose().array().exp();
      f1 = (features * beta1.array()).sum();
      f0 = (features * beta0.array()).sum();
    } else {
      f1 = x.row(i) * beta1;
      f0 = x.row(i) * beta0;
    }
    y1[i] = kInterceptY1 + f1 + sd_eps * rng.normal();
    y0[i] = f0 + sd_eps * rng.normal();
  }

  const int n_treated = n / 2;
  GeneratedPopulation out{
      Population(std::move(x), std::move(y1), std::move(y0), n_treated, n - n_treated),
      0.5 * (beta0 + beta1), 0.0, sigma2_eps};
  out.realized_r2 =
      squared_multiple_correlation(v_matrix(finite_population_moments(out.population)));
  return out;
}

}  // namespace

GeneratedPopulation gen_linear_population(const SimConfig& cfg, double sigma2_eps,
                                          RngStream& rng) {
  return generate_impl(cfg, sigma2_eps, rng, false);
}

GeneratedPopulation gen_nonlinear_population(const SimConfig& cfg, double sigma2_eps,
                                             RngStream& rng) {
  return generate_impl(cfg, sigma2_eps, rng, true);
}

GeneratedPopulation generate_population(const SimConfig& cfg, double sigma2_eps,
                                        RngStream& rng) {
  return generate_impl(cfg, sigma2_eps, rng, cfg.model == OutcomeModel::nonlinear);
}

double tune_noise_for_r2(const SimConfig& cfg, double target_r2, RngStream& rng) {
  if (!(target_r2 > 0.0) || !(target_r2 < 1.0))
    throw Error(ErrorCode::invalid_argument, "target R^2 must lie in (0, 1)");

  constexpr int kProbes = 50;
  const RngStream base = rng.child(0x7a6e);
  const auto mean_r2 = [&](double sigma2_eps) {
    double total = 0.0;
    for (int i = 0; i < kProbes; ++i) {
      RngStream probe = base.child(static_cast<std::uint64_t>(i));
      total += generate_population(cfg, sigma2_eps, probe).realized_r2;
    }
    return total / kProbes;
  };

  if (mean_r2(0.0) < target_r2 - 0.02)
    throw Error(ErrorCode::tuning_failure,
                "target R^2 is above the noiseless ceiling of this configuration");

  double lo = 0.0, hi = 1.0;
  while (mean_r2(hi) > target_r2 && hi < 1e12) hi *= 4.0;
  if (hi >= 1e12)
    throw Error(ErrorCode::tuning_failure, "could not bracket the target R^2");

  double mid = hi;
  for (int iter = 0; iter < 60; ++iter) {
    mid = 0.5 * (lo + hi);
    const double value = mean_r2(mid);
    if (std::fabs(value - target_r2) <= 0.005) return mid;
    if (value > target_r2)
      lo = mid;
    else
      hi = mid;
  }
  const double final_value = mean_r2(mid);
  if (std::fabs(final_value - target_r2) > 0.02)
    throw Error(ErrorCode::tuning_failure, "noise bisection did not reach the target R^2");
  return mid;
}

Eigen::VectorXd draw_surface_beta(int n_coefficients, RngStream& rng) {
  if (n_coefficients < 1)
    throw Error(ErrorCode::invalid_argument, "need at least one coefficient");
  static constexpr double kCdf[5] = {0.5, 0.7, 0.85, 0.95, 1.0};
  Eigen::VectorXd beta(n_coefficients);
  for (int i = 0; i < n_coefficients; ++i) {
    const double u = rng.uniform01();
    int value = 0;
    while (value < 4 && u >= kCdf[value]) ++value;
    beta[i] = static_cast<double>(value);
  }
  return beta;
}

Population gen_response_surface(const RowMatrixXd& covariates,
                                const Eigen::VectorXd& beta_with_intercept,
                                RngStream& rng, double effect, double noise_variance) {
  const int n = static_cast<int>(covariates.rows());
  const int p = static_cast<int>(covariates.cols());
  if (beta_with_intercept.size() != p + 1)
    throw Error(ErrorCode::shape_mismatch,
                "surface coefficients must have one entry per covariate plus an intercept");
  if (!(noise_variance >= 0.0))
    throw Error(ErrorCode::invalid_argument, "noise variance must be nonnegative");

  const double sd = std::sqrt(noise_variance);
  Eigen::VectorXd y1(n), y0(n);
  for (int i = 0; i < n; ++i) {
    const double surface =
        beta_with_intercept[0] + covariates.row(i) * beta_with_intercept.tail(p);
    y0[i] = surface + sd * rng.normal();
    y1[i] = surface + effect + sd * rng.normal();
  }
  const int n_treated = n / 2;
  return Population(covariates, std::move(y1), std::move(y0), n_treated, n - n_treated);
}

namespace {

double sample_variance(const std::vector<double>& values) {
  const double n = static_cast<double>(values.size());
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / (n - 1.0);
}

double sample_mean(const std::vector<double>& values) {
  double mean = 0.0;
  for (double v : values) mean += v;
  return mean / static_cast<double>(values.size());
}

BalanceCriterion build_scheme_criterion(const Population& pop, const Scheme& scheme) {
  const DesignMoments dm = design_moments(pop);
  CriterionParams params;
  CriterionKind kind;
  switch (scheme.kind) {
    case Scheme::Kind::rem:
      kind = CriterionKind::rem;
      break;
    case Scheme::Kind::reo: {
      kind = CriterionKind::reo;
      if (scheme.beta)
        params.beta = *scheme.beta;
      else
        params.beta = projection_beta(v_matrix(finite_population_moments(pop)));
      break;
    }
    case Scheme::Kind::reb: {
      kind = CriterionKind::reb;
      if (!scheme.prior)
        throw Error(ErrorCode::invalid_argument, "reb scheme needs a prior");
      params.prior = *scheme.prior;
      break;
    }
    case Scheme::Kind::ridge_rem:
      kind = CriterionKind::ridge_rem;
      params.ridge_lambda = scheme.ridge_lambda;
      break;
    case Scheme::Kind::pca_rem:
      kind = CriterionKind::pca_rem;
      params.pca_components = scheme.pca_components;
      params.pca_variance_fraction = scheme.pca_variance_fraction;
      break;
    default:
      throw Error(ErrorCode::invalid_argument, "not a single-stage scheme");
  }
  return build_criterion(kind, params, dm, scheme.alpha, scheme.mc);
}

TwoStageConfig two_stage_config(const Scheme& scheme) {
  TwoStageConfig config;
  config.rho = scheme.rho;
  config.alpha_stage1 = scheme.alpha_stage1;
  config.alpha_stage2 = scheme.alpha;
  config.max_draws = scheme.max_draws;
  config.mc = scheme.mc;
  switch (scheme.kind) {
    case Scheme::Kind::bcrd_reb:
      config.stage1_kind = Stage1Kind::bcrd;
      config.prior_mode = PriorMode::full;
      break;
    case Scheme::Kind::rem_reb:
      config.stage1_kind = Stage1Kind::rem;
      config.prior_mode = PriorMode::full;
      break;
    case Scheme::Kind::bcrd_reo:
      config.stage1_kind = Stage1Kind::bcrd;
      config.prior_mode = PriorMode::point_mass;
      break;
    case Scheme::Kind::rem_reo:
      config.stage1_kind = Stage1Kind::rem;
      config.prior_mode = PriorMode::point_mass;
      break;
    default:
      throw Error(ErrorCode::invalid_argument, "not a two-stage scheme");
  }
  return config;
}

}  // namespace

PrivResult estimate_priv(const Population& pop, const Scheme& scheme, int n_accepted,
                         RngStream& rng) {
  if (n_accepted < 2)
    throw Error(ErrorCode::invalid_argument, "need at least 2 accepted allocations");
  if (!pop.has_outcomes())
    throw Error(ErrorCode::missing_outcomes, "PRIV estimation needs potential outcomes");

  PrivResult result;
  result.n_accepted = n_accepted;
  result.scheme = scheme_kind_name(scheme.kind);

  RngStream scheme_rng = rng.child(1);
  RngStream baseline_rng = rng.child(2);

  std::vector<double> taus;
  taus.reserve(static_cast<std::size_t>(n_accepted));

  if (scheme.kind == Scheme::Kind::bcrd) {
    for (int i = 0; i < n_accepted; ++i) {
      const Assignment a = bcrd_assignment(pop.size(), pop.n_treated(), scheme_rng);
      taus.push_back(diff_in_means_tau(pop, a));
    }
    result.realized_alpha = 1.0;
    result.mean_draws_per_accept = 1.0;
  } else if (scheme_is_two_stage(scheme.kind)) {
    const TwoStageConfig config = two_stage_config(scheme);
    SamplerStats stage2;
    long long draws_total = 0;
    for (int i = 0; i < n_accepted; ++i) {
      RngStream run_rng = scheme_rng.child(static_cast<std::uint64_t>(i));
      const TwoStageResult run = run_two_stage(pop, config, run_rng);
      taus.push_back(run.tau_hat);
      stage2 += run.stats2;
      draws_total += run.stats1.draws_total + run.stats2.draws_total;
    }
    result.realized_alpha = stage2.realized_rate();
    result.mean_draws_per_accept =
        static_cast<double>(draws_total) / static_cast<double>(n_accepted);
  } else {
    const BalanceCriterion criterion = build_scheme_criterion(pop, scheme);
    SamplerStats stats;
    for (int i = 0; i < n_accepted; ++i) {
      const RerandomizeResult one =
          rerandomize(pop, criterion, scheme_rng, scheme.max_draws);
      taus.push_back(diff_in_means_tau(pop, one.assignment));
      stats += one.stats;
    }
    result.realized_alpha = stats.realized_rate();
    result.mean_draws_per_accept = stats.draws_per_accept();
  }

  std::vector<double> taus_bcrd;
  taus_bcrd.reserve(static_cast<std::size_t>(n_accepted));
  for (int i = 0; i < n_accepted; ++i) {
    const Assignment a = bcrd_assignment(pop.size(), pop.n_treated(), baseline_rng);
    taus_bcrd.push_back(diff_in_means_tau(pop, a));
  }

  result.var_scheme = sample_variance(taus);
  result.var_bcrd = sample_variance(taus_bcrd);
  if (!(result.var_bcrd > 0.0))
    throw Error(ErrorCode::undefined_quantity, "baseline variance is zero");
  result.priv = 100.0 * (1.0 - result.var_scheme / result.var_bcrd);
  result.mean_tau = sample_mean(taus);
  return result;
}

namespace {

void parallel_for(int n_items, int n_threads, const std::function<void(int)>& body) {
  n_threads = std::max(1, std::min(n_threads, n_items));
  if (n_threads == 1) {
    for (int i = 0; i < n_items; ++i) body(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> failures(static_cast<std::size_t>(n_threads));
  std::vector<std::thread> threads;
  threads.reserve(static_cast<std::size_t>(n_threads));
  for (int t = 0; t < n_threads; ++t) {
    threads.emplace_back([&, t] {
      try {
        for (;;) {
          const int i = next.fetch_add(1);
          if (i >= n_items) break;
          body(i);
        }
      } catch (...) {
        failures[static_cast<std::size_t>(t)] = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  for (const auto& failure : failures)
    if (failure) std::rethrow_exception(failure);
}

std::vector<Scheme> resolved_schemes(const SimConfig& cell) {
  std::vector<Scheme> schemes = cell.schemes;
  if (schemes.empty()) {
    for (Scheme::Kind kind :
         {Scheme::Kind::rem, Scheme::Kind::reo, Scheme::Kind::reb}) {
      Scheme s;
      s.kind = kind;
      s.alpha = cell.alpha;
      schemes.push_back(s);
    }
  }
  for (Scheme& s : schemes) {
    if (s.kind == Scheme::Kind::reb && !s.prior) {
      // oracle prior of the generating process
      PriorSpec prior;
      prior.mu = Eigen::VectorXd::Constant(cell.p, 1.5);
      prior.sigma = cell.sigma2_beta * Eigen::MatrixXd::Identity(cell.p, cell.p);
      s.prior = prior;
    }
  }
  return schemes;
}

}  // namespace

std::vector<GridRow> run_grid(const std::vector<SimConfig>& cells,
                              std::uint64_t master_seed, int n_threads) {
  struct DatasetOutcome {
    std::vector<PrivResult> per_scheme;
    double realized_r2 = 0;
    bool failed = false;
  };

  std::vector<GridRow> rows;
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const SimConfig& cell = cells[ci];
    const std::vector<Scheme> schemes = resolved_schemes(cell);

    RngStream tune_rng(master_seed, stream_key({ci, 0xa0u}));
    const double sigma2_eps = tune_noise_for_r2(cell, cell.target_r2, tune_rng);

    std::vector<DatasetOutcome> outcomes(static_cast<std::size_t>(cell.n_datasets));
    parallel_for(cell.n_datasets, n_threads, [&](int d) {
      DatasetOutcome& outcome = outcomes[static_cast<std::size_t>(d)];
      try {
        RngStream gen_rng(master_seed,
                          stream_key({ci, static_cast<std::uint64_t>(d), 1}));
        const GeneratedPopulation gen = generate_population(cell, sigma2_eps, gen_rng);
        outcome.realized_r2 = gen.realized_r2;
        for (std::size_t si = 0; si < schemes.size(); ++si) {
          RngStream priv_rng(master_seed,
                             stream_key({ci, static_cast<std::uint64_t>(d), 2 + si}));
          PrivResult priv =
              estimate_priv(gen.population, schemes[si], cell.n_accepted, priv_rng);
          priv.dataset_id = d;
          outcome.per_scheme.push_back(std::move(priv));
        }
      } catch (const Error&) {
        outcome.failed = true;
      }
    });

    for (std::size_t si = 0; si < schemes.size(); ++si) {
      GridRow row;
      row.cell = cell;
      row.scheme = scheme_kind_name(schemes[si].kind);
      row.sigma2_eps = sigma2_eps;
      std::vector<double> privs;
      double alpha_sum = 0, draws_sum = 0, r2_sum = 0;
      for (const DatasetOutcome& outcome : outcomes) {
        if (outcome.failed) {
          ++row.n_failed;
          continue;
        }
        const PrivResult& pr = outcome.per_scheme[si];
        privs.push_back(pr.priv);
        alpha_sum += pr.realized_alpha;
        draws_sum += pr.mean_draws_per_accept;
        r2_sum += outcome.realized_r2;
      }
      if (!privs.empty()) {
        row.mean_priv = sample_mean(privs);
        row.sd_priv = privs.size() > 1 ? std::sqrt(sample_variance(privs)) : 0.0;
        row.realized_alpha = alpha_sum / static_cast<double>(privs.size());
        row.mean_draws_per_accept = draws_sum / static_cast<double>(privs.size());
        row.mean_realized_r2 = r2_sum / static_cast<double>(privs.size());
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

void write_grid_csv(std::ostream& out, const std::vector<GridRow>& rows) {
  out << "p,rho,sigma2_beta,target_r2,n,model,n_datasets,n_accepted,sigma2_eps,"
         "scheme,alpha,mean_priv,sd_priv,realized_alpha,mean_draws_per_accept,"
         "mean_realized_r2,n_failed\n";
  out.precision(10);
  for (const GridRow& row : rows) {
    out << row.cell.p << ',' << row.cell.rho << ',' << row.cell.sigma2_beta << ','
        << row.cell.target_r2 << ',' << row.cell.n << ','
        << (row.cell.model == OutcomeModel::linear ? "linear" : "nonlinear") << ','
        << row.cell.n_datasets << ',' << row.cell.n_accepted << ',' << row.sigma2_eps
        << ',' << row.scheme << ',' << row.cell.alpha << ',' << row.mean_priv << ','
        << row.sd_priv << ',' << row.realized_alpha << ','
        << row.mean_draws_per_accept << ',' << row.mean_realized_r2 << ','
        << row.n_failed << '\n';
  }
}

}  // namespace rerand
