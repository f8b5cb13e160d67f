#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rerand/criteria.hpp"
#include "rerand/population.hpp"
#include "rerand/rng.hpp"
#include "rerand/twostage.hpp"

namespace rerand {

enum class OutcomeModel { linear, nonlinear };

// A randomization scheme the harness can score: balanced complete
// randomization, one of the single-stage criteria, or a pilot-then-ReB
// pipeline. reo defaults to the dataset's realized projection vector; reb
// needs a prior (the grid runner fills in the oracle prior of the cell).
struct Scheme {
  enum class Kind {
    bcrd,
    rem,
    reo,
    reb,
    ridge_rem,
    pca_rem,
    bcrd_reb,
    rem_reb,
    bcrd_reo,
    rem_reo,
  };

  Kind kind = Kind::rem;
  double alpha = 0.05;
  double alpha_stage1 = 0.05;  // two-stage rem pilot
  double rho = 0.2;            // two-stage stage-1 fraction
  std::optional<double> ridge_lambda;
  std::optional<int> pca_components;
  std::optional<double> pca_variance_fraction;
  std::optional<PriorSpec> prior;         // reb
  std::optional<Eigen::VectorXd> beta;    // reo override
  McConfig mc;
  long long max_draws = 10'000'000;
};

const char* scheme_kind_name(Scheme::Kind kind);
Scheme::Kind scheme_kind_from_name(const std::string& name);
bool scheme_is_two_stage(Scheme::Kind kind);

struct SimConfig {
  int p = 10;
  double rho = 0.0;           // equicorrelation of the covariates
  double sigma2_beta = 1.0;
  double target_r2 = 0.5;
  int n = 200;
  OutcomeModel model = OutcomeModel::linear;
  int n_datasets = 100;
  int n_accepted = 1000;
  double alpha = 0.05;
  std::vector<Scheme> schemes;
};

struct GeneratedPopulation {
  Population population;
  Eigen::VectorXd beta_true;  // generating slopes, 0.5 * (beta0 + beta1)
  double realized_r2 = 0;
  double sigma2_eps = 0;
};

// Y(1) = 5 + beta1'X + eps1, Y(0) = beta0'X + eps0 with equicorrelated
// Gaussian covariates; slopes are redrawn per dataset around (2, 1) * 1_p.
GeneratedPopulation gen_linear_population(const SimConfig& cfg, double sigma2_eps,
                                          RngStream& rng);

// Same slopes and noise, but the regression runs on exp(X) elementwise while
// designs keep seeing the raw covariates.
GeneratedPopulation gen_nonlinear_population(const SimConfig& cfg, double sigma2_eps,
                                             RngStream& rng);

GeneratedPopulation generate_population(const SimConfig& cfg, double sigma2_eps,
                                        RngStream& rng);

// Bisection on the noise variance until the mean realized R^2 over 50 probe
// datasets (common random numbers across iterates) is within 0.02 of target.
double tune_noise_for_r2(const SimConfig& cfg, double target_r2, RngStream& rng);

// Response-surface coefficients on {0,1,2,3,4} with probabilities
// (0.5, 0.2, 0.15, 0.1, 0.05); the first entry is the intercept coefficient.
Eigen::VectorXd draw_surface_beta(int n_coefficients, RngStream& rng);

// Potential outcomes around the linear surface: Y(0) ~ N(b0 + x'b, s2),
// Y(1) shifted by a constant effect. The returned population keeps the raw
// covariates only; the intercept lives in the surface.
Population gen_response_surface(const RowMatrixXd& covariates,
                                const Eigen::VectorXd& beta_with_intercept,
                                RngStream& rng, double effect = 4.0,
                                double noise_variance = 3.0);

struct PrivResult {
  double priv = 0;  // 100 * (1 - var_scheme / var_bcrd)
  double var_scheme = 0;
  double var_bcrd = 0;
  int n_accepted = 0;
  std::string scheme;
  int dataset_id = 0;
  double realized_alpha = 0;
  double mean_draws_per_accept = 0;
  double mean_tau = 0;
};

// Sample variance of tau_hat over n_accepted accepted allocations versus the
// same count of fresh balanced complete randomizations.
PrivResult estimate_priv(const Population& pop, const Scheme& scheme, int n_accepted,
                         RngStream& rng);

struct GridRow {
  SimConfig cell;
  std::string scheme;
  double sigma2_eps = 0;
  double mean_priv = 0;
  double sd_priv = 0;
  double realized_alpha = 0;
  double mean_draws_per_accept = 0;
  double mean_realized_r2 = 0;
  int n_failed = 0;
};

// One row per (cell, scheme); deterministic in master_seed for any thread
// count (per-item streams are derived from cell and dataset indices).
// Dataset-level failures are counted, not fatal.
std::vector<GridRow> run_grid(const std::vector<SimConfig>& cells,
                              std::uint64_t master_seed, int n_threads = 1);

void write_grid_csv(std::ostream& out, const std::vector<GridRow>& rows);

}  // namespace rerand
