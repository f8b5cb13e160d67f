#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>

#include "rerand/population.hpp"

namespace rerand {

// Every supported balance criterion is the quadratic-form rule
//     accept(D)  <=>  N * D' Lambda D <= threshold,
// with Lambda the second moment ("characteristic matrix") of a prior over the
// covariate-importance vector. The classic criteria are specific priors:
//
//   ReO        Lambda = beta beta'
//   ReM        Lambda = (N Sigma_D)^-1
//   Ridge-ReM  Lambda = N^-1 (Sigma_D + lambda I)^-1
//   PCA-ReM    Lambda = (N Sigma_D^(k))^-1  (generalized inverse on the
//                                            top-k principal subspace)
//
// Building them all through the same representation makes the special-case
// equivalences exact at the decision level, not just in distribution.
enum class CriterionKind { rem, reo, reb, ridge_rem, pca_rem };

const char* criterion_kind_name(CriterionKind kind);
CriterionKind criterion_kind_from_name(const std::string& name);

// First two moments of the prior over the importance vector.
struct PriorSpec {
  Eigen::VectorXd mu;
  Eigen::MatrixXd sigma;
};

// mu mu' + Sigma; symmetric PSD, rejected when identically zero
Eigen::MatrixXd characteristic_matrix(const PriorSpec& prior);

// Eigenvalues of P = (V_xx^{1/2})' Lambda V_xx^{1/2}, descending, with
// entries below 1e-10 * max clamped to zero.
struct EigenSpectrum {
  Eigen::VectorXd lambdas;
  int positive_count() const;
};

enum class ThresholdMethod { analytic_chisq, weighted_chisq_mc };

struct ThresholdSpec {
  double xi = 0;
  ThresholdMethod method = ThresholdMethod::analytic_chisq;
  int mc_draws = 0;
  std::uint64_t mc_seed = 0;
  double mc_stderr = 0;
};

struct McConfig {
  int draws = 1000000;
  std::uint64_t seed = 0x5eedc0de2024ull;
};

struct BalanceCriterion {
  CriterionKind kind = CriterionKind::reb;
  Eigen::MatrixXd lambda_matrix;
  double threshold = 0;
  double alpha = 0;
  int n = 0;  // sample size in the sqrt(N) scaling
  EigenSpectrum spectrum;
  ThresholdSpec threshold_spec;
};

struct CriterionParams {
  std::optional<Eigen::VectorXd> beta;               // reo
  std::optional<PriorSpec> prior;                    // reb
  std::optional<double> ridge_lambda;                // ridge_rem, > 0
  std::optional<int> pca_components;                 // pca_rem: k in [1, p]
  std::optional<double> pca_variance_fraction;       // pca_rem: (0, 1]
};

// Design-phase covariate moments, all a criterion build needs from the data.
struct DesignMoments {
  Eigen::MatrixXd s2_x;
  int n = 0;
  double r0 = 0;
  double r1 = 0;
};

DesignMoments design_moments(const Population& pop);
Eigen::MatrixXd design_sigma_d(const DesignMoments& dm);  // S2_X / (N r0 r1)
Eigen::MatrixXd design_v_xx(const DesignMoments& dm);     // S2_X / (r0 r1)

// SPD inverse through Cholesky; throws singular-covariance (with the rcond
// estimate) below rcond 1e-12. Shared by every Lambda construction so equal
// inputs give bitwise-equal matrices.
Eigen::MatrixXd invert_spd(const Eigen::MatrixXd& a);

// The Lambda matrix of the named criterion rows above.
Eigen::MatrixXd prior_from_named(CriterionKind kind, const CriterionParams& params,
                                 const Eigen::MatrixXd& sigma_d,
                                 const Eigen::MatrixXd& s2_x, int n);

// D' Sigma_D^-1 D
double mahalanobis_distance(const Eigen::VectorXd& d, const Eigen::MatrixXd& sigma_d);

// d_pi = N * D' Lambda D
double prior_distance(const Eigen::VectorXd& d, const Eigen::MatrixXd& lambda_matrix,
                      int n);

EigenSpectrum weighted_chisq_eigenvalues(const Eigen::MatrixXd& v_xx,
                                         const Eigen::MatrixXd& lambda_matrix);

// alpha-quantile of sum_j lambda_j Z_j^2. Rank-1 spectra are handled in
// closed form; otherwise a seeded Monte Carlo quantile with an
// order-statistic standard error estimate.
ThresholdSpec weighted_chisq_quantile(const EigenSpectrum& spectrum, double alpha,
                                      int mc_draws, std::uint64_t seed);

BalanceCriterion build_criterion(CriterionKind kind, const CriterionParams& params,
                                 const DesignMoments& dm, double alpha,
                                 const McConfig& mc = McConfig{});

double criterion_distance(const BalanceCriterion& criterion, const Eigen::VectorXd& d);

// distance <= threshold; ties accept
bool accept(const BalanceCriterion& criterion, const Eigen::VectorXd& d);

}  // namespace rerand
