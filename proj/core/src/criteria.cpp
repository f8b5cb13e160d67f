#include "rerand/criteria.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <vector>

#include "rerand/errors.hpp"
#include "rerand/math.hpp"
#include "rerand/rng.hpp"

namespace rerand {

const char* criterion_kind_name(CriterionKind kind) {
  switch (kind) {
    case CriterionKind::rem: return "rem";
    case CriterionKind::reo: return "reo";
    case CriterionKind::reb: return "reb";
    case CriterionKind::ridge_rem: return "ridge-rem";
    case CriterionKind::pca_rem: return "pca-rem";
  }
  return "unknown";
}

CriterionKind criterion_kind_from_name(const std::string& name) {
  if (name == "rem") return CriterionKind::rem;
  if (name == "reo") return CriterionKind::reo;
  if (name == "reb") return CriterionKind::reb;
  if (name == "ridge-rem" || name == "ridge") return CriterionKind::ridge_rem;
  if (name == "pca-rem" || name == "pca") return CriterionKind::pca_rem;
  throw Error(ErrorCode::invalid_argument, "unknown criterion kind: " + name);
}

Eigen::MatrixXd characteristic_matrix(const PriorSpec& prior) {
  const auto p = prior.mu.size();
  if (prior.sigma.rows() != p || prior.sigma.cols() != p)
    throw Error(ErrorCode::shape_mismatch, "prior mean and covariance disagree on dimension");
  if (!prior.sigma.isApprox(prior.sigma.transpose(), 1e-10))
    throw Error(ErrorCode::invalid_argument, "prior covariance must be symmetric");
  Eigen::MatrixXd lambda = prior.mu * prior.mu.transpose() + prior.sigma;
  const double scale = lambda.cwiseAbs().maxCoeff();
  if (!(scale > 0.0))
    throw Error(ErrorCode::degenerate_prior,
                "prior has zero mean and zero covariance; characteristic matrix vanishes");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lambda, Eigen::EigenvaluesOnly);
  if (es.eigenvalues().minCoeff() < -1e-8 * scale)
    throw Error(ErrorCode::invalid_argument,
                "prior covariance is not positive semidefinite");
  return lambda;
}

int EigenSpectrum::positive_count() const {
  int count = 0;
  for (Eigen::Index i = 0; i < lambdas.size(); ++i) count += (lambdas[i] > 0.0);
  return count;
}

DesignMoments design_moments(const Population& pop) {
  const Moments m = finite_population_moments(pop);
  return DesignMoments{m.s2_x, pop.size(), m.r0, m.r1};
}

Eigen::MatrixXd design_v_xx(const DesignMoments& dm) {
  if (!(dm.r0 > 0.0) || !(dm.r1 > 0.0))
    throw Error(ErrorCode::invalid_argument, "group proportions must both be positive");
  return dm.s2_x / (dm.r0 * dm.r1);
}

Eigen::MatrixXd design_sigma_d(const DesignMoments& dm) {
  return design_v_xx(dm) / static_cast<double>(dm.n);
}

Eigen::MatrixXd invert_spd(const Eigen::MatrixXd& a) {
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success)
    throw SingularCovarianceError("matrix is not positive definite", 0.0);
  const double rcond = llt.rcond();
  if (rcond < 1e-12)
    throw SingularCovarianceError("matrix is numerically singular", rcond);
  return llt.solve(Eigen::MatrixXd::Identity(a.rows(), a.cols()));
}

Eigen::MatrixXd prior_from_named(CriterionKind kind, const CriterionParams& params,
                                 const Eigen::MatrixXd& sigma_d,
                                 const Eigen::MatrixXd& s2_x, int n) {
  const Eigen::Index p = sigma_d.rows();
  switch (kind) {
    case CriterionKind::reo: {
      if (!params.beta || params.beta->size() != p)
        throw Error(ErrorCode::invalid_argument, "reo needs a projection vector of length p");
      return characteristic_matrix(
          PriorSpec{*params.beta, Eigen::MatrixXd::Zero(p, p)});
    }
    case CriterionKind::rem: {
      try {
        return invert_spd(static_cast<double>(n) * sigma_d);
      } catch (const SingularCovarianceError& e) {
        throw SingularCovarianceError(
            "covariate covariance is singular; rem is undefined (consider ridge-rem)",
            e.rcond());
      }
    }
    case CriterionKind::ridge_rem: {
      if (!params.ridge_lambda || !(*params.ridge_lambda > 0.0))
        throw Error(ErrorCode::invalid_argument, "ridge-rem needs ridge_lambda > 0");
      const Eigen::MatrixXd shifted =
          sigma_d + *params.ridge_lambda * Eigen::MatrixXd::Identity(p, p);
      return invert_spd(shifted) / static_cast<double>(n);
    }
    case CriterionKind::pca_rem: {
      // N Sigma_D shares the principal basis of S2_X (it is S2_X / (r0 r1)),
      // so the top-k subspace and the generalized inverse both come from one
      // eigendecomposition of N Sigma_D.
      const Eigen::MatrixXd n_sigma_d = static_cast<double>(n) * sigma_d;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(n_sigma_d);
      if (es.info() != Eigen::Success)
        throw Error(ErrorCode::not_positive_definite,
                    "eigendecomposition of the covariate covariance failed");
      const Eigen::VectorXd& evals = es.eigenvalues();  // ascending
      const double total = evals.sum();
      const int dim = static_cast<int>(p);
      int k = 0;
      if (params.pca_components) {
        k = *params.pca_components;
        if (k < 1 || k > dim)
          throw Error(ErrorCode::invalid_argument, "pca components must lie in [1, p]");
      } else if (params.pca_variance_fraction) {
        const double frac = *params.pca_variance_fraction;
        if (!(frac > 0.0) || frac > 1.0)
          throw Error(ErrorCode::invalid_argument, "pca variance fraction must lie in (0, 1]");
        if (!(total > 0.0))
          throw Error(ErrorCode::degenerate_population, "covariates are constant");
        double captured = 0.0;
        for (k = 0; k < dim && captured < frac * total - 1e-14 * total; ++k)
          captured += evals[dim - 1 - k];
      } else {
        throw Error(ErrorCode::invalid_argument,
                    "pca-rem needs a component count or a variance fraction");
      }
      const double eig_floor = 1e-12 * std::max(evals.cwiseAbs().maxCoeff(), 1e-300);
      Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(p, p);
      for (int j = 0; j < k; ++j) {
        const double eig = evals[dim - 1 - j];
        if (eig <= eig_floor)
          throw SingularCovarianceError(
              "requested principal component has (numerically) zero variance", 0.0);
        const Eigen::VectorXd u = es.eigenvectors().col(dim - 1 - j);
        lambda.noalias() += (u * u.transpose()) / eig;
      }
      return lambda;
    }
    case CriterionKind::reb: {
      if (!params.prior)
        throw Error(ErrorCode::invalid_argument, "reb needs a prior specification");
      if (params.prior->mu.size() != p)
        throw Error(ErrorCode::shape_mismatch, "prior dimension does not match design");
      return characteristic_matrix(*params.prior);
    }
  }
  throw Error(ErrorCode::invalid_argument, "unknown criterion kind");
}

double mahalanobis_distance(const Eigen::VectorXd& d, const Eigen::MatrixXd& sigma_d) {
  if (d.size() != sigma_d.rows())
    throw Error(ErrorCode::shape_mismatch, "difference vector does not match Sigma_D");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma_d);
  if (llt.info() != Eigen::Success)
    throw SingularCovarianceError("Sigma_D is not positive definite", 0.0);
  const double rcond = llt.rcond();
  if (rcond < 1e-12)
    throw SingularCovarianceError("Sigma_D is numerically singular", rcond);
  return d.dot(llt.solve(d));
}

double prior_distance(const Eigen::VectorXd& d, const Eigen::MatrixXd& lambda_matrix,
                      int n) {
  if (d.size() != lambda_matrix.rows())
    throw Error(ErrorCode::shape_mismatch, "difference vector does not match Lambda");
  return static_cast<double>(n) * d.dot(lambda_matrix * d);
}

EigenSpectrum weighted_chisq_eigenvalues(const Eigen::MatrixXd& v_xx,
                                         const Eigen::MatrixXd& lambda_matrix) {
  if (v_xx.rows() != lambda_matrix.rows())
    throw Error(ErrorCode::shape_mismatch, "V_xx and Lambda disagree on dimension");
  Eigen::LLT<Eigen::MatrixXd> llt(v_xx);
  if (llt.info() != Eigen::Success)
    throw Error(ErrorCode::not_positive_definite, "V_xx has no Cholesky factor");
  const Eigen::MatrixXd l = llt.matrixL();
  const Eigen::MatrixXd p_matrix = l.transpose() * lambda_matrix * l;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p_matrix, Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success)
    throw Error(ErrorCode::not_positive_definite, "eigendecomposition failed");

  Eigen::VectorXd lambdas = es.eigenvalues().reverse();
  const double max_lambda = lambdas.size() ? lambdas[0] : 0.0;
  if (lambdas.size() && lambdas[lambdas.size() - 1] < -1e-8 * std::max(max_lambda, 1.0))
    throw Error(ErrorCode::invalid_argument, "Lambda is not positive semidefinite");
  for (Eigen::Index i = 0; i < lambdas.size(); ++i)
    if (lambdas[i] <= 1e-10 * max_lambda) lambdas[i] = 0.0;
  return EigenSpectrum{lambdas};
}

ThresholdSpec weighted_chisq_quantile(const EigenSpectrum& spectrum, double alpha,
                                      int mc_draws, std::uint64_t seed) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw Error(ErrorCode::invalid_argument, "alpha must lie in (0, 1)");
  const Eigen::VectorXd& lambdas = spectrum.lambdas;
  const int m = spectrum.positive_count();
  if (m == 0)
    throw Error(ErrorCode::degenerate_prior, "weighted chi-square has an all-zero spectrum");

  ThresholdSpec spec;
  if (m == 1) {
    spec.method = ThresholdMethod::analytic_chisq;
    spec.xi = lambdas[0] * chisq_quantile(1.0, alpha);
    return spec;
  }

  if (mc_draws < 1000)
    throw Error(ErrorCode::invalid_argument, "weighted quantile needs at least 1000 draws");
  const int p = static_cast<int>(lambdas.size());
  std::vector<double> stats(static_cast<std::size_t>(mc_draws));
  RngStream rng(seed, 0);
  for (int i = 0; i < mc_draws; ++i) {
    double s = 0.0;
    for (int j = 0; j < p; ++j) {
      if (lambdas[j] == 0.0) continue;  // clamped dimensions draw nothing
      const double z = rng.normal();
      s += lambdas[j] * z * z;
    }
    stats[static_cast<std::size_t>(i)] = s;
  }
  std::sort(stats.begin(), stats.end());

  const auto order_stat = [&](double prob) {
    long long k = static_cast<long long>(std::ceil(prob * mc_draws));
    k = std::clamp<long long>(k, 1, mc_draws);
    return stats[static_cast<std::size_t>(k - 1)];
  };

  spec.method = ThresholdMethod::weighted_chisq_mc;
  spec.mc_draws = mc_draws;
  spec.mc_seed = seed;
  spec.xi = order_stat(alpha);

  // asymptotic order-statistic error: sqrt(a(1-a)/n) / f(xi), with the
  // density estimated by a central difference of the quantile function
  const double h = 0.5 * std::min(alpha, 1.0 - alpha);
  const double width = order_stat(alpha + h) - order_stat(alpha - h);
  if (width > 0.0)
    spec.mc_stderr =
        std::sqrt(alpha * (1.0 - alpha) / mc_draws) * width / (2.0 * h);
  return spec;
}

namespace {

// equal positive eigenvalues, within the clamping tolerance
bool spectrum_is_equal_weights(const EigenSpectrum& spectrum, int m) {
  const double max_lambda = spectrum.lambdas[0];
  const double min_positive = spectrum.lambdas[m - 1];
  return (max_lambda - min_positive) <= 1e-9 * max_lambda;
}

}  // namespace

BalanceCriterion build_criterion(CriterionKind kind, const CriterionParams& params,
                                 const DesignMoments& dm, double alpha,
                                 const McConfig& mc) {
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw Error(ErrorCode::invalid_argument, "alpha must lie in (0, 1)");

  BalanceCriterion criterion;
  criterion.kind = kind;
  criterion.alpha = alpha;
  criterion.n = dm.n;
  criterion.lambda_matrix =
      prior_from_named(kind, params, design_sigma_d(dm), dm.s2_x, dm.n);
  criterion.spectrum = weighted_chisq_eigenvalues(design_v_xx(dm), criterion.lambda_matrix);

  const int m = criterion.spectrum.positive_count();
  if (m == 0)
    throw Error(ErrorCode::degenerate_prior, "criterion spectrum is identically zero");

  if (m == 1) {
    criterion.threshold_spec.method = ThresholdMethod::analytic_chisq;
    criterion.threshold_spec.xi = criterion.spectrum.lambdas[0] * chisq_quantile(1.0, alpha);
  } else if (spectrum_is_equal_weights(criterion.spectrum, m)) {
    // equal weights collapse to a scaled chi^2_m; taking this branch keeps
    // rem / full-rank pca decisions exactly equal to the matching reb build
    const double mean_lambda = criterion.spectrum.lambdas.head(m).mean();
    criterion.threshold_spec.method = ThresholdMethod::analytic_chisq;
    criterion.threshold_spec.xi = mean_lambda * chisq_quantile(static_cast<double>(m), alpha);
  } else {
    criterion.threshold_spec =
        weighted_chisq_quantile(criterion.spectrum, alpha, mc.draws, mc.seed);
  }
  criterion.threshold = criterion.threshold_spec.xi;
  return criterion;
}

double criterion_distance(const BalanceCriterion& criterion, const Eigen::VectorXd& d) {
  if (d.size() != criterion.lambda_matrix.rows())
    throw Error(ErrorCode::shape_mismatch,
                "difference vector does not match the criterion dimension");
  return prior_distance(d, criterion.lambda_matrix, criterion.n);
}

bool accept(const BalanceCriterion& criterion, const Eigen::VectorXd& d) {
  return criterion_distance(criterion, d) <= criterion.threshold;
}

}  // namespace rerand
