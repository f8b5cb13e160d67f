#include <doctest.h>

#include <cmath>

#include "rerand/criteria.hpp"
#include "rerand/errors.hpp"
#include "rerand/math.hpp"
#include "rerand/sampler.hpp"
#include "test_util.hpp"

using namespace rerand;
using namespace rerand::test;

TEST_CASE("characteristic matrix") {
  SUBCASE("rank-one mean") {
    Eigen::VectorXd mu(2);
    mu << 1.0, 0.0;
    const Eigen::MatrixXd lambda =
        characteristic_matrix(PriorSpec{mu, Eigen::MatrixXd::Zero(2, 2)});
    Eigen::MatrixXd expected(2, 2);
    expected << 1, 0, 0, 0;
    CHECK((lambda - expected).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("pure covariance") {
    const Eigen::MatrixXd lambda = characteristic_matrix(
        PriorSpec{Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)});
    CHECK((lambda - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("outer product plus covariance") {
    Eigen::VectorXd mu(2);
    mu << 1.0, 1.0;
    const Eigen::MatrixXd lambda = characteristic_matrix(
        PriorSpec{mu, 0.25 * Eigen::MatrixXd::Identity(2, 2)});
    Eigen::MatrixXd expected(2, 2);
    expected << 1.25, 1.0, 1.0, 1.25;
    CHECK((lambda - expected).cwiseAbs().maxCoeff() <= 1e-15);
  }
  SUBCASE("degenerate prior is rejected") {
    CHECK_THROWS_AS(characteristic_matrix(
                        PriorSpec{Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Zero(2, 2)}),
                    Error);
  }
}

TEST_CASE("mahalanobis distance") {
  CHECK(mahalanobis_distance(Eigen::VectorXd::Zero(3), Eigen::MatrixXd::Identity(3, 3)) ==
        0.0);

  Eigen::VectorXd e1(2);
  e1 << 1.0, 0.0;
  CHECK(mahalanobis_distance(e1, Eigen::MatrixXd::Identity(2, 2)) == doctest::Approx(1.0));

  // hand-inverted 2x2 system
  Eigen::VectorXd d(2);
  d << 1.0, 1.0;
  Eigen::MatrixXd sigma(2, 2);
  sigma << 2.0, 1.0, 1.0, 2.0;
  CHECK(mahalanobis_distance(d, sigma) == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

  SUBCASE("affine invariance") {
    RngStream rng(101, 0);
    const int n = 60, p = 3;
    const Population pop = gaussian_design(n, p, rng);
    const DesignMoments dm = design_moments(pop);
    const Eigen::MatrixXd sd = design_sigma_d(dm);

    Eigen::MatrixXd a = random_spd(p, rng);  // nonsingular transform
    const Eigen::VectorXd shift = random_vector(p, rng);
    RowMatrixXd xt = pop.covariates() * a;
    xt.rowwise() += shift.transpose();
    const Population transformed(std::move(xt), pop.n_treated(), pop.n_control());
    const Eigen::MatrixXd sd_t = design_sigma_d(design_moments(transformed));

    RngStream draw_rng(102, 0);
    for (int rep = 0; rep < 20; ++rep) {
      const Assignment w = bcrd_assignment(n, n / 2, draw_rng);
      const double d0 = mahalanobis_distance(covariate_diff(pop, w), sd);
      const double d1 = mahalanobis_distance(covariate_diff(transformed, w), sd_t);
      CHECK(d1 == doctest::Approx(d0).epsilon(1e-8));
    }
  }
}

TEST_CASE("prior distance reproduces the classic distances") {
  RngStream rng(111, 0);
  const Population pop = gaussian_design(50, 3, rng);
  const DesignMoments dm = design_moments(pop);
  const Eigen::MatrixXd sd = design_sigma_d(dm);
  const int n = dm.n;

  CHECK(prior_distance(Eigen::VectorXd::Zero(3), random_spd(3, rng), n) == 0.0);

  const Eigen::MatrixXd lambda_rem = invert_spd(static_cast<double>(n) * sd);
  const Eigen::VectorXd beta = random_vector(3, rng);
  const Eigen::MatrixXd lambda_reo =
      characteristic_matrix(PriorSpec{beta, Eigen::MatrixXd::Zero(3, 3)});

  RngStream draw_rng(112, 0);
  for (int rep = 0; rep < 25; ++rep) {
    const Eigen::VectorXd d = covariate_diff(pop, bcrd_assignment(50, 25, draw_rng));
    CHECK(prior_distance(d, lambda_rem, n) ==
          doctest::Approx(mahalanobis_distance(d, sd)).epsilon(1e-9));
    const double proj = beta.dot(d);
    CHECK(prior_distance(d, lambda_reo, n) ==
          doctest::Approx(n * proj * proj).epsilon(1e-12));
  }
}

TEST_CASE("weighted chi-square spectrum") {
  RngStream rng(121, 0);
  SUBCASE("inverse covariance flattens to ones") {
    const Eigen::MatrixXd v_xx = random_spd(4, rng);
    const EigenSpectrum s = weighted_chisq_eigenvalues(v_xx, invert_spd(v_xx));
    for (int i = 0; i < 4; ++i) CHECK(s.lambdas[i] == doctest::Approx(1.0).epsilon(1e-10));
  }
  SUBCASE("rank-one prior leaves one eigenvalue, the quadratic form") {
    const Eigen::MatrixXd v_xx = random_spd(4, rng);
    const Eigen::VectorXd beta = random_vector(4, rng);
    const EigenSpectrum s = weighted_chisq_eigenvalues(v_xx, beta * beta.transpose());
    CHECK(s.positive_count() == 1);
    CHECK(s.lambdas[0] == doctest::Approx(beta.dot(v_xx * beta)).epsilon(1e-10));
    CHECK(s.lambdas[1] == 0.0);
  }
  SUBCASE("identity covariance keeps the prior eigenvalues, sorted") {
    Eigen::MatrixXd lambda = Eigen::MatrixXd::Zero(2, 2);
    lambda(0, 0) = 2.0;
    lambda(1, 1) = 3.0;
    const EigenSpectrum s =
        weighted_chisq_eigenvalues(Eigen::MatrixXd::Identity(2, 2), lambda);
    CHECK(s.lambdas[0] == doctest::Approx(3.0));
    CHECK(s.lambdas[1] == doctest::Approx(2.0));
  }
}

TEST_CASE("weighted chi-square quantile") {
  SUBCASE("equal weights reduce to the chi-square quantile") {
    EigenSpectrum s{Eigen::VectorXd::Ones(5)};
    const ThresholdSpec spec = weighted_chisq_quantile(s, 0.05, 400'000, 99);
    CHECK(spec.method == ThresholdMethod::weighted_chisq_mc);
    CHECK(spec.mc_stderr > 0.0);
    CHECK(std::fabs(spec.xi - chisq_quantile(5.0, 0.05)) <= 4.0 * spec.mc_stderr);
  }
  SUBCASE("rank-one spectra take the analytic path") {
    Eigen::VectorXd lambdas(3);
    lambdas << 2.5, 0.0, 0.0;
    const ThresholdSpec spec = weighted_chisq_quantile(EigenSpectrum{lambdas}, 0.05, 1000, 1);
    CHECK(spec.method == ThresholdMethod::analytic_chisq);
    CHECK(spec.xi == 2.5 * chisq_quantile(1.0, 0.05));
    CHECK(spec.mc_stderr == 0.0);
  }
  SUBCASE("same seed reproduces the quantile bitwise") {
    Eigen::VectorXd lambdas(2);
    lambdas << 2.0, 1.0;
    const ThresholdSpec a = weighted_chisq_quantile(EigenSpectrum{lambdas}, 0.5, 200'000, 7);
    const ThresholdSpec b = weighted_chisq_quantile(EigenSpectrum{lambdas}, 0.5, 200'000, 7);
    CHECK(a.xi == b.xi);
  }
  SUBCASE("scaling the spectrum scales the quantile") {
    Eigen::VectorXd lambdas(3);
    lambdas << 3.0, 1.5, 0.2;
    const double r = 7.3;
    const ThresholdSpec base = weighted_chisq_quantile(EigenSpectrum{lambdas}, 0.1, 100'000, 5);
    const ThresholdSpec scaled =
        weighted_chisq_quantile(EigenSpectrum{Eigen::VectorXd(r * lambdas)}, 0.1, 100'000, 5);
    CHECK(scaled.xi == doctest::Approx(r * base.xi).epsilon(1e-12));
  }
  SUBCASE("an all-zero spectrum is degenerate") {
    CHECK_THROWS_AS(weighted_chisq_quantile(EigenSpectrum{Eigen::VectorXd::Zero(3)}, 0.1,
                                            10'000, 1),
                    Error);
  }
}

namespace {

BalanceCriterion reb_matching_rem(const DesignMoments& dm, double alpha,
                                  const McConfig& mc) {
  CriterionParams params;
  params.prior = PriorSpec{
      Eigen::VectorXd::Zero(dm.s2_x.rows()),
      invert_spd(static_cast<double>(dm.n) * design_sigma_d(dm))};
  return build_criterion(CriterionKind::reb, params, dm, alpha, mc);
}

}  // namespace

TEST_CASE("special-case equivalences are exact at the decision level") {
  RngStream rng(131, 0);
  const McConfig mc{200'000, 42};
  for (int rep = 0; rep < 5; ++rep) {
    const int n = 40 + 10 * rep;
    const int p = 2 + rep % 3;
    const Population pop = gaussian_design(n, p, rng);
    const DesignMoments dm = design_moments(pop);

    const BalanceCriterion rem =
        build_criterion(CriterionKind::rem, CriterionParams{}, dm, 0.2, mc);
    const BalanceCriterion reb_rem = reb_matching_rem(dm, 0.2, mc);

    const Eigen::VectorXd beta = random_vector(p, rng);
    CriterionParams reo_params;
    reo_params.beta = beta;
    const BalanceCriterion reo =
        build_criterion(CriterionKind::reo, reo_params, dm, 0.2, mc);
    CriterionParams reb_reo_params;
    reb_reo_params.prior = PriorSpec{beta, Eigen::MatrixXd::Zero(p, p)};
    const BalanceCriterion reb_reo =
        build_criterion(CriterionKind::reb, reb_reo_params, dm, 0.2, mc);

    CHECK(rem.threshold == reb_rem.threshold);
    CHECK(reo.threshold == reb_reo.threshold);

    RngStream draw_rng = rng.child(static_cast<std::uint64_t>(rep));
    for (int draw = 0; draw < 100; ++draw) {
      const Eigen::VectorXd d =
          covariate_diff(pop, bcrd_assignment(n, pop.n_treated(), draw_rng));
      CHECK(accept(rem, d) == accept(reb_rem, d));
      CHECK(accept(reo, d) == accept(reb_reo, d));
    }
  }
}

TEST_CASE("rescaling the characteristic matrix never changes a decision") {
  RngStream rng(141, 0);
  const Population pop = gaussian_design(80, 3, rng);
  const DesignMoments dm = design_moments(pop);
  const McConfig mc{150'000, 17};

  const PriorSpec prior{random_vector(3, rng), random_spd(3, rng)};
  CriterionParams params;
  params.prior = prior;
  const BalanceCriterion base = build_criterion(CriterionKind::reb, params, dm, 0.05, mc);
  CHECK(base.threshold_spec.method == ThresholdMethod::weighted_chisq_mc);

  // Lambda -> r * Lambda, fed back in as a pure-covariance prior
  const double r = 7.3;
  CriterionParams scaled_params;
  scaled_params.prior =
      PriorSpec{Eigen::VectorXd::Zero(3), r * characteristic_matrix(prior)};
  const BalanceCriterion scaled =
      build_criterion(CriterionKind::reb, scaled_params, dm, 0.05, mc);

  RngStream draw_rng(142, 0);
  for (int draw = 0; draw < 500; ++draw) {
    const Eigen::VectorXd d =
        covariate_diff(pop, bcrd_assignment(80, 40, draw_rng));
    CHECK(accept(base, d) == accept(scaled, d));
  }
}

TEST_CASE("acceptance region of the projected criterion is a ribbon") {
  // V_xx = I via s2_x = r0 r1 I; the rule must accept exactly
  // |d_1| <= sqrt(xi / n)
  DesignMoments dm;
  dm.n = 100;
  dm.r0 = dm.r1 = 0.5;
  dm.s2_x = 0.25 * Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd beta(2);
  beta << 1.0, 0.0;
  CriterionParams params;
  params.beta = beta;
  const BalanceCriterion reo = build_criterion(CriterionKind::reo, params, dm, 0.5, McConfig{});

  const double xi = chisq_quantile(1.0, 0.5);
  const double edge = std::sqrt(xi / dm.n);
  for (double d1 = -0.2; d1 <= 0.2; d1 += 0.01) {
    for (double d2 : {-5.0, 0.0, 5.0}) {  // unconstrained direction
      Eigen::VectorXd d(2);
      d << d1, d2;
      CHECK(accept(reo, d) == (std::fabs(d1) <= edge + 1e-15));
    }
  }
}

TEST_CASE("named lambda constructions") {
  RngStream rng(151, 0);
  const Population pop = gaussian_design(120, 4, rng);
  const DesignMoments dm = design_moments(pop);
  const Eigen::MatrixXd sd = design_sigma_d(dm);

  SUBCASE("rem with identity-over-n covariance gives the identity") {
    const Eigen::MatrixXd lambda = prior_from_named(
        CriterionKind::rem, CriterionParams{},
        Eigen::MatrixXd::Identity(3, 3) / 50.0, Eigen::MatrixXd::Identity(3, 3), 50);
    CHECK((lambda - Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("huge ridge penalty shrinks the form to zero") {
    CriterionParams params;
    params.ridge_lambda = 1e12;
    const Eigen::MatrixXd lambda =
        prior_from_named(CriterionKind::ridge_rem, params, sd, dm.s2_x, dm.n);
    CHECK(lambda.cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("full-rank pca equals the mahalanobis construction") {
    CriterionParams params;
    params.pca_components = 4;
    const Eigen::MatrixXd pca =
        prior_from_named(CriterionKind::pca_rem, params, sd, dm.s2_x, dm.n);
    const Eigen::MatrixXd rem =
        prior_from_named(CriterionKind::rem, CriterionParams{}, sd, dm.s2_x, dm.n);
    CHECK((pca - rem).cwiseAbs().maxCoeff() <= 1e-8 * rem.cwiseAbs().maxCoeff());
  }
  SUBCASE("variance-fraction selection picks the smallest adequate rank") {
    // one dominant direction: 95% needs just that component
    RowMatrixXd x = random_matrix(200, 3, rng);
    x.col(0) *= 40.0;
    const Population stretched(std::move(x), 100, 100);
    const DesignMoments sdm = design_moments(stretched);
    CriterionParams params;
    params.pca_variance_fraction = 0.95;
    const Eigen::MatrixXd lambda = prior_from_named(
        CriterionKind::pca_rem, params, design_sigma_d(sdm), sdm.s2_x, sdm.n);
    const EigenSpectrum s = weighted_chisq_eigenvalues(design_v_xx(sdm), lambda);
    CHECK(s.positive_count() == 1);
  }
  SUBCASE("singular covariance reports rem as undefined and suggests ridge") {
    RowMatrixXd x(6, 2);
    x << 1, 2, 2, 4, 3, 6, 4, 8, 5, 10, 6, 12;  // second column collinear
    const DesignMoments bad = design_moments(Population(std::move(x), 3, 3));
    try {
      prior_from_named(CriterionKind::rem, CriterionParams{}, design_sigma_d(bad),
                       bad.s2_x, bad.n);
      FAIL("expected a singular-covariance error");
    } catch (const SingularCovarianceError& e) {
      CHECK(std::string(e.what()).find("ridge") != std::string::npos);
    }
  }
}

TEST_CASE("acceptance rule") {
  RngStream rng(161, 0);
  const Population pop = gaussian_design(60, 3, rng);
  const BalanceCriterion rem =
      build_criterion(CriterionKind::rem, CriterionParams{}, design_moments(pop), 0.3,
                      McConfig{});

  CHECK(accept(rem, Eigen::VectorXd::Zero(3)));

  SUBCASE("symmetric in the difference vector") {
    for (int rep = 0; rep < 1000; ++rep) {
      const Eigen::VectorXd d = 0.3 * random_vector(3, rng);
      CHECK(accept(rem, d) == accept(rem, Eigen::VectorXd(-d)));
    }
  }
  SUBCASE("dimension mismatch is a shape error") {
    CHECK_THROWS_AS(accept(rem, Eigen::VectorXd::Zero(4)), Error);
  }
}

TEST_CASE("realized mahalanobis acceptance rate approaches the target") {
  RngStream rng(171, 0);
  const Population pop = gaussian_design(1200, 5, rng);
  const BalanceCriterion rem = build_criterion(
      CriterionKind::rem, CriterionParams{}, design_moments(pop), 0.05, McConfig{});

  RngStream draw_rng(172, 0);
  long long accepted = 0;
  constexpr int kDraws = 100'000;
  for (int i = 0; i < kDraws; ++i) {
    const Assignment w = bcrd_assignment(1200, 600, draw_rng);
    accepted += accept(rem, covariate_diff(pop, w)) ? 1 : 0;
  }
  const double rate = static_cast<double>(accepted) / kDraws;
  CHECK(rate > 0.045);
  CHECK(rate < 0.055);
}
