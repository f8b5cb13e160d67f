#pragma once

namespace rerand {

// Regularized lower incomplete gamma P(a, x) = gamma(a, x) / Gamma(a).
// Series expansion for x < a + 1, Lentz continued fraction otherwise;
// converged to ~1e-15 relative, well inside the 1e-12 contract.
double regularized_gamma_p(double a, double x);

// P(chi^2_dof <= x)
double chisq_cdf(double x, double dof);

// alpha-quantile of chi^2_dof: |P(chi^2_dof <= result) - alpha| <= 1e-12.
// Bisection with Newton polish on the regularized incomplete gamma.
double chisq_quantile(double dof, double alpha);

}  // namespace rerand
