#include "rerand/math.hpp"

#include <cmath>
#include <limits>

#include "rerand/errors.hpp"

namespace rerand {

namespace {

constexpr int kMaxIterations = 600;
constexpr double kEps = 1e-16;
constexpr double kTiny = 1e-300;

// lower series: P(a,x) = x^a e^-x / Gamma(a) * sum_n x^n / (a(a+1)...(a+n))
double gamma_p_series(double a, double x) {
  double ap = a;
  double sum = 1.0 / a;
  double term = sum;
  for (int i = 0; i < kMaxIterations; ++i) {
    ap += 1.0;
    term *= x / ap;
    sum += term;
    if (std::fabs(term) < std::fabs(sum) * kEps) break;
  }
  return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

// upper continued fraction via modified Lentz; returns Q(a,x)
double gamma_q_cf(double a, double x) {
  double b = x + 1.0 - a;
  double c = 1.0 / kTiny;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= kMaxIterations; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    h *= delta;
    if (std::fabs(delta - 1.0) < kEps) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

}  // namespace

double regularized_gamma_p(double a, double x) {
  if (!(a > 0.0) || std::isnan(x))
    throw Error(ErrorCode::invalid_argument, "regularized_gamma_p: need a > 0 and finite x");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  if (x < a + 1.0) return gamma_p_series(a, x);
  return 1.0 - gamma_q_cf(a, x);
}

double chisq_cdf(double x, double dof) {
  if (!(dof > 0.0))
    throw Error(ErrorCode::invalid_argument, "chisq_cdf: degrees of freedom must be positive");
  if (x <= 0.0) return 0.0;
  return regularized_gamma_p(0.5 * dof, 0.5 * x);
}

double chisq_quantile(double dof, double alpha) {
  if (!(dof > 0.0))
    throw Error(ErrorCode::invalid_argument, "chisq_quantile: degrees of freedom must be positive");
  if (!(alpha > 0.0) || !(alpha < 1.0))
    throw Error(ErrorCode::invalid_argument, "chisq_quantile: alpha must lie in (0, 1)");

  double lo = 0.0;
  double hi = dof + 10.0;
  while (chisq_cdf(hi, dof) < alpha) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e308) break;
  }

  double x = 0.5 * (lo + hi);
  for (int i = 0; i < 200; ++i) {
    const double f = chisq_cdf(x, dof) - alpha;
    if (f > 0.0)
      hi = x;
    else
      lo = x;
    if (std::fabs(f) <= 1e-13) break;

    // Newton step from the density, kept inside the bracket
    const double a = 0.5 * dof;
    const double log_pdf =
        (a - 1.0) * std::log(x) - 0.5 * x - a * std::log(2.0) - std::lgamma(a);
    const double pdf = std::exp(log_pdf);
    double next = x - f / pdf;
    if (!(next > lo) || !(next < hi) || !std::isfinite(next))
      next = 0.5 * (lo + hi);
    if (std::fabs(next - x) <= 1e-15 * (1.0 + x)) {
      x = next;
      break;
    }
    x = next;
  }
  return x;
}

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::usage: return "usage";
    case ErrorCode::io_error: return "io-error";
    case ErrorCode::invalid_argument: return "invalid-argument";
    case ErrorCode::degenerate_population: return "degenerate-population";
    case ErrorCode::singular_covariance: return "singular-covariance";
    case ErrorCode::missing_outcomes: return "missing-outcomes";
    case ErrorCode::acceptance_starvation: return "acceptance-starvation";
    case ErrorCode::pilot_singular: return "pilot-singular";
    case ErrorCode::calibration_failure: return "calibration-failure";
    case ErrorCode::shape_mismatch: return "shape-mismatch";
    case ErrorCode::degenerate_prior: return "degenerate-prior";
    case ErrorCode::tuning_failure: return "tuning-failure";
    case ErrorCode::not_positive_definite: return "not-positive-definite";
    case ErrorCode::undefined_quantity: return "undefined-quantity";
    case ErrorCode::split_error: return "split-error";
  }
  return "unknown";
}

}  // namespace rerand
