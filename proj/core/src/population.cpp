#include "rerand/population.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "rerand/errors.hpp"

namespace rerand {

int count_treated(const Assignment& a) {
  int total = 0;
  for (std::uint8_t v : a.w) total += (v != 0);
  return total;
}

Assignment complement(const Assignment& a) {
  Assignment out;
  out.w.reserve(a.w.size());
  for (std::uint8_t v : a.w) out.w.push_back(v ? 0 : 1);
  return out;
}

Population::Population(RowMatrixXd x, int n_treated, int n_control)
    : x_(std::move(x)), n_treated_(n_treated), n_control_(n_control) {
  validate();
}

Population::Population(RowMatrixXd x, Eigen::VectorXd y1, Eigen::VectorXd y0,
                       int n_treated, int n_control)
    : x_(std::move(x)),
      y1_(std::move(y1)),
      y0_(std::move(y0)),
      n_treated_(n_treated),
      n_control_(n_control) {
  validate();
}

Population::Population(const Population& other)
    : x_(other.x_),
      y1_(other.y1_),
      y0_(other.y0_),
      n_treated_(other.n_treated_),
      n_control_(other.n_control_) {}

Population& Population::operator=(const Population& other) {
  if (this != &other) {
    x_ = other.x_;
    y1_ = other.y1_;
    y0_ = other.y0_;
    n_treated_ = other.n_treated_;
    n_control_ = other.n_control_;
    std::lock_guard<std::mutex> lock(cache_mutex_);
    column_means_.reset();
  }
  return *this;
}

Population::Population(Population&& other) noexcept
    : x_(std::move(other.x_)),
      y1_(std::move(other.y1_)),
      y0_(std::move(other.y0_)),
      n_treated_(other.n_treated_),
      n_control_(other.n_control_) {}

Population& Population::operator=(Population&& other) noexcept {
  if (this != &other) {
    x_ = std::move(other.x_);
    y1_ = std::move(other.y1_);
    y0_ = std::move(other.y0_);
    n_treated_ = other.n_treated_;
    n_control_ = other.n_control_;
    std::lock_guard<std::mutex> lock(cache_mutex_);
    column_means_.reset();
  }
  return *this;
}

void Population::validate() const {
  const int n = size();
  if (n < 2)
    throw Error(ErrorCode::degenerate_population,
                "population needs at least 2 units");
  if (n_treated_ < 1 || n_control_ < 1 || n_treated_ + n_control_ != n)
    throw Error(ErrorCode::invalid_argument,
                "group sizes must be positive and sum to the population size");
  if (!x_.allFinite())
    throw Error(ErrorCode::invalid_argument,
                "covariate matrix contains non-finite entries");
  if (y1_.has_value() != y0_.has_value())
    throw Error(ErrorCode::invalid_argument,
                "either both potential-outcome vectors are present or neither");
  if (y1_.has_value()) {
    if (y1_->size() != n || y0_->size() != n)
      throw Error(ErrorCode::shape_mismatch,
                  "potential-outcome vectors must have one entry per unit");
    if (!y1_->allFinite() || !y0_->allFinite())
      throw Error(ErrorCode::invalid_argument,
                  "potential outcomes contain non-finite entries");
  }
}

const Eigen::VectorXd& Population::y1() const {
  if (!y1_)
    throw Error(ErrorCode::missing_outcomes, "population is design-only (no Y(1))");
  return *y1_;
}

const Eigen::VectorXd& Population::y0() const {
  if (!y0_)
    throw Error(ErrorCode::missing_outcomes, "population is design-only (no Y(0))");
  return *y0_;
}

const Eigen::VectorXd& Population::column_means() const {
  std::lock_guard<std::mutex> lock(cache_mutex_);
  if (!column_means_) column_means_ = x_.colwise().mean().transpose();
  return *column_means_;
}

double average_effect(const Population& pop) {
  return (pop.y1() - pop.y0()).mean();
}

namespace {

void check_assignment(const Population& pop, const Assignment& a) {
  if (static_cast<int>(a.w.size()) != pop.size())
    throw Error(ErrorCode::shape_mismatch,
                "assignment length does not match population size");
  if (count_treated(a) != pop.n_treated())
    throw Error(ErrorCode::invalid_argument,
                "assignment does not place n_treated units in treatment");
}

// single source of truth for V_xx so sigma_d stays consistent with v_matrix
Eigen::MatrixXd v_xx_from(const Moments& m) {
  if (!(m.r0 > 0.0) || !(m.r1 > 0.0))
    throw Error(ErrorCode::invalid_argument,
                "group proportions must both be positive");
  return m.s2_x / (m.r0 * m.r1);
}

}  // namespace

Moments finite_population_moments(const Population& pop) {
  const int n = pop.size();
  const int p = pop.dim();
  const RowMatrixXd& x = pop.covariates();
  const Eigen::VectorXd xbar = pop.column_means();
  const double denom = static_cast<double>(n - 1);

  Moments m;
  m.r1 = pop.r1();
  m.r0 = pop.r0();
  m.s2_x = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd centered = x.row(i).transpose() - xbar;
    m.s2_x.noalias() += centered * centered.transpose();
  }
  m.s2_x /= denom;

  if (pop.has_outcomes()) {
    const Eigen::VectorXd& y1 = pop.y1();
    const Eigen::VectorXd& y0 = pop.y0();
    const double y1bar = y1.mean();
    const double y0bar = y0.mean();
    const double tau = y1bar - y0bar;

    OutcomeMoments om;
    om.s2_x_y1 = Eigen::VectorXd::Zero(p);
    om.s2_x_y0 = Eigen::VectorXd::Zero(p);
    for (int i = 0; i < n; ++i) {
      const Eigen::VectorXd centered = x.row(i).transpose() - xbar;
      const double d1 = y1[i] - y1bar;
      const double d0 = y0[i] - y0bar;
      const double dt = (y1[i] - y0[i]) - tau;
      om.s2_y1 += d1 * d1;
      om.s2_y0 += d0 * d0;
      om.s2_tau += dt * dt;
      om.s2_x_y1.noalias() += centered * d1;
      om.s2_x_y0.noalias() += centered * d0;
    }
    om.s2_y1 /= denom;
    om.s2_y0 /= denom;
    om.s2_tau /= denom;
    om.s2_x_y1 /= denom;
    om.s2_x_y0 /= denom;
    m.outcomes = std::move(om);
  }
  return m;
}

VMatrix v_matrix(const Moments& m) {
  if (!m.outcomes)
    throw Error(ErrorCode::missing_outcomes,
                "v_matrix needs outcome moments; population is design-only");
  const OutcomeMoments& om = *m.outcomes;
  VMatrix v;
  v.v_xx = v_xx_from(m);
  v.v_tt = om.s2_y1 / m.r1 + om.s2_y0 / m.r0 - om.s2_tau;
  v.v_tx = om.s2_x_y1 / m.r1 + om.s2_x_y0 / m.r0;
  return v;
}

Eigen::VectorXd projection_beta(const VMatrix& v) {
  Eigen::LLT<Eigen::MatrixXd> llt(v.v_xx);
  if (llt.info() != Eigen::Success)
    throw SingularCovarianceError("v_xx is not positive definite", 0.0);
  const double rcond = llt.rcond();
  if (rcond < 1e-12)
    throw SingularCovarianceError("v_xx is numerically singular", rcond);
  return llt.solve(v.v_tx);
}

double squared_multiple_correlation(const VMatrix& v) {
  if (!(v.v_tt > 0.0))
    throw Error(ErrorCode::undefined_quantity,
                "R^2 is undefined when V_tautau is zero");
  const Eigen::VectorXd beta = projection_beta(v);
  double r2 = v.v_tx.dot(beta) / v.v_tt;
  if (r2 < 0.0) {
    if (r2 < -1e-10)
      throw Error(ErrorCode::invalid_argument,
                  "R^2 fell below 0 beyond numerical tolerance; inputs inconsistent");
    r2 = 0.0;
  } else if (r2 > 1.0) {
    if (r2 > 1.0 + 1e-10)
      throw Error(ErrorCode::invalid_argument,
                  "R^2 exceeded 1 beyond numerical tolerance; inputs inconsistent");
    r2 = 1.0;
  }
  return r2;
}

double diff_in_means_tau(const Population& pop, const Assignment& a) {
  check_assignment(pop, a);
  const Eigen::VectorXd& y1 = pop.y1();
  const Eigen::VectorXd& y0 = pop.y0();
  double sum_t = 0.0, sum_c = 0.0;
  for (int i = 0; i < pop.size(); ++i) {
    if (a.w[i])
      sum_t += y1[i];
    else
      sum_c += y0[i];
  }
  return sum_t / pop.n_treated() - sum_c / pop.n_control();
}

Eigen::VectorXd covariate_diff(const Population& pop, const Assignment& a) {
  check_assignment(pop, a);
  const RowMatrixXd& x = pop.covariates();
  Eigen::VectorXd sum_t = Eigen::VectorXd::Zero(pop.dim());
  Eigen::VectorXd sum_c = Eigen::VectorXd::Zero(pop.dim());
  for (int i = 0; i < pop.size(); ++i) {
    if (a.w[i])
      sum_t += x.row(i).transpose();
    else
      sum_c += x.row(i).transpose();
  }
  return sum_t / pop.n_treated() - sum_c / pop.n_control();
}

Eigen::MatrixXd sigma_d(const Moments& m, int n) {
  if (n < 2)
    throw Error(ErrorCode::invalid_argument, "sigma_d needs n >= 2");
  return v_xx_from(m) / static_cast<double>(n);
}

}  // namespace rerand
