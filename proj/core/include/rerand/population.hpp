#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <mutex>
#include <optional>
#include <vector>

namespace rerand {

// Unit covariate rows are iterated constantly when scoring assignments, so
// the covariate matrix is kept row-major (one contiguous row per unit).
using RowMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Length-N 0/1 treatment vector; valid when exactly n_treated entries are 1.
struct Assignment {
  std::vector<std::uint8_t> w;
};

int count_treated(const Assignment& a);
Assignment complement(const Assignment& a);

// A finite population: covariates, optional complete science table, and the
// fixed group sizes of the design. Immutable after construction; safe to
// share across threads.
class Population {
 public:
  // design-only (covariates, no outcomes)
  Population(RowMatrixXd x, int n_treated, int n_control);
  // complete science table
  Population(RowMatrixXd x, Eigen::VectorXd y1, Eigen::VectorXd y0,
             int n_treated, int n_control);

  Population(const Population& other);
  Population& operator=(const Population& other);
  Population(Population&& other) noexcept;
  Population& operator=(Population&& other) noexcept;

  int size() const noexcept { return static_cast<int>(x_.rows()); }
  int dim() const noexcept { return static_cast<int>(x_.cols()); }
  int n_treated() const noexcept { return n_treated_; }
  int n_control() const noexcept { return n_control_; }
  double r1() const noexcept { return static_cast<double>(n_treated_) / size(); }
  double r0() const noexcept { return static_cast<double>(n_control_) / size(); }

  const RowMatrixXd& covariates() const noexcept { return x_; }
  bool has_outcomes() const noexcept { return y1_.has_value(); }
  const Eigen::VectorXd& y1() const;  // throws missing-outcomes when absent
  const Eigen::VectorXd& y0() const;

  const Eigen::VectorXd& column_means() const;  // computed once, cached

 private:
  void validate() const;

  RowMatrixXd x_;
  std::optional<Eigen::VectorXd> y1_;
  std::optional<Eigen::VectorXd> y0_;
  int n_treated_ = 0;
  int n_control_ = 0;

  mutable std::mutex cache_mutex_;
  mutable std::optional<Eigen::VectorXd> column_means_;
};

// mean of Y(1) - Y(0); requires outcomes
double average_effect(const Population& pop);

struct OutcomeMoments {
  double s2_y1 = 0;
  double s2_y0 = 0;
  double s2_tau = 0;
  Eigen::VectorXd s2_x_y1;
  Eigen::VectorXd s2_x_y0;
};

// Finite-population second moments, all with divisor N-1 and means over the
// full population. Outcome moments are present only for science tables.
struct Moments {
  Eigen::MatrixXd s2_x;
  double r1 = 0;
  double r0 = 0;
  std::optional<OutcomeMoments> outcomes;
};

// Covariance structure of sqrt(N) * (tau_hat - tau, D) under complete
// randomization.
struct VMatrix {
  double v_tt = 0;
  Eigen::VectorXd v_tx;
  Eigen::MatrixXd v_xx;
};

Moments finite_population_moments(const Population& pop);
VMatrix v_matrix(const Moments& m);

// V_xx^-1 V_xtau, solved (not inverted); errors when the estimated
// reciprocal condition number of v_xx falls below 1e-12.
Eigen::VectorXd projection_beta(const VMatrix& v);

// V_tx V_xx^-1 V_xt / V_tt, clamped into [0,1] when the excursion is at most
// 1e-10 and rejected as inconsistent otherwise.
double squared_multiple_correlation(const VMatrix& v);

double diff_in_means_tau(const Population& pop, const Assignment& a);
Eigen::VectorXd covariate_diff(const Population& pop, const Assignment& a);

// Sigma_D = S2_X / (N r0 r1); N * sigma_d reproduces v_xx exactly
Eigen::MatrixXd sigma_d(const Moments& m, int n);

}  // namespace rerand
