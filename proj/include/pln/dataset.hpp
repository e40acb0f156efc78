#pragma once

#include <Eigen/Dense>

namespace pln {

// Observed counts with their covariates and offsets. Construction
// validates: counts nonnegative integers, consistent shapes, covariates
// of full column rank. K(Y) = -sum log(Y_ij!) is cached once.
class CountDataset {
public:
  CountDataset(Eigen::MatrixXd counts, Eigen::MatrixXd covariates,
               Eigen::MatrixXd offsets);
  // Zero offsets.
  CountDataset(Eigen::MatrixXd counts, Eigen::MatrixXd covariates);

  const Eigen::MatrixXd& counts() const { return counts_; }
  const Eigen::MatrixXd& covariates() const { return covariates_; }
  const Eigen::MatrixXd& offsets() const { return offsets_; }

  Eigen::Index n() const { return counts_.rows(); }
  Eigen::Index p() const { return counts_.cols(); }
  Eigen::Index m() const { return covariates_.cols(); }

  double log_factorial_sum() const { return log_factorial_sum_; }
  // K(Y_i) for a single row.
  double row_log_factorial(Eigen::Index i) const {
    return row_log_factorial_(i);
  }

private:
  void validate();

  Eigen::MatrixXd counts_, covariates_, offsets_;
  Eigen::VectorXd row_log_factorial_;
  double log_factorial_sum_ = 0.0;
};

// One row of a dataset, copied out for per-observation computations.
struct Observation {
  Eigen::Index row = 0;  // position in the dataset, kept for diagnostics
  Eigen::VectorXd y;     // p
  Eigen::VectorXd x;     // m
  Eigen::VectorXd o;     // p
  double log_factorial = 0.0;
};

Observation observation(const CountDataset& data, Eigen::Index i);

}  // namespace pln
