#include "pln/dataset.hpp"

#include <cmath>
#include <string>

#include "pln/errors.hpp"
#include "pln/stats.hpp"

namespace pln {

CountDataset::CountDataset(Eigen::MatrixXd counts, Eigen::MatrixXd covariates,
                           Eigen::MatrixXd offsets)
    : counts_(std::move(counts)),
      covariates_(std::move(covariates)),
      offsets_(std::move(offsets)) {
  validate();
}

CountDataset::CountDataset(Eigen::MatrixXd counts, Eigen::MatrixXd covariates)
    : counts_(std::move(counts)), covariates_(std::move(covariates)) {
  offsets_ = Eigen::MatrixXd::Zero(counts_.rows(), counts_.cols());
  validate();
}

void CountDataset::validate() {
  const Eigen::Index n = counts_.rows(), p = counts_.cols(),
                     m = covariates_.cols();
  if (n < 1 || p < 1 || m < 1) {
    throw DimensionError("dataset: n, p and m must all be at least 1");
  }
  if (covariates_.rows() != n) {
    throw DimensionError("dataset: covariates have " +
                         std::to_string(covariates_.rows()) +
                         " rows, counts have " + std::to_string(n));
  }
  if (offsets_.rows() != n || offsets_.cols() != p) {
    throw DimensionError("dataset: offsets must be n x p");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double y = counts_(i, j);
      if (!std::isfinite(y) || y < 0.0 || std::floor(y) != y) {
        throw DimensionError("dataset: counts[" + std::to_string(i) + "][" +
                             std::to_string(j) +
                             "] is not a nonnegative integer");
      }
    }
  }
  if (!covariates_.allFinite() || !offsets_.allFinite()) {
    throw DimensionError("dataset: covariates and offsets must be finite");
  }
  if (n < m) {
    throw DimensionError("dataset: fewer rows than covariates");
  }
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(covariates_);
  if (qr.rank() < m) {
    throw DimensionError(
        "dataset: covariate matrix is rank-deficient (rank " +
        std::to_string(qr.rank()) + " < " + std::to_string(m) + ")");
  }
  row_log_factorial_.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double k = 0.0;
    for (Eigen::Index j = 0; j < p; ++j) k -= log_factorial(counts_(i, j));
    row_log_factorial_(i) = k;
  }
  log_factorial_sum_ = row_log_factorial_.sum();
}

Observation observation(const CountDataset& data, Eigen::Index i) {
  if (i < 0 || i >= data.n()) {
    throw DimensionError("observation: row index out of range");
  }
  Observation obs;
  obs.row = i;
  obs.y = data.counts().row(i).transpose();
  obs.x = data.covariates().row(i).transpose();
  obs.o = data.offsets().row(i).transpose();
  obs.log_factorial = data.row_log_factorial(i);
  return obs;
}

}  // namespace pln
