#include "pln/model.hpp"

#include <cmath>
#include <string>

#include "pln/errors.hpp"

namespace pln {
namespace {

void check_square_symmetric(const Eigen::MatrixXd& a, const char* name) {
  if (a.rows() != a.cols()) {
    throw DimensionError(std::string(name) + " must be square");
  }
  const double scale = a.cwiseAbs().maxCoeff();
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-10 * (1.0 + scale)) {
    throw ParameterDomainError(std::string(name) + " is not symmetric");
  }
}

double log_det_from_llt(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

}  // namespace

ModelParams::ModelParams(Eigen::MatrixXd regression,
                         const Eigen::MatrixXd& precision)
    : regression_(std::move(regression)) {
  refresh_from_precision(precision);
}

ModelParams ModelParams::from_covariance(Eigen::MatrixXd regression,
                                         const Eigen::MatrixXd& covariance) {
  ModelParams out;
  out.regression_ = std::move(regression);
  out.refresh_from_covariance(covariance);
  return out;
}

void ModelParams::set_regression(Eigen::MatrixXd regression) {
  if (regression.rows() != regression_.rows() ||
      regression.cols() != regression_.cols()) {
    throw DimensionError("set_regression: shape change not allowed");
  }
  regression_ = std::move(regression);
}

void ModelParams::set_precision(const Eigen::MatrixXd& precision) {
  refresh_from_precision(precision);
}

void ModelParams::refresh_from_precision(const Eigen::MatrixXd& precision) {
  check_square_symmetric(precision, "precision");
  if (precision.rows() != regression_.cols()) {
    throw DimensionError("precision must be p x p");
  }
  const Eigen::Index p = precision.rows();
  // Symmetrize so cached quantities are exactly consistent.
  precision_ = 0.5 * (precision + precision.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(precision_);
  if (llt.info() != Eigen::Success) {
    throw ParameterDomainError(
        "precision matrix is not positive definite (Cholesky failed)");
  }
  log_det_precision_ = log_det_from_llt(llt);
  covariance_ = llt.solve(Eigen::MatrixXd::Identity(p, p));
  covariance_ = 0.5 * (covariance_ + covariance_.transpose());
  covariance_llt_.compute(covariance_);
  if (covariance_llt_.info() != Eigen::Success) {
    throw ParameterDomainError("covariance Cholesky failed");
  }
}

void ModelParams::refresh_from_covariance(const Eigen::MatrixXd& covariance) {
  check_square_symmetric(covariance, "covariance");
  if (covariance.rows() != regression_.cols()) {
    throw DimensionError("covariance must be p x p");
  }
  const Eigen::Index p = covariance.rows();
  covariance_ = 0.5 * (covariance + covariance.transpose());
  covariance_llt_.compute(covariance_);
  if (covariance_llt_.info() != Eigen::Success) {
    throw ParameterDomainError(
        "covariance matrix is not positive definite (Cholesky failed)");
  }
  precision_ = covariance_llt_.solve(Eigen::MatrixXd::Identity(p, p));
  precision_ = 0.5 * (precision_ + precision_.transpose());
  log_det_precision_ = -log_det_from_llt(covariance_llt_);
}

VariationalParams::VariationalParams(Eigen::MatrixXd means,
                                     const Eigen::MatrixXd& sdevs)
    : means_(std::move(means)) {
  if (sdevs.rows() != means_.rows() || sdevs.cols() != means_.cols()) {
    throw DimensionError("variational params: means/sdevs shape mismatch");
  }
  if (!means_.allFinite() || !sdevs.allFinite() || (sdevs.array() <= 0.0).any()) {
    throw ParameterDomainError(
        "variational params: sdevs must be finite and strictly positive");
  }
  sdevs_ = sdevs;
  log_sdevs_ = sdevs.array().log();
}

Eigen::VectorXd VariationalParams::sbar2() const {
  return sdevs_.array().square().colwise().sum().transpose().matrix();
}

void VariationalParams::set_row(Eigen::Index i, const Eigen::VectorXd& mean,
                                const Eigen::VectorXd& sdev) {
  if (i < 0 || i >= means_.rows() || mean.size() != means_.cols() ||
      sdev.size() != means_.cols()) {
    throw DimensionError("variational params: bad row update");
  }
  if (!mean.allFinite() || !sdev.allFinite() || (sdev.array() <= 0.0).any()) {
    throw ParameterDomainError("variational params: invalid row values");
  }
  means_.row(i) = mean.transpose();
  sdevs_.row(i) = sdev.transpose();
  log_sdevs_.row(i) = sdev.array().log().transpose();
}

Eigen::MatrixXd VariationalHessianBlocks::assembled() const {
  const Eigen::Index p = mm.rows();
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(2 * p, 2 * p);
  h.topLeftCorner(p, p) = mm;
  h.topRightCorner(p, p) = ms.asDiagonal();
  h.bottomLeftCorner(p, p) = ms.asDiagonal();
  h.bottomRightCorner(p, p) = ss.asDiagonal();
  return h;
}

}  // namespace pln
