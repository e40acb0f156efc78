#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>

namespace pln {

// Model parameters theta = (B, Omega). Omega must be symmetric positive
// definite; Sigma = Omega^{-1} is kept in sync together with its Cholesky
// factor, since the ELBO consumes Omega and the sandwich consumes Sigma.
// vec(B) follows column-major stacking: entry (k, j) sits at j*m + k.
class ModelParams {
public:
  ModelParams(Eigen::MatrixXd regression, const Eigen::MatrixXd& precision);

  static ModelParams from_covariance(Eigen::MatrixXd regression,
                                     const Eigen::MatrixXd& covariance);

  const Eigen::MatrixXd& regression() const { return regression_; }  // m x p
  const Eigen::MatrixXd& precision() const { return precision_; }    // p x p
  const Eigen::MatrixXd& covariance() const { return covariance_; }  // p x p
  const Eigen::LLT<Eigen::MatrixXd>& covariance_llt() const {
    return covariance_llt_;
  }
  double log_det_precision() const { return log_det_precision_; }

  Eigen::Index m() const { return regression_.rows(); }
  Eigen::Index p() const { return regression_.cols(); }

  void set_regression(Eigen::MatrixXd regression);
  // Replaces Omega and refreshes Sigma and the cached factorizations.
  void set_precision(const Eigen::MatrixXd& precision);

private:
  ModelParams() = default;
  void refresh_from_precision(const Eigen::MatrixXd& precision);
  void refresh_from_covariance(const Eigen::MatrixXd& covariance);

  Eigen::MatrixXd regression_;
  Eigen::MatrixXd precision_;
  Eigen::MatrixXd covariance_;
  Eigen::LLT<Eigen::MatrixXd> covariance_llt_;
  double log_det_precision_ = 0.0;
};

// Per-observation Gaussian surrogate parameters, rows (m_i, s_i).
// Stored as (means, log sdevs) so optimizers can move unconstrained;
// the public surface always exposes the positive sdevs.
class VariationalParams {
public:
  VariationalParams(Eigen::MatrixXd means, const Eigen::MatrixXd& sdevs);

  const Eigen::MatrixXd& means() const { return means_; }  // M, n x p
  const Eigen::MatrixXd& sdevs() const { return sdevs_; }  // S, n x p
  const Eigen::MatrixXd& log_sdevs() const { return log_sdevs_; }

  Eigen::Index n() const { return means_.rows(); }
  Eigen::Index p() const { return means_.cols(); }

  // diag of S-bar^2 = sum_i diag(s_i^2), as a p-vector.
  Eigen::VectorXd sbar2() const;

  void set_row(Eigen::Index i, const Eigen::VectorXd& mean,
               const Eigen::VectorXd& sdev);

private:
  Eigen::MatrixXd means_, sdevs_, log_sdevs_;
};

// Variational mean rates: A~_ij = exp(o_ij + x_i'B_j + m_ij + s_ij^2/2).
// Entries are checked finite and positive; anything past 1e300 is an
// overflow error rather than a silent infinity.
struct ATilde {
  Eigen::MatrixXd values;  // n x p
};

// Second derivatives of one observation's ELBO in psi_i = (m_i, s_i).
// ms and ss blocks are diagonal and stored as vectors.
struct VariationalHessianBlocks {
  Eigen::MatrixXd mm;  // p x p
  Eigen::VectorXd ms;  // diagonal of the p x p cross block
  Eigen::VectorXd ss;  // diagonal

  // Dense symmetric 2p x 2p form [[mm, diag(ms)], [diag(ms), diag(ss)]].
  Eigen::MatrixXd assembled() const;
};

}  // namespace pln
