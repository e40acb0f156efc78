#pragma once

#include <Eigen/Dense>

#include "pln/dataset.hpp"
#include "pln/model.hpp"

namespace pln {

// Variational mean rates for the whole dataset; throws OverflowError
// (with the offending cell) past 1e300.
ATilde compute_a_tilde(const ModelParams& theta, const VariationalParams& vpar,
                       const CountDataset& data);

// Single-row counterpart, a~_i as a p-vector.
Eigen::VectorXd a_tilde_row(const ModelParams& theta,
                            const Eigen::VectorXd& mean,
                            const Eigen::VectorXd& sdev,
                            const Observation& obs);

// One observation's ELBO term:
//   J_i = y'(o + m + B'x) - a~'1 + K(y) + log|Omega|/2
//         - m'Omega m/2 - diag(Omega)'s^2/2 + sum(log s) + p/2.
double elbo_single(const ModelParams& theta, const Eigen::VectorXd& mean,
                   const Eigen::VectorXd& sdev, const Observation& obs);

// Full-data ELBO, evaluated in the trace-based matrix form. Equals the
// sum of elbo_single over rows.
double elbo_total(const ModelParams& theta, const VariationalParams& vpar,
                  const CountDataset& data);

struct ModelGradient {
  Eigen::MatrixXd regression;  // d/dB,     m x p:  X'(Y - A~)
  Eigen::MatrixXd precision;   // d/dOmega, p x p:  n/2 [Sigma - (M'M + Sbar2)/n]
};

ModelGradient grad_model(const ModelParams& theta,
                         const VariationalParams& vpar,
                         const CountDataset& data);

struct VariationalGradient {
  Eigen::VectorXd mean;  // y - a~ - Omega m
  Eigen::VectorXd sdev;  // -s . a~ + 1/s - s . diag(Omega)
};

VariationalGradient grad_variational(const ModelParams& theta,
                                     const Eigen::VectorXd& mean,
                                     const Eigen::VectorXd& sdev,
                                     const Observation& obs);

// Blocks of the 2p x 2p Hessian of J_i in (m_i, s_i):
//   mm = -D_a~ - Omega
//   ms = -D_{a~ . s}
//   ss = -D_a~(I + D_s^2) - D_s^{-2} - diag(Omega)
VariationalHessianBlocks hess_variational(const ModelParams& theta,
                                          const Eigen::VectorXd& mean,
                                          const Eigen::VectorXd& sdev,
                                          const Observation& obs);

// Derivatives of J_i with respect to vec(B) (column-major, index j*m + k):
//   gradient = (y - a~) (x) x_i                       mp
//   hessian  = -D_a~ (x) (x_i x_i')                   mp x mp
//   cross    = -[D_a~ (x) x_i, D_{a~ . s} (x) x_i]    mp x 2p
struct ObsRegressionDerivatives {
  Eigen::VectorXd gradient;
  Eigen::MatrixXd hessian;
  Eigen::MatrixXd cross;
};

ObsRegressionDerivatives obs_regression_derivatives(const ModelParams& theta,
                                                    const Eigen::VectorXd& mean,
                                                    const Eigen::VectorXd& sdev,
                                                    const Observation& obs);

namespace detail {
// Non-throwing ELBO evaluation for line searches: overflowing trial
// points come back as -inf and get rejected by the caller.
double elbo_single_guarded(const ModelParams& theta, const Eigen::VectorXd& mean,
                           const Eigen::VectorXd& sdev, const Observation& obs);
}  // namespace detail

}  // namespace pln
