#pragma once

#include <string>
#include <utility>
#include <vector>

#include "pln/dataset.hpp"
#include "pln/elbo.hpp"
#include "pln/model.hpp"

namespace pln {

struct FitConfig {
  double outer_tol = 1e-8;     // relative ELBO change |dJ| / (1 + |J|)
  int max_outer_iters = 500;
  double psi_grad_tol = 1e-8;  // inf-norm of the per-row (m, s) gradient
  int max_psi_iters = 100;
  int max_halvings = 30;       // Newton line search, step starts at 1.0
  double jitter = 1e-8;        // SPD repair increment, escalates x10 to 1e-2

  void validate() const;
};

struct FitResult {
  ModelParams theta_hat;
  VariationalParams vpar_hat;
  std::vector<double> elbo_trace;  // value after each outer iteration
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;
};

// Least-squares initialization on log(1 + Y) - O.
std::pair<ModelParams, VariationalParams> init_params(const CountDataset& data);

// Maximizes J_i over psi_i = (m_i, s_i) for fixed theta: damped Newton in
// (m_i, log s_i) built from hess_variational, line search keeping J_i
// nondecreasing. Throws ProfilingError if the gradient tolerance is not
// reached within cfg.max_psi_iters.
struct VparRow {
  Eigen::VectorXd mean;
  Eigen::VectorXd sdev;
};

VparRow profile_vpar(const ModelParams& theta, const Observation& obs,
                     const VparRow& init, const FitConfig& cfg);

// Closed-form covariance update (M'M + Sbar2)/n, jittered if its Cholesky
// fails; maximizes the ELBO over Omega for fixed (B, psi).
Eigen::MatrixXd update_sigma(const VariationalParams& vpar,
                             const FitConfig& cfg = FitConfig{});

// Profiles every row of (means, sdevs) in place; rows are independent, so
// the OpenMP version is bitwise identical to the serial one.
void profile_all_rows(const ModelParams& theta, const CountDataset& data,
                      Eigen::MatrixXd& means, Eigen::MatrixXd& sdevs,
                      const FitConfig& cfg);

namespace serial {
void profile_all_rows(const ModelParams& theta, const CountDataset& data,
                      Eigen::MatrixXd& means, Eigen::MatrixXd& sdevs,
                      const FitConfig& cfg);
}  // namespace serial

// Block coordinate ascent: (a) profile every psi_i, (b) closed-form
// Sigma, (c) damped Newton on each regression column with block Hessian
// X' D_{A~_.j} X. Stops when the relative ELBO change drops below
// cfg.outer_tol; hitting max_outer_iters returns converged = false.
FitResult fit(const CountDataset& data, const FitConfig& cfg = FitConfig{});

// Warm-started variant.
FitResult fit(const CountDataset& data, const FitConfig& cfg,
              const ModelParams& theta0, const VariationalParams& vpar0);

}  // namespace pln
