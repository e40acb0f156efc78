#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pln/dataset.hpp"
#include "pln/elbo.hpp"
#include "pln/model.hpp"

namespace pln {

enum class VarianceMethod { fisher, sandwich };

std::string to_string(VarianceMethod method);

// Diagonal blocks of the variational Fisher information. The regression
// part is block-diagonal with p blocks X' D_{A~_.j} X; the precision part
// (n/2) Omega^{-1} (x) Omega^{-1} is only materialized on demand, since
// the variances have a closed form.
struct FisherBlocks {
  std::vector<Eigen::MatrixXd> b_blocks;  // p blocks, each m x m
  Eigen::MatrixXd covariance;             // Sigma-hat = Omega-hat^{-1}
  Eigen::Index n = 0;

  Eigen::MatrixXd omega_block_dense() const;  // p^2 x p^2
};

FisherBlocks fisher_blocks(const ModelParams& theta,
                           const VariationalParams& vpar,
                           const CountDataset& data);

// Per-observation diagonal machinery behind the closed-form inverse of
// the variational Hessian (all diagonals stored as vectors):
//   Lambda = (I + D_s^2 (D_a + D_a D_s^2 + Omega_D))^{-1} D_a D_s^2
//   C      = (I + D_a^{-1/2} Omega D_a^{-1/2} - D_s Lambda D_s)^{-1}
//   G      = D_s Lambda D_s,  E = G + (I - G) C (I - G)
struct SandwichWorkspace {
  Eigen::VectorXd a;           // a~_i
  Eigen::VectorXd s;           // s_i
  Eigen::VectorXd omega_diag;  // Omega_D
  Eigen::VectorXd lambda;
  Eigen::MatrixXd c;
  Eigen::VectorXd g;
  Eigen::MatrixXd e;
};

SandwichWorkspace build_sandwich_workspace(const ModelParams& theta,
                                           const Eigen::VectorXd& mean,
                                           const Eigen::VectorXd& sdev,
                                           const Observation& obs);

// Closed-form inverse of the assembled 2p x 2p variational Hessian;
// product with hess_variational(...).assembled() is the identity.
Eigen::MatrixXd variational_hessian_inverse(const SandwichWorkspace& ws);

// D_n-hat: (1/n) sum_i [(y_i - a~_i)(y_i - a~_i)'] (x) (x_i x_i'),
// the averaged outer product of profiled scores in vec(B). Symmetric PSD,
// each summand rank 1.
Eigen::MatrixXd profiled_score_outer(const ModelParams& theta,
                                     const VariationalParams& vpar,
                                     const CountDataset& data);

// C_n-hat: the averaged profiled Hessian in vec(B), via the closed form
//   -(1/n) sum_i (Sigma + D_a^{-1} + D_s^4 (I + D_s^2(D_a + Omega_D))^{-1})^{-1}
//          (x) (x_i x_i').
// Symmetric negative definite; O(n p^3).
Eigen::MatrixXd profiled_hessian(const ModelParams& theta,
                                 const VariationalParams& vpar,
                                 const CountDataset& data);

namespace serial {
Eigen::MatrixXd profiled_score_outer(const ModelParams& theta,
                                     const VariationalParams& vpar,
                                     const CountDataset& data);
Eigen::MatrixXd profiled_hessian(const ModelParams& theta,
                                 const VariationalParams& vpar,
                                 const CountDataset& data);
}  // namespace serial

// Working-set size of profiled_hessian in doubles, independent of n.
std::size_t profiled_hessian_workspace_doubles(Eigen::Index p, Eigen::Index m);

struct VarianceReport {
  VarianceMethod method = VarianceMethod::fisher;
  Eigen::MatrixXd var_B;                       // m x p
  std::optional<Eigen::MatrixXd> full_matrix;  // mp x mp, sandwich only
  std::optional<Eigen::MatrixXd> var_Omega;    // p x p, fisher only
  double level = 0.95;
  Eigen::MatrixXd ci_lower, ci_upper;          // B-hat -/+ z sqrt(var)
  std::vector<std::string> warnings;
};

// Plug-in variances from the variational Fisher information:
//   V[B_kj]    = [(X' D_{A~_.j} X)^{-1}]_kk
//   V[Omega_kl] = (2/n) Omega_kk Omega_ll
VarianceReport fisher_variance(const ModelParams& theta,
                               const VariationalParams& vpar,
                               const CountDataset& data, double level = 0.95);

// Sandwich variance of vec(B): C_n^{-1} D_n C_n^{-1} / n, with per-entry
// variances read off the diagonal at vec index j*m + k.
VarianceReport sandwich_variance(const ModelParams& theta,
                                 const VariationalParams& vpar,
                                 const CountDataset& data,
                                 double level = 0.95);

}  // namespace pln
