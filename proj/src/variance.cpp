#include "pln/variance.hpp"

#include <cmath>
#include <string>

#include "pln/errors.hpp"
#include "pln/parallel.hpp"
#include "pln/stats.hpp"

namespace pln {
namespace {

void check_fitted_shapes(const ModelParams& theta,
                         const VariationalParams& vpar,
                         const CountDataset& data) {
  if (theta.m() != data.m() || theta.p() != data.p() || vpar.n() != data.n() ||
      vpar.p() != data.p()) {
    throw DimensionError("variance: parameters and dataset shapes differ");
  }
}

// Inner p x p matrix of one C_n-hat summand:
//   (Sigma + D_a^{-1} + D_s^4 (I + D_s^2 (D_a + Omega_D))^{-1})^{-1}
Eigen::MatrixXd profiled_hessian_inner(const ModelParams& theta,
                                       const Eigen::ArrayXd& a,
                                       const Eigen::ArrayXd& s,
                                       Eigen::Index row) {
  const Eigen::ArrayXd s2 = s.square();
  const Eigen::ArrayXd omega_diag = theta.precision().diagonal().array();
  Eigen::MatrixXd inner = theta.covariance();
  inner.diagonal().array() +=
      a.inverse() + s2.square() / (1.0 + s2 * (a + omega_diag));
  Eigen::LLT<Eigen::MatrixXd> llt(inner);
  if (llt.info() != Eigen::Success) {
    throw LinAlgError("profiled_hessian: row " + std::to_string(row) +
                          " produced a non-SPD inner matrix",
                      row);
  }
  return llt.solve(Eigen::MatrixXd::Identity(inner.rows(), inner.cols()));
}

// acc -= W (x) (x x'), the Kronecker expansion of one summand.
void subtract_kron(Eigen::MatrixXd& acc, const Eigen::MatrixXd& w,
                   const Eigen::VectorXd& x) {
  const Eigen::Index p = w.rows(), m = x.size();
  const Eigen::MatrixXd xxt = x * x.transpose();
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = 0; k < p; ++k) {
      acc.block(j * m, k * m, m, m) -= w(j, k) * xxt;
    }
  }
}

Eigen::MatrixXd score_outer_impl(const ModelParams& theta,
                                 const VariationalParams& vpar,
                                 const CountDataset& data, bool use_openmp) {
  check_fitted_shapes(theta, vpar, data);
  const Eigen::Index n = data.n(), p = data.p(), m = data.m();
  const ATilde at = compute_a_tilde(theta, vpar, data);
  const Eigen::MatrixXd residuals = data.counts() - at.values;
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m * p, m * p);
  const auto score = [&](Eigen::Index i, Eigen::VectorXd& u) {
    u.resize(m * p);
    for (Eigen::Index j = 0; j < p; ++j) {
      u.segment(j * m, m) =
          residuals(i, j) * data.covariates().row(i).transpose();
    }
  };
  if (use_openmp) {
    std::vector<Eigen::VectorXd> slots(size_t(std::min(n, kReduceWindow)));
    deterministic_reduce(
        n, slots, score,
        [&](Eigen::Index, const Eigen::VectorXd& u) {
          acc.selfadjointView<Eigen::Lower>().rankUpdate(u, 1.0);
        });
  } else {
    Eigen::VectorXd u;
    for (Eigen::Index i = 0; i < n; ++i) {
      score(i, u);
      acc.selfadjointView<Eigen::Lower>().rankUpdate(u, 1.0);
    }
  }
  acc = acc.selfadjointView<Eigen::Lower>();
  return acc / double(n);
}

Eigen::MatrixXd profiled_hessian_impl(const ModelParams& theta,
                                      const VariationalParams& vpar,
                                      const CountDataset& data,
                                      bool use_openmp) {
  check_fitted_shapes(theta, vpar, data);
  const Eigen::Index n = data.n(), p = data.p(), m = data.m();
  const ATilde at = compute_a_tilde(theta, vpar, data);
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m * p, m * p);
  const auto inner = [&](Eigen::Index i, Eigen::MatrixXd& w) {
    w = profiled_hessian_inner(theta, at.values.row(i).transpose().array(),
                               vpar.sdevs().row(i).transpose().array(), i);
  };
  const auto fold = [&](Eigen::Index i, const Eigen::MatrixXd& w) {
    subtract_kron(acc, w, data.covariates().row(i).transpose());
  };
  if (use_openmp) {
    std::vector<Eigen::MatrixXd> slots(size_t(std::min(n, kReduceWindow)));
    deterministic_reduce(n, slots, inner, fold);
  } else {
    Eigen::MatrixXd w;
    for (Eigen::Index i = 0; i < n; ++i) {
      inner(i, w);
      fold(i, w);
    }
  }
  return acc / double(n);
}

Eigen::MatrixXd ci_bound(const Eigen::MatrixXd& b, const Eigen::MatrixXd& var,
                         double z) {
  return b + z * var.cwiseSqrt();
}

void finalize_report(VarianceReport& report, const Eigen::MatrixXd& b_hat) {
  if ((report.var_B.array() <= 0.0).any()) {
    throw LinAlgError(to_string(report.method) +
                      " variance: nonpositive variance entry");
  }
  const double z = normal_quantile(0.5 * (1.0 + report.level));
  report.ci_lower = ci_bound(b_hat, report.var_B, -z);
  report.ci_upper = ci_bound(b_hat, report.var_B, z);
}

}  // namespace

std::string to_string(VarianceMethod method) {
  return method == VarianceMethod::fisher ? "fisher" : "sandwich";
}

Eigen::MatrixXd FisherBlocks::omega_block_dense() const {
  const Eigen::Index p = covariance.rows();
  Eigen::MatrixXd out(p * p, p * p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = 0; k < p; ++k) {
      out.block(j * p, k * p, p, p) =
          (0.5 * double(n)) * covariance(j, k) * covariance;
    }
  }
  return out;
}

FisherBlocks fisher_blocks(const ModelParams& theta,
                           const VariationalParams& vpar,
                           const CountDataset& data) {
  check_fitted_shapes(theta, vpar, data);
  const ATilde at = compute_a_tilde(theta, vpar, data);
  FisherBlocks blocks;
  blocks.covariance = theta.covariance();
  blocks.n = data.n();
  blocks.b_blocks.reserve(size_t(data.p()));
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    blocks.b_blocks.push_back(data.covariates().transpose() *
                              at.values.col(j).asDiagonal() *
                              data.covariates());
  }
  return blocks;
}

SandwichWorkspace build_sandwich_workspace(const ModelParams& theta,
                                           const Eigen::VectorXd& mean,
                                           const Eigen::VectorXd& sdev,
                                           const Observation& obs) {
  SandwichWorkspace ws;
  ws.a = a_tilde_row(theta, mean, sdev, obs);
  ws.s = sdev;
  ws.omega_diag = theta.precision().diagonal();
  const Eigen::ArrayXd a = ws.a.array(), s2 = sdev.array().square();
  ws.lambda =
      (a * s2 / (1.0 + s2 * (a + a * s2 + ws.omega_diag.array()))).matrix();
  ws.g = (s2 * ws.lambda.array()).matrix();
  const Eigen::ArrayXd inv_sqrt_a = a.sqrt().inverse();
  Eigen::MatrixXd c_inverse = inv_sqrt_a.matrix().asDiagonal() *
                              theta.precision() *
                              inv_sqrt_a.matrix().asDiagonal();
  c_inverse.diagonal().array() += 1.0 - ws.g.array();
  Eigen::LLT<Eigen::MatrixXd> llt(c_inverse);
  if (llt.info() != Eigen::Success) {
    throw LinAlgError("sandwich workspace: C_i inverse is not SPD", obs.row);
  }
  ws.c = llt.solve(Eigen::MatrixXd::Identity(sdev.size(), sdev.size()));
  const Eigen::VectorXd one_minus_g =
      (1.0 - ws.g.array()).matrix();
  ws.e = ws.c.cwiseProduct(one_minus_g * one_minus_g.transpose());
  ws.e.diagonal() += ws.g;
  return ws;
}

Eigen::MatrixXd variational_hessian_inverse(const SandwichWorkspace& ws) {
  const Eigen::Index p = ws.a.size();
  const Eigen::ArrayXd inv_sqrt_a = ws.a.array().sqrt().inverse();
  const Eigen::ArrayXd sl = ws.s.array() * ws.lambda.array();  // D_s Lambda
  // Blocks of the middle matrix, scaled by D_a^{-1/2} on both sides.
  Eigen::MatrixXd out(2 * p, 2 * p);
  const Eigen::MatrixXd scaled_c =
      ws.c.cwiseProduct((inv_sqrt_a.matrix() * inv_sqrt_a.matrix().transpose()));
  out.topLeftCorner(p, p) = -scaled_c;
  out.topRightCorner(p, p) =
      scaled_c * sl.matrix().asDiagonal();  // +C D_s Lambda, sign folded in
  out.bottomLeftCorner(p, p) = out.topRightCorner(p, p).transpose();
  out.bottomRightCorner(p, p) =
      -(sl.matrix().asDiagonal() * scaled_c * sl.matrix().asDiagonal());
  out.bottomRightCorner(p, p).diagonal() -=
      (ws.lambda.array() * inv_sqrt_a.square()).matrix();
  return out;
}

Eigen::MatrixXd profiled_score_outer(const ModelParams& theta,
                                     const VariationalParams& vpar,
                                     const CountDataset& data) {
  return score_outer_impl(theta, vpar, data, true);
}

Eigen::MatrixXd profiled_hessian(const ModelParams& theta,
                                 const VariationalParams& vpar,
                                 const CountDataset& data) {
  return profiled_hessian_impl(theta, vpar, data, true);
}

namespace serial {
Eigen::MatrixXd profiled_score_outer(const ModelParams& theta,
                                     const VariationalParams& vpar,
                                     const CountDataset& data) {
  return score_outer_impl(theta, vpar, data, false);
}
Eigen::MatrixXd profiled_hessian(const ModelParams& theta,
                                 const VariationalParams& vpar,
                                 const CountDataset& data) {
  return profiled_hessian_impl(theta, vpar, data, false);
}
}  // namespace serial

std::size_t profiled_hessian_workspace_doubles(Eigen::Index p,
                                               Eigen::Index m) {
  // window of p x p inner matrices plus the mp x mp accumulator.
  return std::size_t(kReduceWindow) * std::size_t(p) * std::size_t(p) +
         std::size_t(m * p) * std::size_t(m * p);
}

VarianceReport fisher_variance(const ModelParams& theta,
                               const VariationalParams& vpar,
                               const CountDataset& data, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ParameterDomainError("fisher_variance: level must be in (0, 1)");
  }
  const FisherBlocks blocks = fisher_blocks(theta, vpar, data);
  const Eigen::Index p = data.p(), m = data.m();
  VarianceReport report;
  report.method = VarianceMethod::fisher;
  report.level = level;
  report.var_B.resize(m, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    Eigen::LLT<Eigen::MatrixXd> llt(blocks.b_blocks[size_t(j)]);
    if (llt.info() != Eigen::Success) {
      throw LinAlgError("fisher_variance: block " + std::to_string(j) +
                        " is singular (is X full rank?)");
    }
    const Eigen::MatrixXd inv =
        llt.solve(Eigen::MatrixXd::Identity(m, m));
    report.var_B.col(j) = inv.diagonal();
  }
  const Eigen::VectorXd om = theta.precision().diagonal();
  report.var_Omega = (2.0 / double(data.n())) * (om * om.transpose());
  finalize_report(report, theta.regression());
  return report;
}

VarianceReport sandwich_variance(const ModelParams& theta,
                                 const VariationalParams& vpar,
                                 const CountDataset& data, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ParameterDomainError("sandwich_variance: level must be in (0, 1)");
  }
  const Eigen::Index p = data.p(), m = data.m();
  VarianceReport report;
  report.method = VarianceMethod::sandwich;
  report.level = level;
  if (data.n() <= m * p) {
    report.warnings.push_back(
        "n <= m*p: the sandwich variance may be unstable; "
        "consider more samples or fewer covariates");
  }
  const Eigen::MatrixXd c_n = profiled_hessian(theta, vpar, data);
  const Eigen::MatrixXd d_n = profiled_score_outer(theta, vpar, data);
  Eigen::LLT<Eigen::MatrixXd> llt(Eigen::MatrixXd(-c_n));
  Eigen::MatrixXd c_inv_d;  // (-C)^{-1} D
  if (llt.info() == Eigen::Success) {
    c_inv_d = llt.solve(d_n);
  } else {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(c_n);
    if (!lu.isInvertible()) {
      throw LinAlgError(
          "sandwich_variance: C_n is singular; use a larger n or fewer "
          "covariates");
    }
    c_inv_d = -lu.solve(d_n);
  }
  // C^{-1} D C^{-1} = ((-C)^{-1} D) (-C)^{-1}; the sign squares away.
  Eigen::MatrixXd full;
  if (llt.info() == Eigen::Success) {
    full = llt.solve(c_inv_d.transpose()).transpose() / double(data.n());
  } else {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Eigen::MatrixXd(-c_n));
    full = lu.solve(c_inv_d.transpose()).transpose() / double(data.n());
  }
  full = 0.5 * (full + full.transpose());
  report.var_B.resize(m, p);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = 0; k < m; ++k) {
      report.var_B(k, j) = full(j * m + k, j * m + k);
    }
  }
  report.full_matrix = std::move(full);
  finalize_report(report, theta.regression());
  return report;
}

}  // namespace pln
