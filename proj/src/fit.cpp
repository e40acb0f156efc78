#include "pln/fit.hpp"

#include <cmath>
#include <exception>
#include <limits>
#include <string>

#include "pln/errors.hpp"
#include "pln/parallel.hpp"

namespace pln {
namespace {

constexpr double kJitterCap = 1e-2;

double guarded_exp_sum(const Eigen::ArrayXd& expo) {
  if ((expo > 690.0).any()) return std::numeric_limits<double>::infinity();
  return expo.exp().sum();
}

// ELBO on raw (M, S) state, trace form; used for the per-iteration trace.
double elbo_raw(const ModelParams& theta, const Eigen::MatrixXd& M,
                const Eigen::MatrixXd& S, const CountDataset& data) {
  const double n = double(data.n()), p = double(data.p());
  const Eigen::MatrixXd linear =
      data.offsets() + data.covariates() * theta.regression();
  double value = (data.counts().array() * (linear + M).array()).sum();
  value -= (linear + M + 0.5 * S.array().square().matrix())
               .array()
               .exp()
               .sum();
  value += data.log_factorial_sum();
  value += 0.5 * n * theta.log_det_precision();
  value -= 0.5 * (M * theta.precision()).cwiseProduct(M).sum();
  const Eigen::VectorXd sbar2 =
      S.array().square().colwise().sum().transpose().matrix();
  value -= 0.5 * theta.precision().diagonal().dot(sbar2);
  value += S.array().log().sum();
  value += 0.5 * n * p;
  return value;
}

Eigen::MatrixXd sigma_from_moments(const Eigen::MatrixXd& M,
                                   const Eigen::MatrixXd& S, double jitter0) {
  const double n = double(M.rows());
  Eigen::MatrixXd sigma = (M.transpose() * M) / n;
  sigma.diagonal() +=
      (S.array().square().colwise().sum().transpose() / n).matrix();
  sigma = 0.5 * (sigma + sigma.transpose());
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() == Eigen::Success) return sigma;
  for (double jit = jitter0; jit <= kJitterCap * (1.0 + 1e-12); jit *= 10.0) {
    Eigen::MatrixXd repaired = sigma;
    repaired.diagonal().array() += jit;
    llt.compute(repaired);
    if (llt.info() == Eigen::Success) return repaired;
  }
  throw SpdRepairError(
      "covariance update is not positive definite even after jitter 1e-2");
}

// One damped Newton pass over column j of the regression block. The
// column objective is a Poisson log-likelihood with offset
// c_i = o_ij + m_ij + s_ij^2/2; its Hessian is -X' D_{A_.j} X.
void newton_regression_column(const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& y_col,
                              const Eigen::ArrayXd& offset_col,
                              Eigen::Ref<Eigen::VectorXd> b, double grad_tol,
                              const FitConfig& cfg) {
  const auto objective = [&](const Eigen::VectorXd& bj) {
    const Eigen::ArrayXd eta = (X * bj).array() + offset_col;
    const double exp_sum = guarded_exp_sum(eta);
    if (!std::isfinite(exp_sum))
      return -std::numeric_limits<double>::infinity();
    return y_col.dot((X * bj)) - exp_sum;
  };
  Eigen::VectorXd bj = b;
  double obj = objective(bj);
  for (int it = 0; it < 50; ++it) {
    const Eigen::ArrayXd rate = ((X * bj).array() + offset_col).exp();
    const Eigen::VectorXd grad =
        X.transpose() * (y_col - rate.matrix());
    if (grad.cwiseAbs().maxCoeff() <= grad_tol) break;
    const Eigen::MatrixXd hess =
        X.transpose() * rate.matrix().asDiagonal() * X;
    Eigen::LLT<Eigen::MatrixXd> llt(hess);
    Eigen::VectorXd dir;
    if (llt.info() == Eigen::Success) {
      dir = llt.solve(grad);
    } else {
      dir = hess.ldlt().solve(grad);
    }
    double step = 1.0;
    bool accepted = false;
    for (int h = 0; h <= cfg.max_halvings; ++h) {
      const Eigen::VectorXd trial = bj + step * dir;
      const double trial_obj = objective(trial);
      if (trial_obj >= obj - 1e-12 * (1.0 + std::abs(obj))) {
        bj = trial;
        obj = trial_obj;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  b = bj;
}

struct FitState {
  ModelParams theta;
  Eigen::MatrixXd M, S;
};

void regression_update(FitState& st, const CountDataset& data,
                       const FitConfig& cfg, double grad_tol) {
  const Eigen::Index p = data.p();
  Eigen::MatrixXd B = st.theta.regression();
  for (Eigen::Index j = 0; j < p; ++j) {
    const Eigen::ArrayXd offset_col = data.offsets().col(j).array() +
                                      st.M.col(j).array() +
                                      0.5 * st.S.col(j).array().square();
    Eigen::VectorXd bj = B.col(j);
    newton_regression_column(data.covariates(), data.counts().col(j),
                             offset_col, bj, grad_tol, cfg);
    B.col(j) = bj;
  }
  st.theta.set_regression(std::move(B));
}

// Max inf-norm of the per-row (m, s) gradients at the current state.
double max_row_gradient(const FitState& st, const CountDataset& data) {
  const Eigen::MatrixXd linear =
      data.offsets() + data.covariates() * st.theta.regression();
  const Eigen::MatrixXd a =
      (linear + st.M + 0.5 * st.S.array().square().matrix())
          .array()
          .exp();
  const Eigen::MatrixXd gm =
      data.counts() - a - st.M * st.theta.precision();
  const Eigen::ArrayXXd s = st.S.array();
  const Eigen::ArrayXXd gs =
      -s * a.array() + s.inverse() -
      s.rowwise() * st.theta.precision().diagonal().transpose().array();
  return std::max(gm.cwiseAbs().maxCoeff(), gs.abs().maxCoeff());
}

}  // namespace

void FitConfig::validate() const {
  if (!(outer_tol > 0.0) || !(psi_grad_tol > 0.0) || !(jitter > 0.0)) {
    throw DimensionError("fit config: tolerances must be positive");
  }
  if (max_outer_iters < 1 || max_psi_iters < 1 || max_halvings < 1) {
    throw DimensionError("fit config: iteration caps must be at least 1");
  }
}

std::pair<ModelParams, VariationalParams> init_params(
    const CountDataset& data) {
  const double n = double(data.n());
  const Eigen::MatrixXd target =
      (data.counts().array() + 1.0).log().matrix() - data.offsets();
  const Eigen::MatrixXd b0 =
      data.covariates().colPivHouseholderQr().solve(target);
  const Eigen::MatrixXd m0 = target - data.covariates() * b0;
  Eigen::MatrixXd sigma0 = (m0.transpose() * m0) / n;
  sigma0.diagonal().array() += 1e-4;
  const Eigen::MatrixXd s0 =
      Eigen::MatrixXd::Constant(data.n(), data.p(), 0.1);
  return {ModelParams::from_covariance(b0, sigma0),
          VariationalParams(m0, s0)};
}

VparRow profile_vpar(const ModelParams& theta, const Observation& obs,
                     const VparRow& init, const FitConfig& cfg) {
  cfg.validate();
  if ((init.sdev.array() <= 0.0).any()) {
    throw ParameterDomainError("profile_vpar: initial sdevs must be positive");
  }
  const Eigen::Index p = theta.p();
  Eigen::VectorXd mean = init.mean;
  Eigen::VectorXd logs = init.sdev.array().log();
  Eigen::VectorXd sdev = init.sdev;

  double grad_norm = std::numeric_limits<double>::infinity();
  for (int it = 0; it <= cfg.max_psi_iters; ++it) {
    const VariationalGradient g = grad_variational(theta, mean, sdev, obs);
    grad_norm = std::max(g.mean.cwiseAbs().maxCoeff(),
                         g.sdev.cwiseAbs().maxCoeff());
    if (grad_norm < cfg.psi_grad_tol) return {mean, sdev};
    if (it == cfg.max_psi_iters) break;

    // Newton system in (m, t = log s), blocks chained from the (m, s)
    // Hessian: negated it reads [[D_a + Omega, D_c], [D_c, D_h]] with
    // c = a s^2 and h = s^2 (a (2 + s^2) + 2 diag(Omega)).
    const VariationalHessianBlocks hb = hess_variational(theta, mean, sdev, obs);
    const Eigen::ArrayXd s = sdev.array();
    const Eigen::ArrayXd gt = s * g.sdev.array();
    const Eigen::ArrayXd c = -s * hb.ms.array();            // a s^2
    const Eigen::ArrayXd h = -(s * g.sdev.array() + s.square() * hb.ss.array());
    Eigen::MatrixXd schur = -hb.mm;
    schur -= (c.square() / h).matrix().asDiagonal();
    const Eigen::VectorXd rhs = g.mean - (c * gt / h).matrix();
    Eigen::LLT<Eigen::MatrixXd> llt(schur);
    Eigen::VectorXd dm(p);
    if (llt.info() == Eigen::Success) {
      dm = llt.solve(rhs);
    } else {
      dm = schur.ldlt().solve(rhs);
    }
    const Eigen::VectorXd dt = ((gt - c * dm.array()) / h).matrix();

    const double current = detail::elbo_single_guarded(theta, mean, sdev, obs);
    double step = 1.0;
    bool accepted = false;
    for (int hlv = 0; hlv <= cfg.max_halvings; ++hlv) {
      const Eigen::VectorXd mean_try = mean + step * dm;
      const Eigen::VectorXd logs_try = logs + step * dt;
      const Eigen::VectorXd sdev_try = logs_try.array().exp();
      const double value =
          detail::elbo_single_guarded(theta, mean_try, sdev_try, obs);
      if (value >= current - 1e-12 * (1.0 + std::abs(current))) {
        mean = mean_try;
        logs = logs_try;
        sdev = sdev_try;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;  // stalled at numerical stationarity
  }
  {
    const VariationalGradient g = grad_variational(theta, mean, sdev, obs);
    grad_norm = std::max(g.mean.cwiseAbs().maxCoeff(),
                         g.sdev.cwiseAbs().maxCoeff());
    if (grad_norm < cfg.psi_grad_tol) return {mean, sdev};
  }
  throw ProfilingError("profile_vpar: row " + std::to_string(obs.row) +
                           " did not reach gradient tolerance (|g| = " +
                           std::to_string(grad_norm) + ")",
                       obs.row, grad_norm);
}

Eigen::MatrixXd update_sigma(const VariationalParams& vpar,
                             const FitConfig& cfg) {
  cfg.validate();
  return sigma_from_moments(vpar.means(), vpar.sdevs(), cfg.jitter);
}

namespace {

void profile_rows_impl(const ModelParams& theta, const CountDataset& data,
                       Eigen::MatrixXd& means, Eigen::MatrixXd& sdevs,
                       const FitConfig& cfg, bool use_openmp) {
  const Eigen::Index n = data.n();
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  const auto run_row = [&](Eigen::Index i) {
    try {
      const Observation obs = observation(data, i);
      const VparRow prof = profile_vpar(
          theta, obs, {means.row(i).transpose(), sdevs.row(i).transpose()},
          cfg);
      means.row(i) = prof.mean.transpose();
      sdevs.row(i) = prof.sdev.transpose();
    } catch (...) {
      errors[size_t(i)] = std::current_exception();
    }
  };
  if (use_openmp) {
    parallel_rows(n, run_row);
  } else {
    for (Eigen::Index i = 0; i < n; ++i) run_row(i);
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (errors[size_t(i)]) std::rethrow_exception(errors[size_t(i)]);
  }
}

}  // namespace

void profile_all_rows(const ModelParams& theta, const CountDataset& data,
                      Eigen::MatrixXd& means, Eigen::MatrixXd& sdevs,
                      const FitConfig& cfg) {
  profile_rows_impl(theta, data, means, sdevs, cfg, true);
}

namespace serial {
void profile_all_rows(const ModelParams& theta, const CountDataset& data,
                      Eigen::MatrixXd& means, Eigen::MatrixXd& sdevs,
                      const FitConfig& cfg) {
  profile_rows_impl(theta, data, means, sdevs, cfg, false);
}
}  // namespace serial

FitResult fit(const CountDataset& data, const FitConfig& cfg) {
  auto [theta0, vpar0] = init_params(data);
  return fit(data, cfg, theta0, vpar0);
}

FitResult fit(const CountDataset& data, const FitConfig& cfg,
              const ModelParams& theta0, const VariationalParams& vpar0) {
  cfg.validate();
  if (theta0.m() != data.m() || theta0.p() != data.p() ||
      vpar0.n() != data.n() || vpar0.p() != data.p()) {
    throw DimensionError("fit: initial parameters do not match the dataset");
  }

  FitState st{theta0, vpar0.means(), vpar0.sdevs()};
  std::vector<std::string> warnings;
  for (Eigen::Index j = 0; j < data.p(); ++j) {
    if (data.counts().col(j).sum() == 0.0) {
      warnings.push_back("counts column " + std::to_string(j) +
                         " is all zero; its coefficients drift to large "
                         "negative values and are iteration-capped");
    }
  }

  const double grad_tol_B =
      1e-7 * (1.0 + (data.covariates().transpose() * data.counts())
                        .cwiseAbs()
                        .maxCoeff());
  const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> x_qr(data.covariates());

  std::vector<double> trace;
  trace.reserve(size_t(cfg.max_outer_iters) + 2);
  double previous = elbo_raw(st.theta, st.M, st.S, data);
  bool converged = false;
  int iterations = 0;

  for (int outer = 1; outer <= cfg.max_outer_iters; ++outer) {
    iterations = outer;
    profile_all_rows(st.theta, data, st.M, st.S, cfg);
    // Move the covariate-explained part of M into B. This keeps XB + M
    // (hence every Poisson term) fixed and maximizes the Gaussian
    // quadratic exactly, killing the slow B/M zigzag.
    {
      const Eigen::MatrixXd shift = x_qr.solve(st.M);
      st.theta.set_regression(st.theta.regression() + shift);
      st.M -= data.covariates() * shift;
    }
    st.theta = ModelParams::from_covariance(
        st.theta.regression(), sigma_from_moments(st.M, st.S, cfg.jitter));
    regression_update(st, data, cfg, grad_tol_B);

    const double value = elbo_raw(st.theta, st.M, st.S, data);
    trace.push_back(value);
    if (std::abs(value - previous) / (1.0 + std::abs(value)) < cfg.outer_tol) {
      converged = true;
      previous = value;
      break;
    }
    previous = value;
  }

  if (converged) {
    // Final polish: re-profile and refresh Sigma until the rows are
    // stationary at the returned theta, so (theta, psi) is a certified
    // profiled pair.
    for (int round = 0; round < 50; ++round) {
      profile_all_rows(st.theta, data, st.M, st.S, cfg);
      st.theta = ModelParams::from_covariance(
          st.theta.regression(), sigma_from_moments(st.M, st.S, cfg.jitter));
      if (max_row_gradient(st, data) < cfg.psi_grad_tol) break;
    }
    trace.push_back(elbo_raw(st.theta, st.M, st.S, data));
  }

  FitResult result{std::move(st.theta), VariationalParams(st.M, st.S),
                   std::move(trace), converged, iterations,
                   std::move(warnings)};
  return result;
}

}  // namespace pln
