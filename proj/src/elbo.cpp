#include "pln/elbo.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "pln/errors.hpp"
#include "pln/parallel.hpp"

namespace pln {
namespace {

constexpr double kOverflowLimit = 1e300;

void check_shapes(const ModelParams& theta, const VariationalParams& vpar,
                  const CountDataset& data) {
  if (theta.m() != data.m() || theta.p() != data.p() || vpar.n() != data.n() ||
      vpar.p() != data.p()) {
    throw DimensionError("parameters and dataset have inconsistent shapes");
  }
}

}  // namespace

ATilde compute_a_tilde(const ModelParams& theta, const VariationalParams& vpar,
                       const CountDataset& data) {
  check_shapes(theta, vpar, data);
  const Eigen::Index n = data.n(), p = data.p();
  ATilde out;
  out.values.resize(n, p);
  const Eigen::MatrixXd linear = data.covariates() * theta.regression();
  // Row-parallel elementwise kernel; disjoint writes.
  parallel_rows(n, [&](Eigen::Index i) {
    out.values.row(i) = (data.offsets().row(i) + linear.row(i) +
                         vpar.means().row(i) +
                         0.5 * vpar.sdevs().row(i).array().square().matrix())
                            .array()
                            .exp();
  });
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double v = out.values(i, j);
      if (!(v > 0.0) || !(v < kOverflowLimit)) {
        throw OverflowError("a_tilde overflow at cell (" + std::to_string(i) +
                                ", " + std::to_string(j) + ")",
                            i, j);
      }
    }
  }
  return out;
}

Eigen::VectorXd a_tilde_row(const ModelParams& theta,
                            const Eigen::VectorXd& mean,
                            const Eigen::VectorXd& sdev,
                            const Observation& obs) {
  Eigen::VectorXd a = (obs.o + theta.regression().transpose() * obs.x + mean +
                       0.5 * sdev.array().square().matrix())
                          .array()
                          .exp();
  for (Eigen::Index j = 0; j < a.size(); ++j) {
    if (!(a(j) > 0.0) || !(a(j) < kOverflowLimit)) {
      throw OverflowError("a_tilde overflow at cell (" +
                              std::to_string(obs.row) + ", " +
                              std::to_string(j) + ")",
                          obs.row, j);
    }
  }
  return a;
}

double elbo_single(const ModelParams& theta, const Eigen::VectorXd& mean,
                   const Eigen::VectorXd& sdev, const Observation& obs) {
  const Eigen::Index p = theta.p();
  const Eigen::VectorXd a = a_tilde_row(theta, mean, sdev, obs);
  const Eigen::VectorXd s2 = sdev.array().square();
  double value = obs.y.dot(obs.o + mean + theta.regression().transpose() * obs.x);
  value -= a.sum();
  value += obs.log_factorial;
  value += 0.5 * theta.log_det_precision();
  value -= 0.5 * mean.dot(theta.precision() * mean);
  value -= 0.5 * theta.precision().diagonal().dot(s2);
  value += sdev.array().log().sum();
  value += 0.5 * double(p);
  return value;
}

double elbo_total(const ModelParams& theta, const VariationalParams& vpar,
                  const CountDataset& data) {
  check_shapes(theta, vpar, data);
  const double n = double(data.n());
  const double p = double(data.p());
  const ATilde a = compute_a_tilde(theta, vpar, data);
  const Eigen::MatrixXd& M = vpar.means();
  double value =
      (data.counts().array() *
       (data.offsets() + M + data.covariates() * theta.regression()).array())
          .sum();
  value -= a.values.sum();
  value += data.log_factorial_sum();
  value += 0.5 * n * theta.log_det_precision();
  value -= 0.5 * (M * theta.precision()).cwiseProduct(M).sum();
  value -= 0.5 * theta.precision().diagonal().dot(vpar.sbar2());
  value += vpar.log_sdevs().sum();
  value += 0.5 * n * p;
  return value;
}

ModelGradient grad_model(const ModelParams& theta,
                         const VariationalParams& vpar,
                         const CountDataset& data) {
  check_shapes(theta, vpar, data);
  const double n = double(data.n());
  const ATilde a = compute_a_tilde(theta, vpar, data);
  ModelGradient g;
  g.regression = data.covariates().transpose() * (data.counts() - a.values);
  Eigen::MatrixXd mtm = vpar.means().transpose() * vpar.means();
  mtm.diagonal() += vpar.sbar2();
  g.precision = 0.5 * n * (theta.covariance() - mtm / n);
  return g;
}

VariationalGradient grad_variational(const ModelParams& theta,
                                     const Eigen::VectorXd& mean,
                                     const Eigen::VectorXd& sdev,
                                     const Observation& obs) {
  const Eigen::VectorXd a = a_tilde_row(theta, mean, sdev, obs);
  VariationalGradient g;
  g.mean = obs.y - a - theta.precision() * mean;
  g.sdev = (-sdev.array() * a.array() + sdev.array().inverse() -
            sdev.array() * theta.precision().diagonal().array())
               .matrix();
  return g;
}

VariationalHessianBlocks hess_variational(const ModelParams& theta,
                                          const Eigen::VectorXd& mean,
                                          const Eigen::VectorXd& sdev,
                                          const Observation& obs) {
  const Eigen::VectorXd a = a_tilde_row(theta, mean, sdev, obs);
  const Eigen::ArrayXd s = sdev.array();
  VariationalHessianBlocks h;
  h.mm = -theta.precision();
  h.mm.diagonal() -= a;
  h.ms = -(a.array() * s).matrix();
  h.ss = (-a.array() * (1.0 + s.square()) - s.square().inverse() -
          theta.precision().diagonal().array())
             .matrix();
  return h;
}

ObsRegressionDerivatives obs_regression_derivatives(const ModelParams& theta,
                                                    const Eigen::VectorXd& mean,
                                                    const Eigen::VectorXd& sdev,
                                                    const Observation& obs) {
  const Eigen::Index p = theta.p(), m = theta.m();
  const Eigen::VectorXd a = a_tilde_row(theta, mean, sdev, obs);
  const Eigen::MatrixXd xxt = obs.x * obs.x.transpose();
  ObsRegressionDerivatives d;
  d.gradient.resize(m * p);
  d.hessian = Eigen::MatrixXd::Zero(m * p, m * p);
  d.cross = Eigen::MatrixXd::Zero(m * p, 2 * p);
  for (Eigen::Index j = 0; j < p; ++j) {
    d.gradient.segment(j * m, m) = (obs.y(j) - a(j)) * obs.x;
    d.hessian.block(j * m, j * m, m, m) = -a(j) * xxt;
    d.cross.col(j).segment(j * m, m) = -a(j) * obs.x;
    d.cross.col(p + j).segment(j * m, m) = -a(j) * sdev(j) * obs.x;
  }
  return d;
}

namespace detail {

double elbo_single_guarded(const ModelParams& theta, const Eigen::VectorXd& mean,
                           const Eigen::VectorXd& sdev, const Observation& obs) {
  const Eigen::ArrayXd expo = (obs.o + theta.regression().transpose() * obs.x +
                               mean + 0.5 * sdev.array().square().matrix())
                                  .array();
  if ((expo > 690.0).any()) return -std::numeric_limits<double>::infinity();
  const Eigen::VectorXd a = expo.exp().matrix();
  const Eigen::VectorXd s2 = sdev.array().square();
  double value = obs.y.dot(obs.o + mean + theta.regression().transpose() * obs.x);
  value -= a.sum();
  value += obs.log_factorial;
  value += 0.5 * theta.log_det_precision();
  value -= 0.5 * mean.dot(theta.precision() * mean);
  value -= 0.5 * theta.precision().diagonal().dot(s2);
  value += sdev.array().log().sum();
  value += 0.5 * double(theta.p());
  return value;
}

}  // namespace detail

}  // namespace pln
