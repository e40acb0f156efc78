#include <doctest.h>

#include <cmath>

#include "pln/elbo.hpp"
#include "pln/errors.hpp"
#include "pln/fit.hpp"
#include "pln/parallel.hpp"
#include "pln/sim.hpp"
#include "test_helpers.hpp"

using namespace pln;

namespace {

// Unique root of m + exp(m + 1/(2(1-m))) = 0, the p=1 stationarity
// system with Y=0, o=0, x'B=0, Omega=1 (where s^2 = 1/(1-m)).
double profile_scalar_mean_oracle() {
  double lo = -10.0, hi = 0.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double f = mid + std::exp(mid + 0.5 / (1.0 - mid));
    (f > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

void check_fit_certificates(const CountDataset& data, const FitResult& fit_res,
                            const FitConfig& cfg) {
  // monotone trace
  for (std::size_t i = 1; i < fit_res.elbo_trace.size(); ++i) {
    CHECK(fit_res.elbo_trace[i] >= fit_res.elbo_trace[i - 1] - 1e-9);
  }
  // stationarity
  const auto g = grad_model(fit_res.theta_hat, fit_res.vpar_hat, data);
  const double xty_scale =
      (data.covariates().transpose() * data.counts()).cwiseAbs().maxCoeff();
  CHECK(g.regression.cwiseAbs().maxCoeff() <= 1e-5 * (1.0 + xty_scale));
  CHECK(g.precision.cwiseAbs().maxCoeff() <= 1e-6 * double(data.n()));
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const auto gv = grad_variational(
        fit_res.theta_hat, fit_res.vpar_hat.means().row(i).transpose(),
        fit_res.vpar_hat.sdevs().row(i).transpose(), observation(data, i));
    CHECK(gv.mean.cwiseAbs().maxCoeff() <= cfg.psi_grad_tol);
    CHECK(gv.sdev.cwiseAbs().maxCoeff() <= cfg.psi_grad_tol);
  }
  // closed-form covariance identity
  Eigen::MatrixXd moments = fit_res.vpar_hat.means().transpose() *
                            fit_res.vpar_hat.means() / double(data.n());
  moments.diagonal() += fit_res.vpar_hat.sbar2() / double(data.n());
  const double rel = (fit_res.theta_hat.covariance() - moments).norm() /
                     moments.norm();
  CHECK(rel <= 1e-6);
}

}  // namespace

TEST_CASE("init_params") {
  SUBCASE("all-zero counts give zero init") {
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(4, 2);
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(4, 1);
    const auto [theta, vpar] = init_params(CountDataset(y, x));
    CHECK(theta.regression().cwiseAbs().maxCoeff() == doctest::Approx(0.0));
    CHECK(vpar.means().cwiseAbs().maxCoeff() == doctest::Approx(0.0));
  }
  SUBCASE("identical rows leave no residual") {
    Eigen::MatrixXd y(3, 2);
    y << 4, 7, 4, 7, 4, 7;
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
    const auto [theta, vpar] = init_params(CountDataset(y, x));
    CHECK(vpar.means().cwiseAbs().maxCoeff() < 1e-12);
    CHECK((theta.covariance() - 1e-4 * Eigen::MatrixXd::Identity(2, 2))
              .cwiseAbs()
              .maxCoeff() < 1e-12);
  }
  SUBCASE("random instance yields an SPD covariance") {
    Rng rng(5);
    const auto inst = testing::random_instance(rng, 10, 3, 2);
    const auto [theta, vpar] = init_params(inst.data);
    Eigen::LLT<Eigen::MatrixXd> llt(theta.covariance());
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("profile_vpar") {
  const FitConfig cfg;
  Eigen::MatrixXd y(1, 1), x(1, 1);
  y << 0;
  x << 1;
  const CountDataset data(y, x);
  const Observation obs = observation(data, 0);
  const ModelParams theta(Eigen::MatrixXd::Zero(1, 1),
                          Eigen::MatrixXd::Identity(1, 1));

  SUBCASE("scalar case against the fixed-point oracle") {
    const double m_star = profile_scalar_mean_oracle();
    const double s_star = std::sqrt(1.0 / (1.0 - m_star));
    const VparRow prof = profile_vpar(
        theta, obs, {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)}, cfg);
    CHECK(prof.mean(0) == doctest::Approx(m_star).epsilon(1e-8));
    CHECK(prof.sdev(0) == doctest::Approx(s_star).epsilon(1e-8));
    // the published rounding of this point
    CHECK(prof.mean(0) == doctest::Approx(-0.6814).epsilon(2e-3));
    CHECK(prof.sdev(0) == doctest::Approx(0.7712).epsilon(2e-3));
  }
  SUBCASE("stationary init returned unchanged") {
    const VparRow first = profile_vpar(
        theta, obs, {Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1)}, cfg);
    const VparRow again = profile_vpar(theta, obs, first, cfg);
    CHECK(again.mean(0) == first.mean(0));
    CHECK(again.sdev(0) == first.sdev(0));
  }
  SUBCASE("two inits agree (uniqueness)") {
    const VparRow a = profile_vpar(
        theta, obs, {Eigen::VectorXd::Constant(1, 2.0),
                     Eigen::VectorXd::Constant(1, 3.0)}, cfg);
    const VparRow b = profile_vpar(
        theta, obs, {Eigen::VectorXd::Constant(1, -4.0),
                     Eigen::VectorXd::Constant(1, 0.05)}, cfg);
    CHECK(std::abs(a.mean(0) - b.mean(0)) < 1e-6);
    CHECK(std::abs(a.sdev(0) - b.sdev(0)) < 1e-6);
  }
  SUBCASE("iteration cap raises a profiling error with the row") {
    FitConfig strict = cfg;
    strict.max_psi_iters = 1;
    strict.psi_grad_tol = 1e-14;
    try {
      profile_vpar(theta, obs,
                   {Eigen::VectorXd::Constant(1, 5.0),
                    Eigen::VectorXd::Constant(1, 4.0)},
                   strict);
      FAIL("expected ProfilingError");
    } catch (const ProfilingError& ex) {
      CHECK(ex.row() == 0);
      CHECK(ex.grad_norm() > 0.0);
    }
  }
}

TEST_CASE("update_sigma") {
  SUBCASE("unit sdevs and zero means give the identity") {
    const VariationalParams vpar(Eigen::MatrixXd::Zero(4, 3),
                                 Eigen::MatrixXd::Ones(4, 3));
    CHECK((update_sigma(vpar) - Eigen::MatrixXd::Identity(3, 3))
              .cwiseAbs()
              .maxCoeff() == doctest::Approx(0.0));
  }
  SUBCASE("two-point example") {
    Eigen::MatrixXd m(2, 1), s(2, 1);
    m << 1, -1;
    s << 1, 1;
    const VariationalParams vpar(m, s);
    CHECK(update_sigma(vpar)(0, 0) == doctest::Approx(2.0).epsilon(1e-14));
  }
  SUBCASE("precision gradient vanishes at the update") {
    Rng rng(17);
    const auto inst = testing::random_instance(rng, 6, 3, 2);
    const Eigen::MatrixXd sigma = update_sigma(inst.vpar);
    const ModelParams theta =
        ModelParams::from_covariance(inst.theta.regression(), sigma);
    const auto g = grad_model(theta, inst.vpar, inst.data);
    CHECK(g.precision.cwiseAbs().maxCoeff() < 1e-10 * double(inst.data.n()));
  }
}

TEST_CASE("fit on simulated data") {
  set_thread_count(1);
  ScenarioConfig cfg;
  cfg.n = 500;
  cfg.p = 5;
  cfg.m = 2;
  cfg.rho = 0.85;
  cfg.seed = 313;
  const Scenario sc = generate_scenario(cfg);
  const CountDataset data = sample_counts(sc, 313);
  const FitConfig fit_cfg;
  const FitResult res = fit(data, fit_cfg);
  CHECK(res.converged);
  CHECK(rmse(res.theta_hat.regression(), sc.b_star) < 0.2);
  check_fit_certificates(data, res, fit_cfg);

  SUBCASE("bitwise deterministic rerun") {
    const FitResult res2 = fit(data, fit_cfg);
    CHECK(res2.elbo_trace == res.elbo_trace);
    CHECK((res2.theta_hat.regression() - res.theta_hat.regression())
              .cwiseAbs()
              .maxCoeff() == 0.0);
    CHECK((res2.vpar_hat.means() - res.vpar_hat.means())
              .cwiseAbs()
              .maxCoeff() == 0.0);
  }
  SUBCASE("profiling uniqueness at the fitted point") {
    Rng rng(999);
    for (int t = 0; t < 10; ++t) {
      const Eigen::Index i = Eigen::Index(rng.uniform01() * double(data.n()));
      const Observation obs = observation(data, i);
      Eigen::VectorXd m1(data.p()), s1(data.p()), m2(data.p()), s2(data.p());
      for (Eigen::Index j = 0; j < data.p(); ++j) {
        m1(j) = rng.normal();
        s1(j) = 0.2 + rng.uniform01();
        m2(j) = rng.normal();
        s2(j) = 0.2 + rng.uniform01();
      }
      const VparRow a = profile_vpar(res.theta_hat, obs, {m1, s1}, fit_cfg);
      const VparRow b = profile_vpar(res.theta_hat, obs, {m2, s2}, fit_cfg);
      CHECK((a.mean - b.mean).cwiseAbs().maxCoeff() < 1e-6);
      CHECK((a.sdev - b.sdev).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("fit handles an all-zero column") {
  // one-hot design: every coefficient of the dead column is a group
  // log-mean and drifts negative
  ScenarioConfig sc_cfg;
  sc_cfg.n = 60;
  sc_cfg.p = 3;
  sc_cfg.m = 2;
  sc_cfg.rho = 0.85;
  sc_cfg.seed = 21;
  const Scenario sc = generate_scenario(sc_cfg);
  Eigen::MatrixXd y = sample_counts(sc, 21).counts();
  y.col(1).setZero();
  const CountDataset data(y, sc.design);
  const FitResult res = fit(data, FitConfig{});
  REQUIRE(res.warnings.size() == 1);
  CHECK(res.warnings[0].find("column 1") != std::string::npos);
  CHECK(res.theta_hat.regression().col(1).maxCoeff() < 0.0);
  CHECK(res.theta_hat.regression().allFinite());
  for (std::size_t i = 1; i < res.elbo_trace.size(); ++i) {
    CHECK(res.elbo_trace[i] >= res.elbo_trace[i - 1] - 1e-9);
  }
}

TEST_CASE("fit respects the iteration cap without error") {
  Rng rng(22);
  const auto inst = testing::random_instance(rng, 30, 3, 2);
  FitConfig cfg;
  cfg.max_outer_iters = 1;
  cfg.outer_tol = 1e-15;
  const FitResult res = fit(inst.data, cfg);
  CHECK_FALSE(res.converged);
  CHECK(res.iterations == 1);
  CHECK(res.elbo_trace.size() == 1);
}

TEST_CASE("config validation") {
  FitConfig cfg;
  cfg.outer_tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), DimensionError);
  cfg = FitConfig{};
  cfg.max_outer_iters = 0;
  CHECK_THROWS_AS(cfg.validate(), DimensionError);
}
