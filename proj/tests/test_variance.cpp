#include <doctest.h>

#include <cmath>

#include "pln/errors.hpp"
#include "pln/fit.hpp"
#include "pln/stats.hpp"
#include "pln/variance.hpp"
#include "test_helpers.hpp"

using namespace pln;

namespace {

const double kE12 = std::exp(0.5);

CountDataset scalar_data(double y, double o = 0.0) {
  Eigen::MatrixXd ym(1, 1), xm(1, 1), om(1, 1);
  ym << y;
  xm << 1.0;
  om << o;
  return CountDataset(ym, xm, om);
}

ModelParams scalar_theta(double b, double omega) {
  Eigen::MatrixXd bm(1, 1), wm(1, 1);
  bm << b;
  wm << omega;
  return ModelParams(bm, wm);
}

VariationalParams scalar_vpar(double m, double s) {
  Eigen::MatrixXd mm(1, 1), sm(1, 1);
  mm << m;
  sm << s;
  return VariationalParams(mm, sm);
}

// duplicate every row of a dataset / variational state
CountDataset duplicate_rows(const CountDataset& data) {
  const Eigen::Index n = data.n();
  Eigen::MatrixXd y(2 * n, data.p()), x(2 * n, data.m()), o(2 * n, data.p());
  y << data.counts(), data.counts();
  x << data.covariates(), data.covariates();
  o << data.offsets(), data.offsets();
  return CountDataset(y, x, o);
}

VariationalParams duplicate_rows(const VariationalParams& vpar) {
  Eigen::MatrixXd m(2 * vpar.n(), vpar.p()), s(2 * vpar.n(), vpar.p());
  m << vpar.means(), vpar.means();
  s << vpar.sdevs(), vpar.sdevs();
  return VariationalParams(m, s);
}

}  // namespace

TEST_CASE("fisher variance closed forms") {
  SUBCASE("scalar inverse") {
    const auto report = fisher_variance(scalar_theta(0, 1), scalar_vpar(0, 1),
                                        scalar_data(0));
    CHECK(report.var_B(0, 0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
    REQUIRE(report.var_Omega.has_value());
    CHECK(report.ci_lower(0, 0) < report.ci_upper(0, 0));
    // bounds reproduce B -/+ z sqrt(var) exactly
    const double z = normal_quantile(0.975);
    CHECK(report.ci_upper(0, 0) == z * std::sqrt(report.var_B(0, 0)));
  }
  SUBCASE("omega variances at the identity") {
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(2, 2);
    Eigen::MatrixXd x = Eigen::MatrixXd::Ones(2, 1);
    const CountDataset data(y, x);
    const VariationalParams vpar(Eigen::MatrixXd::Zero(2, 2),
                                 Eigen::MatrixXd::Ones(2, 2));
    const ModelParams theta(Eigen::MatrixXd::Zero(1, 2),
                            Eigen::MatrixXd::Identity(2, 2));
    const auto report = fisher_variance(theta, vpar, data);
    REQUIRE(report.var_Omega.has_value());
    CHECK((report.var_Omega->array() - 1.0).abs().maxCoeff() <
          1e-14);  // (2/2) * 1 * 1
  }
  SUBCASE("duplicating the dataset halves the variances") {
    Rng rng(41);
    const auto inst = testing::random_instance(rng, 6, 3, 2);
    const auto base = fisher_variance(inst.theta, inst.vpar, inst.data);
    const auto doubled = fisher_variance(inst.theta, duplicate_rows(inst.vpar),
                                         duplicate_rows(inst.data));
    CHECK(((doubled.var_B.array() * 2.0) / base.var_B.array() - 1.0)
              .abs()
              .maxCoeff() < 1e-10);
  }
  SUBCASE("fisher blocks are SPD and the omega block is materializable") {
    Rng rng(42);
    const auto inst = testing::random_instance(rng, 6, 3, 2);
    const auto blocks = fisher_blocks(inst.theta, inst.vpar, inst.data);
    for (const auto& block : blocks.b_blocks) {
      Eigen::LLT<Eigen::MatrixXd> llt(block);
      CHECK(llt.info() == Eigen::Success);
    }
    const Eigen::MatrixXd dense = blocks.omega_block_dense();
    CHECK(dense.rows() == 9);
    // diagonal of the inverse closed form: (2/n) Omega_kk Omega_ll
    // corresponds to inverting this block
    const Eigen::MatrixXd inv = dense.partialPivLu().solve(
        Eigen::MatrixXd::Identity(9, 9));
    const double direct = (2.0 / double(inst.data.n())) *
                          inst.theta.precision()(1, 1) *
                          inst.theta.precision()(2, 2);
    CHECK(inv(2 * 3 + 1, 2 * 3 + 1) == doctest::Approx(direct).epsilon(1e-8));
  }
}

TEST_CASE("profiled score outer product (D_n)") {
  SUBCASE("trivial point") {
    const Eigen::MatrixXd d = profiled_score_outer(
        scalar_theta(0, 1), scalar_vpar(0, 1), scalar_data(0));
    CHECK(d(0, 0) == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
  }
  SUBCASE("zero residuals give the zero matrix") {
    const Eigen::MatrixXd d = profiled_score_outer(
        scalar_theta(0, 1), scalar_vpar(0, 1e-300),
        scalar_data(2, std::log(2.0)));
    CHECK(d.cwiseAbs().maxCoeff() < 1e-24);
  }
  SUBCASE("residuals (1, -1) average to one") {
    Eigen::MatrixXd y(2, 1), x(2, 1), o(2, 1);
    y << 2, 0;
    x << 1, 1;
    o.setZero();
    const CountDataset data(y, x, o);
    const VariationalParams vpar(Eigen::MatrixXd::Zero(2, 1),
                                 Eigen::MatrixXd::Constant(2, 1, 1e-300));
    const Eigen::MatrixXd d =
        profiled_score_outer(scalar_theta(0, 1), vpar, data);
    CHECK(d(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("symmetric PSD with rank at most min(n, mp)") {
    Rng rng(51);
    const auto inst = testing::random_instance(rng, 3, 4, 2);  // mp=8 > n=3
    const Eigen::MatrixXd d =
        profiled_score_outer(inst.theta, inst.vpar, inst.data);
    CHECK((d - d.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(d);
    const double tol = 1e-10 * svd.singularValues()(0);
    int rank = 0;
    for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i) {
      if (svd.singularValues()(i) > tol) ++rank;
    }
    CHECK(rank <= 3);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d);
    CHECK(es.eigenvalues().minCoeff() > -1e-10);
  }
}

TEST_CASE("closed-form inverse of the variational Hessian") {
  SUBCASE("scalar trivial point against 2x2 numerics") {
    const auto ws = build_sandwich_workspace(
        scalar_theta(0, 1), Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1),
        observation(scalar_data(0), 0));
    const Eigen::MatrixXd inv = variational_hessian_inverse(ws);
    Eigen::MatrixXd h(2, 2);
    h << -(kE12 + 1.0), -kE12, -kE12, -(2.0 * kE12 + 2.0);
    const Eigen::MatrixXd numeric =
        h.partialPivLu().solve(Eigen::MatrixXd::Identity(2, 2));
    CHECK((inv - numeric).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((inv * h - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() <
          1e-10);
  }
  SUBCASE("small-sdev limit recovers -(D_a + Omega)^{-1} in the mean block") {
    Rng rng(61);
    const auto inst = testing::random_instance(rng, 1, 3, 1);
    const Observation obs = observation(inst.data, 0);
    const Eigen::VectorXd mean = inst.vpar.means().row(0).transpose();
    const Eigen::VectorXd sdev = Eigen::VectorXd::Constant(3, 1e-8);
    const auto ws = build_sandwich_workspace(inst.theta, mean, sdev, obs);
    CHECK(ws.lambda.cwiseAbs().maxCoeff() < 1e-10);
    const Eigen::MatrixXd inv = variational_hessian_inverse(ws);
    Eigen::MatrixXd da_omega = inst.theta.precision();
    da_omega.diagonal() += ws.a;
    const Eigen::MatrixXd expected =
        -da_omega.llt().solve(Eigen::MatrixXd::Identity(3, 3));
    CHECK((inv.topLeftCorner(3, 3) - expected).cwiseAbs().maxCoeff() < 1e-6);
  }
  SUBCASE("ten random points: closed form equals dense inversion") {
    Rng rng(62);
    for (int t = 0; t < 10; ++t) {
      const Eigen::Index p = 2 + Eigen::Index(rng.uniform01() * 7);  // <= 8
      const auto inst = testing::random_instance(rng, 2, p, 2);
      const Observation obs = observation(inst.data, 0);
      const Eigen::VectorXd mean = inst.vpar.means().row(0).transpose();
      const Eigen::VectorXd sdev = inst.vpar.sdevs().row(0).transpose();
      const auto ws = build_sandwich_workspace(inst.theta, mean, sdev, obs);
      CHECK((ws.g.array() >= 0.0).all());
      CHECK((ws.g.array() < 1.0).all());
      const Eigen::MatrixXd inv = variational_hessian_inverse(ws);
      const Eigen::MatrixXd h =
          hess_variational(inst.theta, mean, sdev, obs).assembled();
      const Eigen::MatrixXd numeric =
          h.partialPivLu().solve(Eigen::MatrixXd::Identity(2 * p, 2 * p));
      CHECK((inv - numeric).cwiseAbs().maxCoeff() <= 1e-8);
      CHECK((inv * h - Eigen::MatrixXd::Identity(2 * p, 2 * p))
                .cwiseAbs()
                .maxCoeff() <= 1e-8);
    }
  }
}

TEST_CASE("profiled hessian (C_n)") {
  SUBCASE("scalar trivial point") {
    const Eigen::MatrixXd c = profiled_hessian(
        scalar_theta(0, 1), scalar_vpar(0, 1), scalar_data(0));
    const double inner = 1.0 + std::exp(-0.5) + 1.0 / (2.0 + kE12);
    CHECK(c(0, 0) == doctest::Approx(-1.0 / inner).epsilon(1e-10));
    CHECK(c(0, 0) == doctest::Approx(-0.5317).epsilon(2e-4));
  }
  SUBCASE("does not depend on the counts at fixed parameters") {
    Rng rng(71);
    const auto inst = testing::random_instance(rng, 5, 3, 2);
    const Eigen::MatrixXd base =
        profiled_hessian(inst.theta, inst.vpar, inst.data);
    Eigen::MatrixXd y2 = inst.data.counts();
    y2.array() += 3.0;  // different counts, same (theta, psi)
    const CountDataset perturbed(y2, inst.data.covariates(),
                                 inst.data.offsets());
    const Eigen::MatrixXd same =
        profiled_hessian(inst.theta, inst.vpar, perturbed);
    CHECK((base - same).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("equals the brute-force Schur complement") {
    Rng rng(72);
    const auto inst = testing::random_instance(rng, 6, 4, 2);
    const Eigen::MatrixXd closed =
        profiled_hessian(inst.theta, inst.vpar, inst.data);
    const Eigen::MatrixXd brute =
        testing::brute_force_profiled_hessian(inst.theta, inst.vpar, inst.data);
    const double scale = brute.cwiseAbs().maxCoeff();
    CHECK((closed - brute).cwiseAbs().maxCoeff() <= 1e-6 * scale);
  }
  SUBCASE("negative definite") {
    Rng rng(73);
    const auto inst = testing::random_instance(rng, 8, 3, 2);
    const Eigen::MatrixXd c =
        profiled_hessian(inst.theta, inst.vpar, inst.data);
    Eigen::LLT<Eigen::MatrixXd> llt(Eigen::MatrixXd(-c));
    CHECK(llt.info() == Eigen::Success);
  }
}

TEST_CASE("sandwich variance") {
  SUBCASE("scalar composition of D and C") {
    const auto report = sandwich_variance(scalar_theta(0, 1), scalar_vpar(0, 1),
                                          scalar_data(0));
    const double inner = 1.0 + std::exp(-0.5) + 1.0 / (2.0 + kE12);
    const double expected = std::exp(1.0) * inner * inner;
    CHECK(report.var_B(0, 0) == doctest::Approx(expected).epsilon(1e-9));
    // half-width ~ 1.95996 * sqrt(var); the published rounding is 6.077
    const double half =
        0.5 * (report.ci_upper(0, 0) - report.ci_lower(0, 0));
    CHECK(half == doctest::Approx(normal_quantile(0.975) * std::sqrt(expected))
                      .epsilon(1e-9));
    CHECK(half == doctest::Approx(6.077).epsilon(2e-3));
    REQUIRE(report.full_matrix.has_value());
    CHECK(report.full_matrix->rows() == 1);
    // n = 1 = mp triggers the small-sample warning
    CHECK(!report.warnings.empty());
  }
  SUBCASE("covariate scaling by c scales the variance by 1/c^2") {
    // with B = 0 the rates are unchanged by the rescaled design
    Eigen::MatrixXd y(4, 1), x(4, 1), o(4, 1);
    y << 1, 0, 2, 1;
    x << 1, 1, 1, 1;
    o.setZero();
    Eigen::MatrixXd m(4, 1), s(4, 1);
    m << 0.1, -0.2, 0.3, 0.0;
    s << 0.5, 0.7, 0.6, 0.9;
    const VariationalParams vpar(m, s);
    const CountDataset data(y, x, o);
    const CountDataset scaled(y, 3.0 * x, o);
    const auto base = sandwich_variance(scalar_theta(0, 1), vpar, data);
    const auto rescaled = sandwich_variance(scalar_theta(0, 1), vpar, scaled);
    CHECK(rescaled.var_B(0, 0) ==
          doctest::Approx(base.var_B(0, 0) / 9.0).epsilon(1e-10));
  }
  SUBCASE("duplicating the dataset leaves C and D fixed, halves variances") {
    Rng rng(81);
    const auto inst = testing::random_instance(rng, 10, 3, 2);
    const auto vpar2 = duplicate_rows(inst.vpar);
    const auto data2 = duplicate_rows(inst.data);
    const Eigen::MatrixXd c1 =
        profiled_hessian(inst.theta, inst.vpar, inst.data);
    const Eigen::MatrixXd c2 = profiled_hessian(inst.theta, vpar2, data2);
    CHECK((c1 - c2).cwiseAbs().maxCoeff() < 1e-12);
    const Eigen::MatrixXd d1 =
        profiled_score_outer(inst.theta, inst.vpar, inst.data);
    const Eigen::MatrixXd d2 = profiled_score_outer(inst.theta, vpar2, data2);
    CHECK((d1 - d2).cwiseAbs().maxCoeff() < 1e-12);
    const auto v1 = sandwich_variance(inst.theta, inst.vpar, inst.data);
    const auto v2 = sandwich_variance(inst.theta, vpar2, data2);
    CHECK(((v2.var_B.array() * 2.0) / v1.var_B.array() - 1.0)
              .abs()
              .maxCoeff() < 1e-9);
  }
  SUBCASE("level flows into the quantile") {
    const auto r95 = sandwich_variance(scalar_theta(0, 1), scalar_vpar(0, 1),
                                       scalar_data(0), 0.95);
    const auto r99 = sandwich_variance(scalar_theta(0, 1), scalar_vpar(0, 1),
                                       scalar_data(0), 0.99);
    CHECK(r99.ci_upper(0, 0) > r95.ci_upper(0, 0));
    CHECK_THROWS_AS(sandwich_variance(scalar_theta(0, 1), scalar_vpar(0, 1),
                                      scalar_data(0), 1.5),
                    ParameterDomainError);
  }
}

TEST_CASE("workspace size is independent of n") {
  const std::size_t w1 = profiled_hessian_workspace_doubles(25, 2);
  const std::size_t w2 = profiled_hessian_workspace_doubles(50, 2);
  CHECK(w1 > 0);
  // O(window p^2 + (mp)^2): the p-doubling factor is bounded by 4
  CHECK(double(w2) / double(w1) <= 4.0 + 1e-12);
}
