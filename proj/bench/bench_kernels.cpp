// Times the OpenMP kernels against their serial reference twins on a
// synthetic fit point and checks that the results agree bitwise.

#include <chrono>
#include <cstdio>
#include <functional>

#include "pln/elbo.hpp"
#include "pln/fit.hpp"
#include "pln/parallel.hpp"
#include "pln/sim.hpp"
#include "pln/variance.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double best_of(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = Clock::now();
    fn();
    const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
    if (dt < best) best = dt;
  }
  return best;
}

void report(const char* name, double serial_s, double parallel_s,
            double max_abs_diff) {
  std::printf("%-24s serial %9.4f s   openmp %9.4f s   speedup %5.2fx   "
              "max|diff| %g\n",
              name, serial_s, parallel_s, serial_s / parallel_s, max_abs_diff);
}

}  // namespace

int main(int argc, char** argv) {
  Eigen::Index n = 2000, p = 30, m = 2;
  if (argc == 4) {
    n = std::atol(argv[1]);
    p = std::atol(argv[2]);
    m = std::atol(argv[3]);
  }
  std::printf("kernel benchmark: n=%ld p=%ld m=%ld, %d thread(s)\n", long(n),
              long(p), long(m), pln::detail::resolved_threads());

  pln::ScenarioConfig cfg;
  cfg.n = n;
  cfg.p = p;
  cfg.m = m;
  cfg.rho = 0.9;
  cfg.seed = 42;
  const pln::Scenario scenario = pln::generate_scenario(cfg);
  const pln::CountDataset data = pln::sample_counts(scenario, cfg.seed);
  auto [theta, vpar] = pln::init_params(data);
  const pln::FitConfig fit_cfg;

  // One profiling pass as the common workload state.
  Eigen::MatrixXd means = vpar.means(), sdevs = vpar.sdevs();
  pln::profile_all_rows(theta, data, means, sdevs, fit_cfg);
  const pln::VariationalParams profiled(means, sdevs);

  {
    Eigen::MatrixXd m_serial, s_serial, m_par, s_par;
    const double ts = best_of(3, [&] {
      m_serial = vpar.means();
      s_serial = vpar.sdevs();
      pln::serial::profile_all_rows(theta, data, m_serial, s_serial, fit_cfg);
    });
    const double tp = best_of(3, [&] {
      m_par = vpar.means();
      s_par = vpar.sdevs();
      pln::profile_all_rows(theta, data, m_par, s_par, fit_cfg);
    });
    const double diff =
        std::max((m_serial - m_par).cwiseAbs().maxCoeff(),
                 (s_serial - s_par).cwiseAbs().maxCoeff());
    report("profile_all_rows", ts, tp, diff);
  }
  {
    Eigen::MatrixXd serial_out, parallel_out;
    const double ts = best_of(3, [&] {
      serial_out = pln::serial::profiled_hessian(theta, profiled, data);
    });
    const double tp = best_of(
        3, [&] { parallel_out = pln::profiled_hessian(theta, profiled, data); });
    report("profiled_hessian", ts, tp,
           (serial_out - parallel_out).cwiseAbs().maxCoeff());
  }
  {
    Eigen::MatrixXd serial_out, parallel_out;
    const double ts = best_of(3, [&] {
      serial_out = pln::serial::profiled_score_outer(theta, profiled, data);
    });
    const double tp = best_of(3, [&] {
      parallel_out = pln::profiled_score_outer(theta, profiled, data);
    });
    report("profiled_score_outer", ts, tp,
           (serial_out - parallel_out).cwiseAbs().maxCoeff());
  }
  {
    pln::ScenarioConfig small = cfg;
    small.n = 150;
    small.p = 5;
    small.replicates = 6;
    pln::CoverageReport serial_rep, parallel_rep;
    const double ts = best_of(
        1, [&] { serial_rep = pln::serial::run_coverage_experiment(small); });
    const double tp =
        best_of(1, [&] { parallel_rep = pln::run_coverage_experiment(small); });
    report("coverage_experiment", ts, tp,
           std::abs(serial_rep.sandwich.coverage -
                    parallel_rep.sandwich.coverage));
  }
  return 0;
}
