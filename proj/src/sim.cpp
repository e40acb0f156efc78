#include "pln/sim.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pln/errors.hpp"
#include "pln/parallel.hpp"
#include "pln/stats.hpp"
#include "pln/variance.hpp"

namespace pln {
namespace {

// Stream labels; replicate k hangs off kStreamReplicates.derive(k).
constexpr std::uint64_t kStreamScenario = 1;
constexpr std::uint64_t kStreamReplicates = 2;

constexpr double kRateLimit = 1e12;

}  // namespace

void ScenarioConfig::validate() const {
  if (n < 1 || p < 1 || m < 1 || replicates < 1) {
    throw DimensionError("scenario config: n, p, m, replicates must be >= 1");
  }
  if (rho >= 0.0 && !(rho < 1.0)) {
    throw DimensionError("scenario config: fixed rho must lie in [0, 1)");
  }
  if (!(level > 0.0 && level < 1.0)) {
    throw DimensionError("scenario config: level must lie in (0, 1)");
  }
  fit.validate();
}

Eigen::MatrixXd sample_design(Eigen::Index n, Eigen::Index m, Rng& rng) {
  Eigen::MatrixXd design = Eigen::MatrixXd::Zero(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Index r =
        std::min<Eigen::Index>(Eigen::Index(rng.uniform01() * double(m)), m - 1);
    design(i, r) = 1.0;
  }
  return design;
}

Scenario generate_scenario(const ScenarioConfig& cfg) {
  cfg.validate();
  const Rng scenario_rng = Rng(cfg.seed).derive(kStreamScenario);
  Scenario sc;

  Rng rho_rng = scenario_rng.derive(1);
  sc.rho = cfg.rho >= 0.0 ? cfg.rho : 0.8 + 0.15 * rho_rng.uniform01();

  Rng b_rng = scenario_rng.derive(2);
  sc.b_star.resize(cfg.m, cfg.p);
  for (Eigen::Index k = 0; k < cfg.m; ++k) {
    for (Eigen::Index j = 0; j < cfg.p; ++j) {
      sc.b_star(k, j) = 2.0 + b_rng.normal();
    }
  }

  sc.sigma_star.resize(cfg.p, cfg.p);
  for (Eigen::Index j = 0; j < cfg.p; ++j) {
    for (Eigen::Index k = 0; k < cfg.p; ++k) {
      sc.sigma_star(j, k) =
          (j == k ? 1.0 : 0.0) + std::pow(sc.rho, double(std::abs(j - k)));
    }
  }

  Rng design_rng = scenario_rng.derive(3);
  sc.design = sample_design(cfg.n, cfg.m, design_rng);
  return sc;
}

CountDataset sample_counts(const Scenario& scenario, std::uint64_t seed) {
  const Eigen::Index n = scenario.design.rows(), p = scenario.sigma_star.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(scenario.sigma_star);
  if (llt.info() != Eigen::Success) {
    throw ParameterDomainError("sample_counts: Sigma* is not SPD");
  }
  const Eigen::MatrixXd chol = llt.matrixL();
  const Eigen::MatrixXd mean_log = scenario.design * scenario.b_star;

  const Rng root(seed);
  Eigen::MatrixXd counts(n, p);
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng z_rng = root.derive(1).derive(std::uint64_t(i));
    Rng y_rng = root.derive(2).derive(std::uint64_t(i));
    Eigen::VectorXd xi(p);
    for (Eigen::Index j = 0; j < p; ++j) xi(j) = z_rng.normal();
    const Eigen::VectorXd z = chol * xi;
    for (Eigen::Index j = 0; j < p; ++j) {
      const double rate = std::exp(mean_log(i, j) + z(j));
      if (!(rate < kRateLimit)) {
        throw SamplingError("sample_counts: rate overflow at cell (" +
                                std::to_string(i) + ", " + std::to_string(j) +
                                ")",
                            i, j);
      }
      counts(i, j) = double(y_rng.poisson(rate));
    }
  }
  return CountDataset(std::move(counts), scenario.design);
}

double rmse(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols()) {
    throw DimensionError("rmse: shape mismatch");
  }
  return std::sqrt((estimate - truth).array().square().mean());
}

Eigen::MatrixXd standardize(const Eigen::MatrixXd& b_hat,
                            const Eigen::MatrixXd& b_star,
                            const Eigen::MatrixXd& var_hat) {
  if (b_hat.rows() != b_star.rows() || b_hat.cols() != b_star.cols() ||
      var_hat.rows() != b_hat.rows() || var_hat.cols() != b_hat.cols()) {
    throw DimensionError("standardize: shape mismatch");
  }
  if ((var_hat.array() <= 0.0).any()) {
    throw ParameterDomainError("standardize: variances must be positive");
  }
  return ((b_hat - b_star).array() / var_hat.array().sqrt()).matrix();
}

KsResult ks_pvalue_std_normal(const std::vector<double>& samples) {
  if (samples.empty()) {
    throw DimensionError("ks test: empty sample");
  }
  for (double v : samples) {
    if (!std::isfinite(v)) {
      throw ParameterDomainError("ks test: samples must be finite");
    }
  }
  std::vector<double> sorted(samples);
  std::sort(sorted.begin(), sorted.end());
  const double n = double(sorted.size());
  double d = 0.0;
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const double cdf = normal_cdf(sorted[i]);
    d = std::max(d, double(i + 1) / n - cdf);
    d = std::max(d, cdf - double(i) / n);
  }
  const double sqrt_n = std::sqrt(n);
  const double lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
  return {d, kolmogorov_q(lambda)};
}

double coverage_rate(const std::vector<double>& standardized, double level) {
  if (!(level > 0.0 && level < 1.0)) {
    throw ParameterDomainError("coverage_rate: level must be in (0, 1)");
  }
  if (standardized.empty()) return 1.0;
  const double z = normal_quantile(0.5 * (1.0 + level));
  std::size_t inside = 0;
  for (double v : standardized) {
    if (std::abs(v) <= z) ++inside;
  }
  return double(inside) / double(standardized.size());
}

double coverage_rate(const Eigen::MatrixXd& standardized, double level) {
  std::vector<double> flat(standardized.data(),
                           standardized.data() + standardized.size());
  return coverage_rate(flat, level);
}

namespace {

struct ReplicateOutput {
  ReplicateRecord record;
  Eigen::MatrixXd std_fisher, std_sandwich;
  double mean_var_fisher = 0.0, mean_var_sandwich = 0.0;
};

ReplicateOutput run_replicate(const ScenarioConfig& cfg,
                              const Scenario& scenario, int k) {
  ReplicateOutput out;
  out.record.index = k;
  try {
    const Rng rep_rng =
        Rng(cfg.seed).derive(kStreamReplicates).derive(std::uint64_t(k));
    Scenario rep = scenario;
    Rng design_rng = rep_rng.derive(1);
    rep.design = sample_design(cfg.n, cfg.m, design_rng);
    Rng counts_seed_rng = rep_rng.derive(2);
    const CountDataset data = sample_counts(rep, counts_seed_rng.next_u64());

    const FitResult fitted = fit(data, cfg.fit);
    out.record.converged = fitted.converged;
    out.record.iterations = fitted.iterations;
    out.record.rmse_b = rmse(fitted.theta_hat.regression(), rep.b_star);
    out.record.rmse_sigma = rmse(fitted.theta_hat.covariance(), rep.sigma_star);

    const VarianceReport fisher =
        fisher_variance(fitted.theta_hat, fitted.vpar_hat, data, cfg.level);
    const VarianceReport sandwich =
        sandwich_variance(fitted.theta_hat, fitted.vpar_hat, data, cfg.level);
    out.std_fisher =
        standardize(fitted.theta_hat.regression(), rep.b_star, fisher.var_B);
    out.std_sandwich =
        standardize(fitted.theta_hat.regression(), rep.b_star, sandwich.var_B);
    out.mean_var_fisher = fisher.var_B.mean();
    out.mean_var_sandwich = sandwich.var_B.mean();
    out.record.ok = true;
  } catch (const std::exception& ex) {
    out.record.ok = false;
    out.record.error = ex.what();
  }
  return out;
}

MethodSummary summarize_method(const std::vector<ReplicateOutput>& outputs,
                               bool sandwich, const ScenarioConfig& cfg) {
  MethodSummary summary;
  std::vector<double> pooled;
  double var_sum = 0.0;
  int ok_count = 0;
  for (const auto& out : outputs) {
    if (!out.record.ok) continue;
    const Eigen::MatrixXd& std_mat =
        sandwich ? out.std_sandwich : out.std_fisher;
    summary.standardized.push_back(std_mat);
    pooled.insert(pooled.end(), std_mat.data(), std_mat.data() + std_mat.size());
    var_sum += sandwich ? out.mean_var_sandwich : out.mean_var_fisher;
    ++ok_count;
  }
  summary.coverage = coverage_rate(pooled, cfg.level);
  summary.mean_variance = ok_count > 0 ? var_sum / double(ok_count) : 0.0;
  summary.ks_pvalues = Eigen::MatrixXd::Zero(cfg.m, cfg.p);
  if (ok_count > 0) {
    for (Eigen::Index r = 0; r < cfg.m; ++r) {
      for (Eigen::Index c = 0; c < cfg.p; ++c) {
        std::vector<double> coef;
        coef.reserve(summary.standardized.size());
        for (const auto& mat : summary.standardized) coef.push_back(mat(r, c));
        summary.ks_pvalues(r, c) = ks_pvalue_std_normal(coef).p_value;
      }
    }
  }
  return summary;
}

CoverageReport coverage_experiment_impl(const ScenarioConfig& cfg,
                                        bool use_openmp) {
  cfg.validate();
  const Scenario scenario = generate_scenario(cfg);
  const int K = cfg.replicates;
  std::vector<ReplicateOutput> outputs(static_cast<std::size_t>(K));
  if (use_openmp) {
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic) \
    num_threads(detail::resolved_threads())
#endif
    for (int k = 0; k < K; ++k) {
      outputs[size_t(k)] = run_replicate(cfg, scenario, k);
    }
  } else {
    for (int k = 0; k < K; ++k) {
      outputs[size_t(k)] = run_replicate(cfg, scenario, k);
    }
  }

  CoverageReport report;
  report.config = cfg;
  report.rho = scenario.rho;
  report.b_star = scenario.b_star;
  report.sigma_star = scenario.sigma_star;
  for (const auto& out : outputs) {
    report.replicates.push_back(out.record);
    if (!out.record.ok) ++report.failures;
  }
  report.fisher = summarize_method(outputs, false, cfg);
  report.sandwich = summarize_method(outputs, true, cfg);
  return report;
}

}  // namespace

CoverageReport run_coverage_experiment(const ScenarioConfig& cfg) {
  return coverage_experiment_impl(cfg, true);
}

namespace serial {
CoverageReport run_coverage_experiment(const ScenarioConfig& cfg) {
  return coverage_experiment_impl(cfg, false);
}
}  // namespace serial

}  // namespace pln
