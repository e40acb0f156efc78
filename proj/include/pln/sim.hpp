#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pln/dataset.hpp"
#include "pln/fit.hpp"
#include "pln/rng.hpp"

namespace pln {

struct ScenarioConfig {
  Eigen::Index n = 100, p = 5, m = 2;
  double rho = -1.0;  // negative: draw from U([0.8, 0.95]) per scenario
  std::uint64_t seed = 0;
  int replicates = 1;
  double level = 0.95;
  FitConfig fit;

  void validate() const;
};

// Ground truth of one synthetic setting: B* with N(2,1) entries,
// Sigma*_kj = 1_{j=k} + rho^|j-k| (identity plus Toeplitz), and a one-hot
// multinomial design with P(x_ir = 1) = 1/m.
struct Scenario {
  Eigen::MatrixXd b_star;      // m x p
  Eigen::MatrixXd sigma_star;  // p x p
  Eigen::MatrixXd design;      // n x m, one-hot rows
  double rho = 0.0;            // realized correlation
};

Scenario generate_scenario(const ScenarioConfig& cfg);

Eigen::MatrixXd sample_design(Eigen::Index n, Eigen::Index m, Rng& rng);

// Draws Z_i ~ N(0, Sigma*) by Cholesky and Y_ij ~ Poisson(exp(x_i'B*_j
// + Z_ij)); offsets are zero. Deterministic in the seed. Rates above 1e12
// raise SamplingError with the cell.
CountDataset sample_counts(const Scenario& scenario, std::uint64_t seed);

double rmse(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth);

// (B-hat_kj - B*_kj) / sqrt(var_kj), elementwise.
Eigen::MatrixXd standardize(const Eigen::MatrixXd& b_hat,
                            const Eigen::MatrixXd& b_star,
                            const Eigen::MatrixXd& var_hat);

struct KsResult {
  double statistic = 0.0;  // sup |F_n - Phi|
  double p_value = 1.0;
};

// One-sample KS test against N(0,1); p-value from the asymptotic
// Kolmogorov distribution with Stephens' effective lambda
// (sqrt(n) + 0.12 + 0.11/sqrt(n)) D.
KsResult ks_pvalue_std_normal(const std::vector<double>& samples);

// Fraction of entries with |value| <= z_{1 - (1-level)/2}.
double coverage_rate(const std::vector<double>& standardized, double level);
double coverage_rate(const Eigen::MatrixXd& standardized, double level);

struct ReplicateRecord {
  int index = 0;
  bool ok = false;
  bool converged = false;
  int iterations = 0;
  double rmse_b = 0.0;
  double rmse_sigma = 0.0;
  std::string error;  // set when !ok
};

struct MethodSummary {
  double coverage = 0.0;        // pooled over replicates and entries
  Eigen::MatrixXd ks_pvalues;   // m x p, pooled across replicates
  double mean_variance = 0.0;   // average var_B entry across replicates
  std::vector<Eigen::MatrixXd> standardized;  // per replicate, m x p
};

struct CoverageReport {
  ScenarioConfig config;
  double rho = 0.0;
  Eigen::MatrixXd b_star, sigma_star;
  std::vector<ReplicateRecord> replicates;
  MethodSummary fisher, sandwich;
  int failures = 0;
};

// Full protocol: per replicate draw a design and counts, fit, compute
// both variance reports, standardize against B*. Replicates run in
// parallel but are assembled in index order; fit failures are recorded,
// not fatal.
CoverageReport run_coverage_experiment(const ScenarioConfig& cfg);

namespace serial {
CoverageReport run_coverage_experiment(const ScenarioConfig& cfg);
}  // namespace serial

}  // namespace pln
