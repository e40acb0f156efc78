#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "pln/elbo.hpp"
#include "pln/errors.hpp"
#include "pln/fit.hpp"
#include "pln/io.hpp"
#include "pln/parallel.hpp"
#include "pln/sim.hpp"
#include "pln/stats.hpp"
#include "pln/variance.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int resolved_threads() {
#ifdef _OPENMP
  const int requested = pln::thread_count();
  return requested > 0 ? requested : omp_get_max_threads();
#else
  return 1;
#endif
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void write_manifest_file(const std::string& path,
                         const pln::RunManifest& manifest) {
  std::ofstream out(path);
  if (!out) throw pln::ParseError("cannot write '" + path + "'");
  out << pln::manifest_json(manifest).dump(2) << '\n';
}

std::vector<std::string> default_names(const char* stem, Eigen::Index count) {
  std::vector<std::string> names;
  names.reserve(std::size_t(count));
  for (Eigen::Index i = 0; i < count; ++i) {
    names.push_back(stem + std::to_string(i + 1));
  }
  return names;
}

struct FitArgs {
  std::string counts, covariates, offsets, out, warm_start;
  double tol = 1e-8;
  int max_iters = 500;
  int threads = 0;
};

int run_fit(const FitArgs& args) {
  const auto start = Clock::now();
  pln::set_thread_count(args.threads);
  const pln::CountDataset data =
      pln::parse_dataset(args.counts, args.covariates, args.offsets);
  pln::FitConfig cfg;
  cfg.outer_tol = args.tol;
  cfg.max_outer_iters = args.max_iters;

  pln::FitResult result = [&] {
    if (args.warm_start.empty()) return pln::fit(data, cfg);
    const pln::FitArtifact warm = pln::read_fit_artifact(args.warm_start);
    return pln::fit(data, cfg, warm.theta, warm.vpar);
  }();

  pln::RunManifest manifest;
  manifest.command = "fit";
  manifest.config_digest = pln::bytes_digest(
      "fit;tol=" + fmt(args.tol) + ";max_iters=" + std::to_string(args.max_iters) +
      ";warm=" + args.warm_start);
  manifest.inputs.emplace_back(args.counts, pln::file_digest(args.counts));
  manifest.inputs.emplace_back(args.covariates,
                               pln::file_digest(args.covariates));
  if (!args.offsets.empty()) {
    manifest.inputs.emplace_back(args.offsets, pln::file_digest(args.offsets));
  }
  if (!args.warm_start.empty()) {
    manifest.inputs.emplace_back(args.warm_start,
                                 pln::file_digest(args.warm_start));
  }
  manifest.threads = resolved_threads();
  manifest.wall_clock_sec = seconds_since(start);
  pln::write_fit_artifact(args.out, result, manifest);

  if (!result.converged) {
    std::cerr << "pln fit: iteration cap reached before tolerance "
              << "(result written to " << args.out << ")\n";
    return 2;
  }
  std::cout << "pln fit: converged in " << result.iterations
            << " iterations, ELBO " << fmt(result.elbo_trace.back()) << "\n";
  return 0;
}

struct VarianceArgs {
  std::string fit, counts, covariates, offsets, out;
  std::string method = "both";
  double level = 0.95;
  int threads = 0;
};

int run_variance(const VarianceArgs& args) {
  const auto start = Clock::now();
  pln::set_thread_count(args.threads);
  const pln::CountDataset data =
      pln::parse_dataset(args.counts, args.covariates, args.offsets);
  const pln::FitArtifact artifact = pln::read_fit_artifact(args.fit);
  const pln::CsvTable counts_csv = pln::read_csv(args.counts);
  const pln::CsvTable covariates_csv = pln::read_csv(args.covariates);

  std::vector<pln::VarianceReport> reports;
  if (args.method == "fisher" || args.method == "both") {
    reports.push_back(pln::fisher_variance(artifact.theta, artifact.vpar, data,
                                           args.level));
  }
  if (args.method == "sandwich" || args.method == "both") {
    reports.push_back(pln::sandwich_variance(artifact.theta, artifact.vpar,
                                             data, args.level));
  }
  if (reports.empty()) {
    throw pln::ParameterDomainError(
        "variance: --method must be fisher, sandwich or both");
  }

  std::ofstream out(args.out);
  if (!out) throw pln::ParseError("cannot write '" + args.out + "'");
  out << "covariate,variable,estimate,se,ci_low,ci_high,method\n";
  for (const auto& report : reports) {
    for (Eigen::Index j = 0; j < data.p(); ++j) {
      for (Eigen::Index k = 0; k < data.m(); ++k) {
        out << covariates_csv.header[std::size_t(k)] << ','
            << counts_csv.header[std::size_t(j)] << ','
            << fmt(artifact.theta.regression()(k, j)) << ','
            << fmt(std::sqrt(report.var_B(k, j))) << ','
            << fmt(report.ci_lower(k, j)) << ',' << fmt(report.ci_upper(k, j))
            << ',' << pln::to_string(report.method) << '\n';
      }
    }
    for (const auto& warning : report.warnings) {
      std::cerr << "pln variance: warning: " << warning << "\n";
    }
  }
  out.close();

  pln::RunManifest manifest;
  manifest.command = "variance";
  manifest.config_digest = pln::bytes_digest(
      "variance;method=" + args.method + ";level=" + fmt(args.level));
  manifest.inputs.emplace_back(args.fit, pln::file_digest(args.fit));
  manifest.inputs.emplace_back(args.counts, pln::file_digest(args.counts));
  manifest.inputs.emplace_back(args.covariates,
                               pln::file_digest(args.covariates));
  if (!args.offsets.empty()) {
    manifest.inputs.emplace_back(args.offsets, pln::file_digest(args.offsets));
  }
  manifest.threads = resolved_threads();
  manifest.wall_clock_sec = seconds_since(start);
  write_manifest_file(args.out + ".manifest.json", manifest);
  return 0;
}

struct SimulateArgs {
  Eigen::Index n = 100, p = 5, m = 2;
  double rho = -1.0;
  std::uint64_t seed = 0;
  std::string out_prefix = "sim";
};

int run_simulate(const SimulateArgs& args) {
  const auto start = Clock::now();
  pln::ScenarioConfig cfg;
  cfg.n = args.n;
  cfg.p = args.p;
  cfg.m = args.m;
  cfg.rho = args.rho;
  cfg.seed = args.seed;
  const pln::Scenario scenario = pln::generate_scenario(cfg);
  const pln::CountDataset data = pln::sample_counts(scenario, args.seed);

  const auto y_names = default_names("y", args.p);
  const auto x_names = default_names("x", args.m);
  pln::write_csv(args.out_prefix + "_B_star.csv", y_names, scenario.b_star);
  pln::write_csv(args.out_prefix + "_Sigma_star.csv", y_names,
                 scenario.sigma_star);
  pln::write_csv(args.out_prefix + "_X.csv", x_names, data.covariates());
  pln::write_csv(args.out_prefix + "_Y.csv", y_names, data.counts());

  pln::RunManifest manifest;
  manifest.command = "simulate";
  manifest.config_digest = pln::bytes_digest(
      "simulate;n=" + std::to_string(args.n) + ";p=" + std::to_string(args.p) +
      ";m=" + std::to_string(args.m) + ";rho=" + fmt(args.rho));
  manifest.has_seed = true;
  manifest.seed = args.seed;
  for (const char* suffix : {"_B_star.csv", "_Sigma_star.csv", "_X.csv",
                             "_Y.csv"}) {
    const std::string path = args.out_prefix + suffix;
    manifest.inputs.emplace_back(path, pln::file_digest(path));
  }
  manifest.threads = resolved_threads();
  manifest.wall_clock_sec = seconds_since(start);
  write_manifest_file(args.out_prefix + "_manifest.json", manifest);
  std::cout << "pln simulate: wrote " << args.out_prefix
            << "_{B_star,Sigma_star,X,Y}.csv (rho = " << fmt(scenario.rho)
            << ")\n";
  return 0;
}

struct CoverageArgs {
  Eigen::Index n = 100, p = 5, m = 2;
  int replicates = 10;
  double rho = -1.0;
  double level = 0.95;
  std::uint64_t seed = 0;
  double tol = 1e-8;
  int max_iters = 500;
  int threads = 0;
  std::string out;
};

int run_coverage(const CoverageArgs& args) {
  const auto start = Clock::now();
  pln::set_thread_count(args.threads);
  pln::ScenarioConfig cfg;
  cfg.n = args.n;
  cfg.p = args.p;
  cfg.m = args.m;
  cfg.rho = args.rho;
  cfg.seed = args.seed;
  cfg.replicates = args.replicates;
  cfg.level = args.level;
  cfg.fit.outer_tol = args.tol;
  cfg.fit.max_outer_iters = args.max_iters;
  const pln::CoverageReport report = pln::run_coverage_experiment(cfg);

  pln::RunManifest manifest;
  manifest.command = "coverage";
  manifest.config_digest = pln::bytes_digest(
      "coverage;n=" + std::to_string(args.n) + ";p=" + std::to_string(args.p) +
      ";m=" + std::to_string(args.m) + ";K=" + std::to_string(args.replicates) +
      ";rho=" + fmt(args.rho) + ";level=" + fmt(args.level));
  manifest.has_seed = true;
  manifest.seed = args.seed;
  manifest.threads = resolved_threads();
  manifest.wall_clock_sec = seconds_since(start);
  pln::write_coverage_report(args.out, report, manifest);

  std::cout << "pln coverage: sandwich " << fmt(report.sandwich.coverage)
            << ", fisher " << fmt(report.fisher.coverage) << ", failures "
            << report.failures << "/" << args.replicates << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Poisson log-normal count regression: variational fit, "
               "Fisher and sandwich confidence intervals, simulation"};
  app.require_subcommand(1);

  FitArgs fit_args;
  CLI::App* fit_cmd = app.add_subcommand("fit", "fit the model to CSV data");
  fit_cmd->add_option("--counts", fit_args.counts, "counts CSV (n x p)")
      ->required();
  fit_cmd->add_option("--covariates", fit_args.covariates,
                      "covariates CSV (n x m)")
      ->required();
  fit_cmd->add_option("--offsets", fit_args.offsets, "offsets CSV (n x p)");
  fit_cmd->add_option("--out", fit_args.out, "output fit artifact (JSON)")
      ->required();
  fit_cmd->add_option("--tol", fit_args.tol, "relative ELBO tolerance");
  fit_cmd->add_option("--max-iters", fit_args.max_iters, "outer iteration cap");
  fit_cmd->add_option("--threads", fit_args.threads,
                      "worker threads (0 = all cores)");
  fit_cmd->add_option("--warm-start", fit_args.warm_start,
                      "existing fit artifact to start from");

  VarianceArgs var_args;
  CLI::App* var_cmd =
      app.add_subcommand("variance", "confidence intervals from a fit");
  var_cmd->add_option("--fit", var_args.fit, "fit artifact (JSON)")->required();
  var_cmd->add_option("--counts", var_args.counts, "counts CSV")->required();
  var_cmd->add_option("--covariates", var_args.covariates, "covariates CSV")
      ->required();
  var_cmd->add_option("--offsets", var_args.offsets, "offsets CSV");
  var_cmd->add_option("--method", var_args.method,
                      "fisher | sandwich | both (default both)");
  var_cmd->add_option("--level", var_args.level, "confidence level");
  var_cmd->add_option("--out", var_args.out, "output CI table (CSV)")
      ->required();
  var_cmd->add_option("--threads", var_args.threads,
                      "worker threads (0 = all cores)");

  SimulateArgs sim_args;
  CLI::App* sim_cmd =
      app.add_subcommand("simulate", "write one synthetic scenario + dataset");
  sim_cmd->add_option("--n", sim_args.n, "samples")->required();
  sim_cmd->add_option("--p", sim_args.p, "variables")->required();
  sim_cmd->add_option("--m", sim_args.m, "covariates")->required();
  sim_cmd->add_option("--rho", sim_args.rho,
                      "correlation (omit to draw from U[0.8, 0.95])");
  sim_cmd->add_option("--seed", sim_args.seed, "RNG seed");
  sim_cmd->add_option("--out-prefix", sim_args.out_prefix,
                      "prefix for the four output CSVs");

  CoverageArgs cov_args;
  CLI::App* cov_cmd = app.add_subcommand(
      "coverage", "replicate experiment: RMSE, KS normality, CI coverage");
  cov_cmd->add_option("--n", cov_args.n, "samples")->required();
  cov_cmd->add_option("--p", cov_args.p, "variables")->required();
  cov_cmd->add_option("--m", cov_args.m, "covariates")->required();
  cov_cmd->add_option("--replicates", cov_args.replicates, "replicate count")
      ->required();
  cov_cmd->add_option("--seed", cov_args.seed, "RNG seed");
  cov_cmd->add_option("--rho", cov_args.rho,
                      "correlation (omit to draw from U[0.8, 0.95])");
  cov_cmd->add_option("--level", cov_args.level, "confidence level");
  cov_cmd->add_option("--tol", cov_args.tol, "fit tolerance");
  cov_cmd->add_option("--max-iters", cov_args.max_iters, "fit iteration cap");
  cov_cmd->add_option("--threads", cov_args.threads,
                      "worker threads (0 = all cores)");
  cov_cmd->add_option("--out", cov_args.out, "output report (JSON)")
      ->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit_cmd->parsed()) return run_fit(fit_args);
    if (var_cmd->parsed()) return run_variance(var_args);
    if (sim_cmd->parsed()) return run_simulate(sim_args);
    if (cov_cmd->parsed()) return run_coverage(cov_args);
  } catch (const std::exception& ex) {
    std::cerr << "pln: error: " << ex.what() << "\n";
    return 1;
  }
  return 1;
}
