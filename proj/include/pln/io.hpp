#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pln/dataset.hpp"
#include "pln/fit.hpp"
#include "pln/sim.hpp"

namespace pln {

inline constexpr const char* kToolVersion = "0.1.0";

struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd values;
};

// RFC-4180-style numeric CSV with one header row, '.' decimal, UTF-8.
CsvTable read_csv(const std::string& path);

// Doubles are written with 17 significant digits so reads round-trip.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values);

// Reads counts/covariates[/offsets] CSV files into a validated dataset.
// A missing offsets path means zero offsets. Every rejection carries the
// file and 1-based cell coordinates.
CountDataset parse_dataset(const std::string& counts_path,
                           const std::string& covariates_path,
                           const std::string& offsets_path = "");

// FNV-1a 64-bit digest of a file's bytes, as fixed-width hex.
std::string file_digest(const std::string& path);
std::string bytes_digest(const std::string& bytes);

struct RunManifest {
  std::string command;
  std::string tool_version = kToolVersion;
  std::string config_digest;
  std::vector<std::pair<std::string, std::string>> inputs;  // (path, digest)
  bool has_seed = false;
  std::uint64_t seed = 0;
  int threads = 0;
  double wall_clock_sec = 0.0;
};

nlohmann::ordered_json manifest_json(const RunManifest& manifest);

// {"rows": r, "cols": c, "data": [...]} with row-major data.
nlohmann::ordered_json matrix_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd json_matrix(const nlohmann::json& j);

// Fit artifact: top-level keys {params, variational, trace, manifest}
// plus the convergence flags.
void write_fit_artifact(const std::string& path, const FitResult& result,
                        const RunManifest& manifest);

struct FitArtifact {
  ModelParams theta;
  VariationalParams vpar;
  std::vector<double> trace;
  bool converged = false;
  int iterations = 0;
};

FitArtifact read_fit_artifact(const std::string& path);

void write_coverage_report(const std::string& path,
                           const CoverageReport& report,
                           const RunManifest& manifest);

}  // namespace pln
