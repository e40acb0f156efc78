#include "pln/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "pln/errors.hpp"

namespace pln {
namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string strip(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r'))
    --b;
  std::string out = s.substr(a, b - a);
  if (out.size() >= 2 && out.front() == '"' && out.back() == '"') {
    out = out.substr(1, out.size() - 2);
  }
  return out;
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(strip(field));
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

}  // namespace

CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) {
    throw ParseError("'" + path + "' is empty (expected a header row)");
  }
  CsvTable table;
  table.header = split_line(line);
  const std::size_t cols = table.header.size();
  if (cols == 0) throw ParseError("'" + path + "': empty header row");

  std::vector<std::vector<double>> rows;
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const std::vector<std::string> fields = split_line(line);
    if (fields.size() != cols) {
      throw ParseError("'" + path + "' line " + std::to_string(lineno) +
                           ": expected " + std::to_string(cols) +
                           " fields, got " + std::to_string(fields.size()),
                       lineno, long(fields.size()));
    }
    std::vector<double> row(cols);
    for (std::size_t c = 0; c < cols; ++c) {
      try {
        std::size_t used = 0;
        row[c] = std::stod(fields[c], &used);
        if (used != fields[c].size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ParseError("'" + path + "' line " + std::to_string(lineno) +
                             " column " + std::to_string(c + 1) +
                             ": non-numeric cell '" + fields[c] + "'",
                         lineno, long(c + 1));
      }
    }
    rows.push_back(std::move(row));
  }
  table.values.resize(Eigen::Index(rows.size()), Eigen::Index(cols));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      table.values(Eigen::Index(r), Eigen::Index(c)) = rows[r][c];
    }
  }
  return table;
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values) {
  if (Eigen::Index(header.size()) != values.cols()) {
    throw DimensionError("write_csv: header/column count mismatch");
  }
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out << ',';
    out << header[c];
  }
  out << '\n';
  for (Eigen::Index r = 0; r < values.rows(); ++r) {
    for (Eigen::Index c = 0; c < values.cols(); ++c) {
      if (c) out << ',';
      out << format_double(values(r, c));
    }
    out << '\n';
  }
}

CountDataset parse_dataset(const std::string& counts_path,
                           const std::string& covariates_path,
                           const std::string& offsets_path) {
  const CsvTable counts = read_csv(counts_path);
  const CsvTable covariates = read_csv(covariates_path);

  for (Eigen::Index i = 0; i < counts.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < counts.values.cols(); ++j) {
      const double y = counts.values(i, j);
      if (!std::isfinite(y) || y < 0.0 || std::floor(y) != y) {
        throw ParseError("'" + counts_path + "' line " + std::to_string(i + 2) +
                             " column " + std::to_string(j + 1) +
                             ": counts must be nonnegative integers, got " +
                             format_double(y),
                         i + 2, j + 1);
      }
    }
  }
  if (covariates.values.rows() != counts.values.rows()) {
    throw ParseError("row mismatch: '" + counts_path + "' has " +
                     std::to_string(counts.values.rows()) + " rows, '" +
                     covariates_path + "' has " +
                     std::to_string(covariates.values.rows()));
  }
  Eigen::MatrixXd offsets;
  if (!offsets_path.empty()) {
    const CsvTable off = read_csv(offsets_path);
    if (off.values.rows() != counts.values.rows() ||
        off.values.cols() != counts.values.cols()) {
      throw ParseError("offsets '" + offsets_path +
                       "' must match the counts shape");
    }
    offsets = off.values;
  } else {
    offsets =
        Eigen::MatrixXd::Zero(counts.values.rows(), counts.values.cols());
  }
  return CountDataset(counts.values, covariates.values, offsets);
}

std::string bytes_digest(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", (unsigned long long)h);
  return buf;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open '" + path + "' for digest");
  std::ostringstream ss;
  ss << in.rdbuf();
  return bytes_digest(ss.str());
}

nlohmann::ordered_json manifest_json(const RunManifest& manifest) {
  nlohmann::ordered_json j;
  j["command"] = manifest.command;
  j["tool_version"] = manifest.tool_version;
  j["config_digest"] = manifest.config_digest;
  nlohmann::ordered_json inputs = nlohmann::ordered_json::object();
  for (const auto& [path, digest] : manifest.inputs) inputs[path] = digest;
  j["inputs"] = inputs;
  if (manifest.has_seed) j["seed"] = manifest.seed;
  j["threads"] = manifest.threads;
  j["wall_clock_sec"] = manifest.wall_clock_sec;
  return j;
}

nlohmann::ordered_json matrix_json(const Eigen::MatrixXd& m) {
  nlohmann::ordered_json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  nlohmann::ordered_json data = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
  }
  j["data"] = data;
  return j;
}

Eigen::MatrixXd json_matrix(const nlohmann::json& j) {
  const Eigen::Index rows = j.at("rows").get<Eigen::Index>();
  const Eigen::Index cols = j.at("cols").get<Eigen::Index>();
  const auto& data = j.at("data");
  if (Eigen::Index(data.size()) != rows * cols) {
    throw ParseError("matrix json: data length does not match rows*cols");
  }
  Eigen::MatrixXd m(rows, cols);
  Eigen::Index idx = 0;
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      m(r, c) = data[idx++].get<double>();
    }
  }
  return m;
}

void write_fit_artifact(const std::string& path, const FitResult& result,
                        const RunManifest& manifest) {
  nlohmann::ordered_json j;
  j["params"] = {
      {"n", result.vpar_hat.n()},
      {"p", result.theta_hat.p()},
      {"m", result.theta_hat.m()},
      {"B", matrix_json(result.theta_hat.regression())},
      {"Omega", matrix_json(result.theta_hat.precision())},
      {"Sigma", matrix_json(result.theta_hat.covariance())},
  };
  j["variational"] = {
      {"M", matrix_json(result.vpar_hat.means())},
      {"S", matrix_json(result.vpar_hat.sdevs())},
  };
  j["trace"] = result.elbo_trace;
  j["converged"] = result.converged;
  j["iterations"] = result.iterations;
  j["warnings"] = result.warnings;
  j["manifest"] = manifest_json(manifest);
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

FitArtifact read_fit_artifact(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open fit artifact '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const std::exception& ex) {
    throw ParseError("fit artifact '" + path + "': " + ex.what());
  }
  try {
    Eigen::MatrixXd b = json_matrix(j.at("params").at("B"));
    Eigen::MatrixXd omega = json_matrix(j.at("params").at("Omega"));
    Eigen::MatrixXd means = json_matrix(j.at("variational").at("M"));
    Eigen::MatrixXd sdevs = json_matrix(j.at("variational").at("S"));
    FitArtifact artifact{ModelParams(std::move(b), omega),
                         VariationalParams(std::move(means), sdevs),
                         j.at("trace").get<std::vector<double>>(),
                         j.at("converged").get<bool>(),
                         j.at("iterations").get<int>()};
    return artifact;
  } catch (const nlohmann::json::exception& ex) {
    throw ParseError("fit artifact '" + path + "': " + ex.what());
  }
}

void write_coverage_report(const std::string& path,
                           const CoverageReport& report,
                           const RunManifest& manifest) {
  nlohmann::ordered_json j;
  j["config"] = {
      {"n", report.config.n},         {"p", report.config.p},
      {"m", report.config.m},         {"rho_requested", report.config.rho},
      {"seed", report.config.seed},   {"replicates", report.config.replicates},
      {"level", report.config.level},
  };
  j["scenario"] = {
      {"rho", report.rho},
      {"B_star", matrix_json(report.b_star)},
      {"Sigma_star", matrix_json(report.sigma_star)},
  };
  nlohmann::ordered_json reps = nlohmann::ordered_json::array();
  for (const auto& r : report.replicates) {
    nlohmann::ordered_json rec;
    rec["index"] = r.index;
    rec["ok"] = r.ok;
    rec["converged"] = r.converged;
    rec["iterations"] = r.iterations;
    rec["rmse_B"] = r.rmse_b;
    rec["rmse_Sigma"] = r.rmse_sigma;
    if (!r.ok) rec["error"] = r.error;
    reps.push_back(rec);
  }
  j["replicates"] = reps;
  j["failures"] = report.failures;
  const auto method_json = [](const MethodSummary& s) {
    nlohmann::ordered_json mj;
    mj["coverage"] = s.coverage;
    mj["mean_variance"] = s.mean_variance;
    mj["ks_pvalues"] = matrix_json(s.ks_pvalues);
    nlohmann::ordered_json std_list = nlohmann::ordered_json::array();
    for (const auto& mat : s.standardized) std_list.push_back(matrix_json(mat));
    mj["standardized"] = std_list;
    return mj;
  };
  j["fisher"] = method_json(report.fisher);
  j["sandwich"] = method_json(report.sandwich);
  j["manifest"] = manifest_json(manifest);
  std::ofstream out(path);
  if (!out) throw ParseError("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace pln
