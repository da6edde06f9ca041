#pragma once

#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "mmgee/dataset.hpp"
#include "mmgee/inference.hpp"

namespace mmgee {

// Versioned plain-text fit file. Line-oriented "key value..." records;
// numbers at full precision so a round trip is exact; free-text labels go
// last on their line.

inline void write_fit(std::ostream& out, const FitBundle& b) {
  using detail::fmt_full;
  const GeeFit& f = b.fit;
  const Eigen::Index q = f.beta.size();

  out << "mmgee-fit 1\n";
  out << "family " << family_name(b.family.family) << "\n";
  out << "link " << link_name(b.family.link) << "\n";
  out << "phi_fixed " << (f.phi_fixed ? 1 : 0) << "\n";
  out << "phi " << fmt_full(f.phi) << "\n";
  out << "corstr " << correlation_name(b.requested_structure) << "\n";
  out << "converged " << (f.converged ? 1 : 0) << "\n";
  out << "degenerate " << (f.degenerate ? 1 : 0) << "\n";
  out << "iterations " << f.iterations << "\n";
  out << "scaled_score " << fmt_full(f.scaled_score) << "\n";
  out << "n_responses " << b.responses.size() << "\n";
  for (const auto& r : b.responses) out << "response " << r << "\n";
  out << "n_covariates " << b.covariates.size() << "\n";
  for (const auto& c : b.covariates) out << "covariate " << c << "\n";
  out << "rtype " << (b.include_rtype ? 1 : 0) << "\n";
  out << "n_interaction " << b.interaction.size() << "\n";
  for (int idx : b.interaction) out << "interaction " << idx << "\n";
  out << "q " << q << "\n";
  for (Eigen::Index j = 0; j < q; ++j)
    out << "coef " << fmt_full(f.beta(j)) << " " << f.labels[static_cast<std::size_t>(j)]
        << "\n";
  out << "robust_cov\n";
  for (Eigen::Index a = 0; a < q; ++a) {
    for (Eigen::Index c = 0; c < q; ++c) out << (c ? " " : "") << fmt_full(f.robust_cov(a, c));
    out << "\n";
  }
  out << "model_cov\n";
  for (Eigen::Index a = 0; a < q; ++a) {
    for (Eigen::Index c = 0; c < q; ++c) out << (c ? " " : "") << fmt_full(f.model_cov(a, c));
    out << "\n";
  }
  switch (f.correlation.kind) {
    case CorrelationKind::independence:
      out << "correlation none\n";
      break;
    case CorrelationKind::exchangeable:
    case CorrelationKind::ar1:
      out << "correlation scalar " << fmt_full(f.correlation.alpha) << "\n";
      break;
    case CorrelationKind::unstructured: {
      const Eigen::Index m = f.correlation.matrix.rows();
      out << "correlation matrix " << m << "\n";
      for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index c = 0; c < m; ++c)
          out << (c ? " " : "") << fmt_full(f.correlation.matrix(a, c));
        out << "\n";
      }
      break;
    }
  }
  out << "trace " << f.step_trace.size();
  for (double v : f.step_trace) out << " " << fmt_full(v);
  out << "\n";
  out << "n_warnings " << f.warnings.size() << "\n";
  for (const auto& w : f.warnings) out << "warning " << w << "\n";
}

namespace detail {

inline std::string expect_key(std::istream& in, const std::string& key) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("fit file: unexpected end, wanted '" + key + "'");
  if (line.rfind(key, 0) != 0)
    throw DataError("fit file: expected '" + key + "', found '" + line + "'");
  std::string rest = line.substr(key.size());
  if (!rest.empty() && rest[0] == ' ') rest.erase(0, 1);
  return rest;
}

inline Eigen::MatrixXd read_matrix(std::istream& in, Eigen::Index rows, Eigen::Index cols) {
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index a = 0; a < rows; ++a) {
    std::string line;
    if (!std::getline(in, line)) throw DataError("fit file: truncated matrix");
    std::istringstream ls(line);
    for (Eigen::Index c = 0; c < cols; ++c)
      if (!(ls >> m(a, c))) throw DataError("fit file: malformed matrix row");
  }
  return m;
}

}  // namespace detail

inline FitBundle read_fit(std::istream& in) {
  using detail::expect_key;
  std::string line;
  if (!std::getline(in, line) || line != "mmgee-fit 1")
    throw DataError("not an mmgee fit file (missing 'mmgee-fit 1' header)");

  FitBundle b;
  const std::string fam = expect_key(in, "family");
  const std::string link = expect_key(in, "link");
  const bool phi_fixed = expect_key(in, "phi_fixed") == "1";
  const double phi = std::stod(expect_key(in, "phi"));
  b.family = FamilySpec::parse(fam, link, phi_fixed ? std::optional<double>(std::max(phi, 1e-300))
                                                    : std::nullopt);
  b.requested_structure = parse_corstr(expect_key(in, "corstr"));

  GeeFit& f = b.fit;
  f.phi_fixed = phi_fixed;
  f.phi = phi;
  f.converged = expect_key(in, "converged") == "1";
  f.degenerate = expect_key(in, "degenerate") == "1";
  f.iterations = std::stoi(expect_key(in, "iterations"));
  f.scaled_score = std::stod(expect_key(in, "scaled_score"));

  const int k = std::stoi(expect_key(in, "n_responses"));
  for (int j = 0; j < k; ++j) b.responses.push_back(expect_key(in, "response"));
  const int p = std::stoi(expect_key(in, "n_covariates"));
  for (int j = 0; j < p; ++j) b.covariates.push_back(expect_key(in, "covariate"));
  b.include_rtype = expect_key(in, "rtype") == "1";
  const int n_int = std::stoi(expect_key(in, "n_interaction"));
  for (int j = 0; j < n_int; ++j) b.interaction.push_back(std::stoi(expect_key(in, "interaction")));

  const Eigen::Index q = std::stoi(expect_key(in, "q"));
  f.beta.resize(q);
  for (Eigen::Index j = 0; j < q; ++j) {
    std::istringstream ls(expect_key(in, "coef"));
    std::string value;
    ls >> value;
    f.beta(j) = std::stod(value);
    std::string label;
    std::getline(ls, label);
    if (!label.empty() && label[0] == ' ') label.erase(0, 1);
    f.labels.push_back(label);
  }
  expect_key(in, "robust_cov");
  f.robust_cov = detail::read_matrix(in, q, q);
  expect_key(in, "model_cov");
  f.model_cov = detail::read_matrix(in, q, q);

  std::istringstream corr_line(expect_key(in, "correlation"));
  std::string corr_kind;
  corr_line >> corr_kind;
  if (corr_kind == "none") {
    f.correlation.kind = CorrelationKind::independence;
  } else if (corr_kind == "scalar") {
    f.correlation.kind = b.requested_structure;
    corr_line >> f.correlation.alpha;
  } else if (corr_kind == "matrix") {
    f.correlation.kind = CorrelationKind::unstructured;
    Eigen::Index m = 0;
    corr_line >> m;
    f.correlation.matrix = detail::read_matrix(in, m, m);
  } else {
    throw DataError("fit file: unknown correlation record '" + corr_kind + "'");
  }

  std::istringstream trace_line(expect_key(in, "trace"));
  std::size_t n_trace = 0;
  trace_line >> n_trace;
  for (std::size_t j = 0; j < n_trace; ++j) {
    double v;
    trace_line >> v;
    f.step_trace.push_back(v);
  }
  const int n_warn = std::stoi(expect_key(in, "n_warnings"));
  for (int j = 0; j < n_warn; ++j) f.warnings.push_back(expect_key(in, "warning"));
  return b;
}

inline void write_fit_file(const std::string& path, const FitBundle& b) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot open '" + path + "' for writing");
  write_fit(out, b);
}

inline FitBundle read_fit_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open fit file '" + path + "'");
  return read_fit(in);
}

/// Full-precision coefficient summary CSV:
/// label,estimate,robust_se,robust_z,model_se,model_z.
inline void write_summary_csv(std::ostream& out, const GeeFit& f) {
  using detail::fmt_full;
  out << "label,estimate,robust_se,robust_z,model_se,model_z\n";
  for (Eigen::Index j = 0; j < f.beta.size(); ++j) {
    const double rse = f.robust_se(j);
    const double mse = f.model_se(j);
    out << f.labels[static_cast<std::size_t>(j)] << "," << fmt_full(f.beta(j)) << ","
        << fmt_full(rse) << "," << fmt_full(detail::z_of(f.beta(j), rse)) << ","
        << fmt_full(mse) << "," << fmt_full(detail::z_of(f.beta(j), mse)) << "\n";
  }
}

/// Human-readable coefficient table, two decimals.
inline void print_fit_table(std::ostream& out, const GeeFit& f) {
  std::size_t width = 12;
  for (const auto& l : f.labels) width = std::max(width, l.size() + 2);
  out << std::left << std::setw(static_cast<int>(width)) << "label" << std::right
      << std::setw(10) << "estimate" << std::setw(12) << "robust_se" << std::setw(11)
      << "robust_z" << std::setw(11) << "model_se" << std::setw(10) << "model_z" << "\n";
  out << std::fixed << std::setprecision(2);
  for (Eigen::Index j = 0; j < f.beta.size(); ++j) {
    const double rse = f.robust_se(j);
    const double mse = f.model_se(j);
    out << std::left << std::setw(static_cast<int>(width))
        << f.labels[static_cast<std::size_t>(j)] << std::right << std::setw(10) << f.beta(j)
        << std::setw(12) << rse << std::setw(11) << detail::z_of(f.beta(j), rse)
        << std::setw(11) << mse << std::setw(10) << detail::z_of(f.beta(j), mse) << "\n";
  }
  out.unsetf(std::ios_base::floatfield);
  out << std::setprecision(6);
}

/// Fitted working correlation as a CSV matrix.
inline void write_correlation_csv(std::ostream& out, const CorrelationStructure& c,
                                  Eigen::Index cluster_size) {
  using detail::fmt_full;
  const Eigen::MatrixXd r = c.materialize(cluster_size);
  for (Eigen::Index a = 0; a < r.rows(); ++a) {
    for (Eigen::Index b = 0; b < r.cols(); ++b) out << (b ? "," : "") << fmt_full(r(a, b));
    out << "\n";
  }
}

}  // namespace mmgee
