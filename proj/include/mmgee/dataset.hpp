#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mmgee/errors.hpp"

namespace mmgee {

/// Long-format multivariate longitudinal panel. One row per (subject, time);
/// k response columns, p covariate columns. Subjects keep their order of
/// first appearance; rows are sorted by time within subject. Immutable once
/// built, safe to share across threads.
struct LongitudinalDataset {
  std::vector<std::string> response_names;   // k
  std::vector<std::string> covariate_names;  // p
  std::vector<std::string> subject_of_row;   // M
  std::vector<long long> time_of_row;        // M
  Eigen::MatrixXd responses;                 // M x k
  Eigen::MatrixXd covariates;                // M x p
  std::vector<std::string> subject_ids;      // N, first-appearance order
  std::vector<Eigen::Index> cluster_starts;  // N+1 row offsets

  Eigen::Index n_rows() const { return responses.rows(); }
  Eigen::Index n_subjects() const { return static_cast<Eigen::Index>(subject_ids.size()); }
  Eigen::Index n_responses() const { return responses.cols(); }
  Eigen::Index n_covariates() const { return covariates.cols(); }

  Eigen::Index obs_per_subject(Eigen::Index i) const {
    return cluster_starts[static_cast<std::size_t>(i) + 1] -
           cluster_starts[static_cast<std::size_t>(i)];
  }

  Eigen::Index response_index(const std::string& name) const {
    for (std::size_t j = 0; j < response_names.size(); ++j)
      if (response_names[j] == name) return static_cast<Eigen::Index>(j);
    throw SpecError("unknown response '" + name + "'");
  }

  Eigen::Index covariate_index(const std::string& name) const {
    for (std::size_t j = 0; j < covariate_names.size(); ++j)
      if (covariate_names[j] == name) return static_cast<Eigen::Index>(j);
    throw SpecError("unknown covariate '" + name + "'");
  }
};

/// Column roles for ingesting a delimited text file.
struct ColumnSchema {
  std::string subject_col;
  std::string time_col;
  std::vector<std::string> response_cols;
  std::vector<std::string> covariate_cols;
  char delimiter = ',';
  bool drop_incomplete = false;  // default policy: hard error on missing cells
};

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string field;
  for (char c : line) {
    if (c == delim) {
      out.push_back(field);
      field.clear();
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(field);
  return out;
}

inline std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

inline bool is_missing_token(const std::string& raw) {
  const std::string t = trim(raw);
  return t.empty() || t == "NA" || t == "na" || t == "NaN" || t == "nan";
}

inline bool parse_double(const std::string& raw, double* out) {
  const std::string t = trim(raw);
  if (t.empty()) return false;
  const char* begin = t.c_str();
  char* end = nullptr;
  const double v = std::strtod(begin, &end);
  if (end != begin + t.size()) return false;
  *out = v;
  return true;
}

inline std::string fmt_full(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace detail

/// Ingest a long-format delimited stream. Rows come back grouped by subject
/// (first-appearance order) and sorted by time within subject. Missing cells
/// are a hard error unless schema.drop_incomplete is set, in which case the
/// whole row is dropped. Any other unparseable numeric cell is always an
/// error.
inline LongitudinalDataset ingest_long(std::istream& in, const ColumnSchema& schema) {
  if (schema.subject_col.empty() || schema.time_col.empty())
    throw SpecError("schema requires subject and time column names");
  if (schema.response_cols.empty())
    throw SpecError("schema requires at least one response column");
  {
    std::vector<std::string> declared;
    declared.push_back(schema.subject_col);
    declared.push_back(schema.time_col);
    declared.insert(declared.end(), schema.response_cols.begin(), schema.response_cols.end());
    declared.insert(declared.end(), schema.covariate_cols.begin(), schema.covariate_cols.end());
    std::vector<std::string> sorted = declared;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
      throw SpecError("schema declares the same column under two roles");
  }

  std::string header;
  if (!std::getline(in, header)) throw DataError("empty input: no header row");
  const std::vector<std::string> cols = detail::split_line(header, schema.delimiter);

  std::unordered_map<std::string, std::size_t> col_of;
  for (std::size_t j = 0; j < cols.size(); ++j) {
    const std::string name = detail::trim(cols[j]);
    if (col_of.count(name)) throw DataError("duplicate header column '" + name + "'");
    col_of[name] = j;
  }
  auto locate = [&](const std::string& name) -> std::size_t {
    auto it = col_of.find(name);
    if (it == col_of.end())
      throw DataError("schema error: declared column '" + name + "' not present in header");
    return it->second;
  };

  const std::size_t id_col = locate(schema.subject_col);
  const std::size_t time_col = locate(schema.time_col);
  std::vector<std::size_t> resp_cols, cov_cols;
  for (const auto& n : schema.response_cols) resp_cols.push_back(locate(n));
  for (const auto& n : schema.covariate_cols) cov_cols.push_back(locate(n));

  struct RawRow {
    std::string id;
    long long t;
    std::vector<double> resp;
    std::vector<double> cov;
    long line;
  };
  std::vector<RawRow> rows;
  std::map<std::pair<std::string, long long>, long> seen;

  std::string line;
  long line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line.size() == 1 && line[0] == '\r')) continue;
    const std::vector<std::string> fields = detail::split_line(line, schema.delimiter);
    if (fields.size() != cols.size())
      throw DataError("row " + std::to_string(line_no) + ": expected " +
                      std::to_string(cols.size()) + " fields, found " +
                      std::to_string(fields.size()));

    auto cell = [&](std::size_t j, const std::string& role) -> const std::string& {
      (void)role;
      return fields[j];
    };

    // Missing-cell policy on declared numeric roles.
    bool incomplete = false;
    std::string missing_where;
    auto check_missing = [&](std::size_t j, const std::string& name) {
      if (detail::is_missing_token(fields[j])) {
        incomplete = true;
        if (missing_where.empty()) missing_where = name;
      }
    };
    check_missing(time_col, schema.time_col);
    for (std::size_t j = 0; j < resp_cols.size(); ++j)
      check_missing(resp_cols[j], schema.response_cols[j]);
    for (std::size_t j = 0; j < cov_cols.size(); ++j)
      check_missing(cov_cols[j], schema.covariate_cols[j]);
    if (detail::trim(fields[id_col]).empty()) {
      incomplete = true;
      if (missing_where.empty()) missing_where = schema.subject_col;
    }
    if (incomplete) {
      if (schema.drop_incomplete) continue;
      throw DataError("row " + std::to_string(line_no) + ": missing value in column '" +
                      missing_where + "' (use drop-incomplete to drop such rows)");
    }

    RawRow r;
    r.line = line_no;
    r.id = detail::trim(cell(id_col, "subject"));

    double t_raw;
    if (!detail::parse_double(fields[time_col], &t_raw) ||
        std::abs(t_raw - std::llround(t_raw)) > 1e-9)
      throw DataError("row " + std::to_string(line_no) + ", column '" + schema.time_col +
                      "': cannot parse '" + detail::trim(fields[time_col]) +
                      "' as an integer time index");
    r.t = std::llround(t_raw);

    auto parse_numeric = [&](std::size_t j, const std::string& name) {
      double v;
      if (!detail::parse_double(fields[j], &v))
        throw DataError("row " + std::to_string(line_no) + ", column '" + name +
                        "': cannot parse '" + detail::trim(fields[j]) + "' as a number");
      return v;
    };
    for (std::size_t j = 0; j < resp_cols.size(); ++j)
      r.resp.push_back(parse_numeric(resp_cols[j], schema.response_cols[j]));
    for (std::size_t j = 0; j < cov_cols.size(); ++j)
      r.cov.push_back(parse_numeric(cov_cols[j], schema.covariate_cols[j]));

    const auto key = std::make_pair(r.id, r.t);
    auto it = seen.find(key);
    if (it != seen.end())
      throw DataError("duplicate (subject,time) = (" + r.id + "," + std::to_string(r.t) +
                      ") at row " + std::to_string(line_no) + " (first seen at row " +
                      std::to_string(it->second) + ")");
    seen.emplace(key, line_no);
    rows.push_back(std::move(r));
  }

  if (rows.empty()) throw DataError("no data rows");

  // Group by subject in first-appearance order, sort by time within subject.
  std::vector<std::string> subjects;
  std::unordered_map<std::string, std::size_t> subject_index;
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    auto it = subject_index.find(rows[r].id);
    if (it == subject_index.end()) {
      subject_index.emplace(rows[r].id, subjects.size());
      subjects.push_back(rows[r].id);
      members.push_back({r});
    } else {
      members[it->second].push_back(r);
    }
  }
  for (auto& m : members)
    std::sort(m.begin(), m.end(),
              [&](std::size_t a, std::size_t b) { return rows[a].t < rows[b].t; });

  LongitudinalDataset ds;
  ds.response_names = schema.response_cols;
  ds.covariate_names = schema.covariate_cols;
  const Eigen::Index M = static_cast<Eigen::Index>(rows.size());
  ds.responses.resize(M, static_cast<Eigen::Index>(resp_cols.size()));
  ds.covariates.resize(M, static_cast<Eigen::Index>(cov_cols.size()));
  ds.subject_of_row.reserve(rows.size());
  ds.time_of_row.reserve(rows.size());
  ds.subject_ids = subjects;
  ds.cluster_starts.push_back(0);

  Eigen::Index out = 0;
  for (const auto& m : members) {
    for (std::size_t r : m) {
      ds.subject_of_row.push_back(rows[r].id);
      ds.time_of_row.push_back(rows[r].t);
      for (std::size_t j = 0; j < rows[r].resp.size(); ++j)
        ds.responses(out, static_cast<Eigen::Index>(j)) = rows[r].resp[j];
      for (std::size_t j = 0; j < rows[r].cov.size(); ++j)
        ds.covariates(out, static_cast<Eigen::Index>(j)) = rows[r].cov[j];
      ++out;
    }
    ds.cluster_starts.push_back(out);
  }
  return ds;
}

inline LongitudinalDataset ingest_file(const std::string& path, const ColumnSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file '" + path + "'");
  return ingest_long(in, schema);
}

/// Serialize in the same long layout ingest_long expects; full precision, so
/// a write/ingest round trip reproduces the dataset exactly.
inline void write_long_csv(std::ostream& out, const LongitudinalDataset& ds,
                           char delimiter = ',') {
  out << "id" << delimiter << "time";
  for (const auto& n : ds.response_names) out << delimiter << n;
  for (const auto& n : ds.covariate_names) out << delimiter << n;
  out << "\n";
  for (Eigen::Index r = 0; r < ds.n_rows(); ++r) {
    out << ds.subject_of_row[static_cast<std::size_t>(r)] << delimiter
        << ds.time_of_row[static_cast<std::size_t>(r)];
    for (Eigen::Index j = 0; j < ds.n_responses(); ++j)
      out << delimiter << detail::fmt_full(ds.responses(r, j));
    for (Eigen::Index j = 0; j < ds.n_covariates(); ++j)
      out << delimiter << detail::fmt_full(ds.covariates(r, j));
    out << "\n";
  }
}

/// Baseline/analysis windowing: analysis rows are kept, each response gains
/// a subject-constant covariate equal to its baseline-window mean, and a
/// rescaled time covariate (t - offset)/divisor is appended.
struct PreprocessSpec {
  long long analysis_start = 0;
  long long analysis_end = 0;
  long long baseline_start = 0;
  long long baseline_end = 0;
  std::vector<std::string> baseline_names;  // one per response
  double time_offset = 0.0;
  double time_divisor = 1.0;
  std::string time_name = "week";

  void validate(Eigen::Index k) const {
    if (baseline_end < baseline_start || analysis_end < analysis_start)
      throw SpecError("preprocess windows must satisfy start <= end");
    if (baseline_end >= analysis_start)
      throw SpecError("baseline window must end strictly before the analysis window");
    if (time_divisor == 0.0) throw SpecError("time divisor must be nonzero");
    if (static_cast<Eigen::Index>(baseline_names.size()) != k)
      throw SpecError("need exactly one baseline covariate name per response");
  }
};

inline LongitudinalDataset preprocess_baseline(const LongitudinalDataset& ds,
                                               const PreprocessSpec& spec) {
  spec.validate(ds.n_responses());
  for (const auto& n : spec.baseline_names)
    for (const auto& existing : ds.covariate_names)
      if (n == existing) throw SpecError("baseline covariate '" + n + "' already exists");
  for (const auto& existing : ds.covariate_names)
    if (existing == spec.time_name)
      throw SpecError("time covariate '" + spec.time_name + "' already exists");

  const Eigen::Index k = ds.n_responses();
  const Eigen::Index p = ds.n_covariates();

  std::vector<std::string> no_baseline, no_analysis;
  std::vector<std::vector<Eigen::Index>> keep_rows(ds.subject_ids.size());
  Eigen::MatrixXd baseline_means(ds.n_subjects(), k);

  for (Eigen::Index i = 0; i < ds.n_subjects(); ++i) {
    Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(k);
    Eigen::Index n_base = 0;
    for (Eigen::Index r = ds.cluster_starts[static_cast<std::size_t>(i)];
         r < ds.cluster_starts[static_cast<std::size_t>(i) + 1]; ++r) {
      const long long t = ds.time_of_row[static_cast<std::size_t>(r)];
      if (t >= spec.baseline_start && t <= spec.baseline_end) {
        sum += ds.responses.row(r);
        ++n_base;
      }
      if (t >= spec.analysis_start && t <= spec.analysis_end)
        keep_rows[static_cast<std::size_t>(i)].push_back(r);
    }
    if (n_base == 0)
      no_baseline.push_back(ds.subject_ids[static_cast<std::size_t>(i)]);
    else
      baseline_means.row(i) = sum / static_cast<double>(n_base);
    if (keep_rows[static_cast<std::size_t>(i)].empty())
      no_analysis.push_back(ds.subject_ids[static_cast<std::size_t>(i)]);
  }

  auto join = [](const std::vector<std::string>& v) {
    std::string s;
    for (std::size_t j = 0; j < v.size(); ++j) s += (j ? ", " : "") + v[j];
    return s;
  };
  if (!no_baseline.empty())
    throw DataError("subjects with no baseline-window observations: " + join(no_baseline));
  if (!no_analysis.empty())
    throw DataError("subjects with no analysis-window observations: " + join(no_analysis));

  LongitudinalDataset out;
  out.response_names = ds.response_names;
  out.covariate_names = ds.covariate_names;
  for (const auto& n : spec.baseline_names) out.covariate_names.push_back(n);
  out.covariate_names.push_back(spec.time_name);
  out.subject_ids = ds.subject_ids;

  Eigen::Index M_out = 0;
  for (const auto& kr : keep_rows) M_out += static_cast<Eigen::Index>(kr.size());
  out.responses.resize(M_out, k);
  out.covariates.resize(M_out, p + k + 1);
  out.cluster_starts.push_back(0);

  Eigen::Index w = 0;
  for (Eigen::Index i = 0; i < ds.n_subjects(); ++i) {
    for (Eigen::Index r : keep_rows[static_cast<std::size_t>(i)]) {
      out.subject_of_row.push_back(ds.subject_of_row[static_cast<std::size_t>(r)]);
      out.time_of_row.push_back(ds.time_of_row[static_cast<std::size_t>(r)]);
      out.responses.row(w) = ds.responses.row(r);
      out.covariates.row(w).head(p) = ds.covariates.row(r);
      out.covariates.row(w).segment(p, k) = baseline_means.row(i);
      out.covariates(w, p + k) =
          (static_cast<double>(ds.time_of_row[static_cast<std::size_t>(r)]) -
           spec.time_offset) /
          spec.time_divisor;
      ++w;
    }
    out.cluster_starts.push_back(w);
  }
  return out;
}

}  // namespace mmgee
