#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "mmgee/dataset.hpp"
#include "mmgee/errors.hpp"

namespace mmgee {

/// Mean-model specification: which responses enter, which covariates, and
/// which coefficients are response-specific. Response 1 (the first declared
/// name) is always the reference level; rtype indicators mark responses
/// 2..k, and interaction columns give selected covariates response-specific
/// slopes on top of the shared ones.
struct ModelSpec {
  std::vector<std::string> responses;   // ordered, length k
  std::vector<std::string> covariates;  // ordered, length p
  bool include_rtype = false;
  std::vector<int> interaction;  // 1-based covariate indices, size p*

  Eigen::Index k() const { return static_cast<Eigen::Index>(responses.size()); }
  Eigen::Index p() const { return static_cast<Eigen::Index>(covariates.size()); }
  Eigen::Index p_star() const { return static_cast<Eigen::Index>(interaction.size()); }

  /// Number of stacked design columns: p+1 plus, with indicators,
  /// (k-1) + (k-1)*p*.
  Eigen::Index stacked_columns() const {
    Eigen::Index q = p() + 1;
    if (include_rtype) q += (k() - 1) + (k() - 1) * p_star();
    return q;
  }

  void validate() const {
    if (responses.empty()) throw SpecError("model needs at least one response");
    if (!interaction.empty() && !include_rtype)
      throw SpecError("interactions require the response-type indicator (rtype)");
    std::vector<int> seen;
    for (int idx : interaction) {
      if (idx < 1 || idx > static_cast<int>(covariates.size()))
        throw SpecError("interaction index " + std::to_string(idx) +
                        " out of range 1.." + std::to_string(covariates.size()));
      for (int s : seen)
        if (s == idx)
          throw SpecError("interaction index " + std::to_string(idx) + " repeated");
      seen.push_back(idx);
    }
    auto check_distinct = [](const std::vector<std::string>& v, const char* what) {
      for (std::size_t a = 0; a < v.size(); ++a)
        for (std::size_t b = a + 1; b < v.size(); ++b)
          if (v[a] == v[b])
            throw SpecError(std::string(what) + " '" + v[a] + "' listed twice");
    };
    check_distinct(responses, "response");
    check_distinct(covariates, "covariate");
    for (const auto& r : responses)
      for (const auto& c : covariates)
        if (r == c) throw SpecError("'" + r + "' declared as both response and covariate");
  }

  void validate_against(const LongitudinalDataset& data) const {
    validate();
    for (const auto& r : responses) data.response_index(r);
    for (const auto& c : covariates) data.covariate_index(c);
  }
};

/// The reconstructed estimation problem: responses stacked response-minor
/// within time within subject, the replicated design with indicator and
/// interaction columns, and per-subject cluster boundaries (cluster size
/// n_i * k).
struct StackedProblem {
  Eigen::VectorXd y;                         // M*k
  Eigen::MatrixXd x;                         // (M*k) x q
  std::vector<Eigen::Index> cluster_starts;  // N+1 offsets into stacked rows
  std::vector<std::string> subject_ids;      // N
  std::vector<std::string> labels;           // q column labels

  Eigen::Index n_clusters() const { return static_cast<Eigen::Index>(subject_ids.size()); }
  Eigen::Index n_rows() const { return y.size(); }
  Eigen::Index n_coefficients() const { return x.cols(); }

  Eigen::Index cluster_begin(Eigen::Index i) const {
    return cluster_starts[static_cast<std::size_t>(i)];
  }
  Eigen::Index cluster_size(Eigen::Index i) const {
    return cluster_starts[static_cast<std::size_t>(i) + 1] -
           cluster_starts[static_cast<std::size_t>(i)];
  }
};

/// Stack the k response columns into one vector: element for (i, t, j)
/// precedes (i, t, j+1), and the (i, t) block precedes (i, t+1).
inline Eigen::VectorXd build_stacked_response(const LongitudinalDataset& data,
                                              const ModelSpec& spec) {
  spec.validate_against(data);
  const Eigen::Index k = spec.k();
  const Eigen::Index M = data.n_rows();

  std::vector<Eigen::Index> ridx;
  ridx.reserve(static_cast<std::size_t>(k));
  for (const auto& name : spec.responses) ridx.push_back(data.response_index(name));

  Eigen::VectorXd y(M * k);
  for (Eigen::Index r = 0; r < M; ++r)
    for (Eigen::Index j = 0; j < k; ++j) y(r * k + j) = data.responses(r, ridx[static_cast<std::size_t>(j)]);
  return y;
}

/// Replicate each covariate row k times and append rtype indicator columns
/// and indicator-by-covariate interaction columns. Returns the matrix and
/// its self-describing column labels ("(Intercept)", covariate names,
/// "rtype_j", "cov:rtype_j").
inline std::pair<Eigen::MatrixXd, std::vector<std::string>> build_stacked_design(
    const LongitudinalDataset& data, const ModelSpec& spec) {
  spec.validate_against(data);
  const Eigen::Index k = spec.k();
  const Eigen::Index p = spec.p();
  const Eigen::Index pstar = spec.p_star();
  const Eigen::Index M = data.n_rows();
  const Eigen::Index q = spec.stacked_columns();

  std::vector<Eigen::Index> cidx;
  cidx.reserve(static_cast<std::size_t>(p));
  for (const auto& name : spec.covariates) cidx.push_back(data.covariate_index(name));

  Eigen::MatrixXd x = Eigen::MatrixXd::Zero(M * k, q);
  for (Eigen::Index r = 0; r < M; ++r) {
    for (Eigen::Index j = 0; j < k; ++j) {
      const Eigen::Index row = r * k + j;
      x(row, 0) = 1.0;
      for (Eigen::Index l = 0; l < p; ++l)
        x(row, 1 + l) = data.covariates(r, cidx[static_cast<std::size_t>(l)]);
      if (spec.include_rtype && j > 0) {
        x(row, 1 + p + (j - 1)) = 1.0;  // rtype_{j+1}
        for (Eigen::Index a = 0; a < pstar; ++a) {
          const Eigen::Index cov = spec.interaction[static_cast<std::size_t>(a)] - 1;
          x(row, 1 + p + (k - 1) + a * (k - 1) + (j - 1)) =
              data.covariates(r, cidx[static_cast<std::size_t>(cov)]);
        }
      }
    }
  }

  std::vector<std::string> labels;
  labels.reserve(static_cast<std::size_t>(q));
  labels.push_back("(Intercept)");
  for (const auto& name : spec.covariates) labels.push_back(name);
  if (spec.include_rtype) {
    for (Eigen::Index j = 2; j <= k; ++j) labels.push_back("rtype_" + std::to_string(j));
    for (Eigen::Index a = 0; a < pstar; ++a) {
      const auto& cov = spec.covariates[static_cast<std::size_t>(spec.interaction[static_cast<std::size_t>(a)] - 1)];
      for (Eigen::Index j = 2; j <= k; ++j)
        labels.push_back(cov + ":rtype_" + std::to_string(j));
    }
  }
  return {std::move(x), std::move(labels)};
}

inline StackedProblem build_stacked_problem(const LongitudinalDataset& data,
                                            const ModelSpec& spec) {
  StackedProblem pr;
  pr.y = build_stacked_response(data, spec);
  auto [x, labels] = build_stacked_design(data, spec);
  pr.x = std::move(x);
  pr.labels = std::move(labels);
  pr.subject_ids = data.subject_ids;
  const Eigen::Index k = spec.k();
  pr.cluster_starts.reserve(data.cluster_starts.size());
  for (Eigen::Index s : data.cluster_starts) pr.cluster_starts.push_back(s * k);
  return pr;
}

}  // namespace mmgee
