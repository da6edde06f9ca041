#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mmgee/errors.hpp"
#include "mmgee/gee.hpp"
#include "mmgee/math.hpp"

namespace mmgee {

/// A fitted model together with the specification that produced it; the
/// serialized fit format and the report tooling work on this.
struct FitBundle {
  FamilySpec family;
  CorrelationKind requested_structure = CorrelationKind::independence;
  std::vector<std::string> responses;
  std::vector<std::string> covariates;
  bool include_rtype = false;
  std::vector<int> interaction;  // 1-based covariate indices
  GeeFit fit;
};

/// SE of beta_s + beta_s' from the covariance triple:
/// sqrt(var_s + var_s' + 2 cov).
inline double combined_standard_error(double var_s, double var_sp, double cov_ssp) {
  const double radicand = var_s + var_sp + 2.0 * cov_ssp;
  if (radicand < 0.0)
    throw NumericalError("combined standard error: covariance triple is not consistent "
                         "with a PSD matrix (negative radicand)");
  return std::sqrt(radicand);
}

namespace detail {

inline double z_of(double estimate, double se) {
  if (se > 0.0) return estimate / se;
  if (estimate == 0.0) return 0.0;
  return estimate > 0.0 ? std::numeric_limits<double>::infinity()
                        : -std::numeric_limits<double>::infinity();
}

}  // namespace detail

/// Per-response coefficient beta_s + beta_s' * rtype with its plug-in
/// standard error from the fitted covariance.
struct DerivedCoefficient {
  std::string response;
  std::string label;
  Eigen::Index base_index = 0;
  std::optional<Eigen::Index> interaction_index;
  double rtype_value = 0.0;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
};

inline DerivedCoefficient derived_coefficient(const GeeFit& fit, Eigen::Index s,
                                              std::optional<Eigen::Index> s_prime,
                                              double rtype_value, bool use_robust = true) {
  const Eigen::Index q = fit.beta.size();
  if (s < 0 || s >= q) throw SpecError("coefficient index out of range");
  if (s_prime && (*s_prime < 0 || *s_prime >= q))
    throw SpecError("interaction coefficient index out of range");

  const Eigen::MatrixXd& cov = use_robust ? fit.robust_cov : fit.model_cov;
  DerivedCoefficient d;
  d.base_index = s;
  d.interaction_index = s_prime;
  d.rtype_value = rtype_value;
  d.label = fit.labels[static_cast<std::size_t>(s)];
  if (!s_prime || rtype_value == 0.0) {
    d.estimate = fit.beta(s);
    d.se = std::sqrt(cov(s, s));
  } else {
    const Eigen::Index sp = *s_prime;
    d.estimate = fit.beta(s) + rtype_value * fit.beta(sp);
    const double radicand = cov(s, s) + rtype_value * rtype_value * cov(sp, sp) +
                            2.0 * rtype_value * cov(s, sp);
    if (radicand < 0.0)
      throw NumericalError("derived coefficient: negative combined variance");
    d.se = std::sqrt(radicand);
  }
  d.z = detail::z_of(d.estimate, d.se);
  return d;
}

struct WaldRow {
  std::string label;
  double estimate = 0.0;
  double se = 0.0;
  double z = 0.0;
  double p = 1.0;
};

/// Wald table: Z = beta/SE and two-sided normal p-values.
inline std::vector<WaldRow> wald_statistics(const GeeFit& fit, bool use_robust = true) {
  const Eigen::MatrixXd& cov = use_robust ? fit.robust_cov : fit.model_cov;
  std::vector<WaldRow> rows;
  rows.reserve(static_cast<std::size_t>(fit.beta.size()));
  for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
    WaldRow r;
    r.label = fit.labels[static_cast<std::size_t>(j)];
    r.estimate = fit.beta(j);
    r.se = std::sqrt(cov(j, j));
    r.z = detail::z_of(r.estimate, r.se);
    r.p = std::isinf(r.z) ? 0.0 : two_sided_p(r.z);
    rows.push_back(r);
  }
  return rows;
}

/// exp(estimate); the caller is responsible for checking the fit used a
/// logit link before reading this as an odds ratio.
inline double odds_ratio(double estimate) { return std::exp(estimate); }

struct EfficiencyRow {
  std::string label;
  double se_reference = 0.0;
  double se_comparison = 0.0;
  double gain_percent = 0.0;  // 100 * (ref - cmp) / ref
};

/// Percentage decrease in standard errors of `comparison` relative to
/// `reference`, matched by label; labels present in only one fit are
/// skipped.
inline std::vector<EfficiencyRow> efficiency_gain(
    const std::vector<std::pair<std::string, double>>& reference,
    const std::vector<std::pair<std::string, double>>& comparison) {
  std::vector<EfficiencyRow> rows;
  for (const auto& [label, se_ref] : reference) {
    for (const auto& [label_cmp, se_cmp] : comparison) {
      if (label == label_cmp) {
        EfficiencyRow r;
        r.label = label;
        r.se_reference = se_ref;
        r.se_comparison = se_cmp;
        r.gain_percent = 100.0 * (se_ref - se_cmp) / se_ref;
        rows.push_back(r);
        break;
      }
    }
  }
  if (rows.empty()) throw SpecError("efficiency gain: no coefficient labels in common");
  return rows;
}

namespace detail {

/// Column index bookkeeping mirroring build_stacked_design: intercept,
/// p covariates, (k-1) rtype indicators, then (k-1) interactions per
/// selected covariate.
struct StackedLayout {
  Eigen::Index p;
  Eigen::Index k;
  std::vector<int> interaction;

  Eigen::Index rtype_col(Eigen::Index response_idx) const {  // response_idx in 1..k-1
    return 1 + p + (response_idx - 1);
  }
  std::optional<Eigen::Index> interaction_col(Eigen::Index covariate_1based,
                                              Eigen::Index response_idx) const {
    for (std::size_t a = 0; a < interaction.size(); ++a)
      if (interaction[a] == static_cast<int>(covariate_1based))
        return 1 + p + (k - 1) + static_cast<Eigen::Index>(a) * (k - 1) + (response_idx - 1);
    return std::nullopt;
  }
};

}  // namespace detail

/// Full per-response coefficient table for one response of a fitted model:
/// the reference response reproduces the base coefficients; any other
/// response plugs rtype = 1 into its indicator and interaction terms.
inline std::vector<DerivedCoefficient> derive_response_table(const FitBundle& bundle,
                                                             const std::string& response,
                                                             bool use_robust = true) {
  Eigen::Index r = -1;
  for (std::size_t j = 0; j < bundle.responses.size(); ++j)
    if (bundle.responses[j] == response) r = static_cast<Eigen::Index>(j);
  if (r < 0) throw SpecError("response '" + response + "' not part of the fitted model");

  const detail::StackedLayout layout{static_cast<Eigen::Index>(bundle.covariates.size()),
                                     static_cast<Eigen::Index>(bundle.responses.size()),
                                     bundle.interaction};
  std::vector<DerivedCoefficient> rows;
  const bool reference = (r == 0) || !bundle.include_rtype;

  for (Eigen::Index s = 0; s <= layout.p; ++s) {
    std::optional<Eigen::Index> sp;
    if (!reference) {
      if (s == 0)
        sp = layout.rtype_col(r);
      else
        sp = layout.interaction_col(s, r);
    }
    DerivedCoefficient d =
        derived_coefficient(bundle.fit, s, sp, reference ? 0.0 : 1.0, use_robust);
    d.response = response;
    rows.push_back(d);
  }
  return rows;
}

}  // namespace mmgee
