#pragma once

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <string>
#include <vector>

#include "mmgee/errors.hpp"
#include "mmgee/family.hpp"

namespace mmgee {

enum class CorrelationKind { independence, exchangeable, ar1, unstructured };

inline const char* correlation_name(CorrelationKind k) {
  switch (k) {
    case CorrelationKind::independence: return "independence";
    case CorrelationKind::exchangeable: return "exchangeable";
    case CorrelationKind::ar1: return "ar1";
    case CorrelationKind::unstructured: return "unstructured";
  }
  return "?";
}

inline CorrelationKind parse_corstr(const std::string& s) {
  if (s == "independence") return CorrelationKind::independence;
  if (s == "exchangeable") return CorrelationKind::exchangeable;
  if (s == "ar1") return CorrelationKind::ar1;
  if (s == "unstructured") return CorrelationKind::unstructured;
  throw SpecError("unknown correlation structure '" + s +
                  "' (independence|exchangeable|ar1|unstructured)");
}

/// Working correlation R(alpha). For exchangeable and ar1 the single alpha
/// materializes to any cluster size; unstructured carries an explicit
/// matrix and only fits clusters of that exact size.
struct CorrelationStructure {
  CorrelationKind kind = CorrelationKind::independence;
  double alpha = 0.0;
  Eigen::MatrixXd matrix;  // unstructured only

  /// Distinct correlation parameters at cluster size m.
  Eigen::Index parameter_count(Eigen::Index m) const {
    switch (kind) {
      case CorrelationKind::independence: return 0;
      case CorrelationKind::exchangeable: return 1;
      case CorrelationKind::ar1: return 1;
      case CorrelationKind::unstructured: return m * (m - 1) / 2;
    }
    return 0;
  }

  Eigen::MatrixXd materialize(Eigen::Index m) const {
    switch (kind) {
      case CorrelationKind::independence:
        return Eigen::MatrixXd::Identity(m, m);
      case CorrelationKind::exchangeable: {
        Eigen::MatrixXd r = Eigen::MatrixXd::Constant(m, m, alpha);
        r.diagonal().setOnes();
        return r;
      }
      case CorrelationKind::ar1: {
        Eigen::MatrixXd r(m, m);
        for (Eigen::Index a = 0; a < m; ++a)
          for (Eigen::Index b = 0; b < m; ++b)
            r(a, b) = std::pow(alpha, static_cast<double>(std::abs(a - b)));
        return r;
      }
      case CorrelationKind::unstructured:
        if (matrix.rows() != m)
          throw SpecError("unstructured working correlation was estimated for cluster size " +
                          std::to_string(matrix.rows()) + ", cannot apply to size " +
                          std::to_string(m));
        return matrix;
    }
    return Eigen::MatrixXd::Identity(m, m);
  }

  std::string describe() const {
    switch (kind) {
      case CorrelationKind::independence:
        return "independence";
      case CorrelationKind::exchangeable:
        return "exchangeable alpha=" + std::to_string(alpha);
      case CorrelationKind::ar1:
        return "ar1 alpha=" + std::to_string(alpha);
      case CorrelationKind::unstructured:
        return "unstructured " + std::to_string(matrix.rows()) + "x" +
               std::to_string(matrix.rows()) + " (" +
               std::to_string(parameter_count(matrix.rows())) + " parameters)";
    }
    return "?";
  }
};

/// Pearson residuals e = (y - mu) / sqrt(v(mu)), with the family mean guard
/// applied before the variance function.
inline Eigen::VectorXd pearson_residuals(const Eigen::VectorXd& y, const Eigen::VectorXd& mu,
                                         const FamilySpec& family) {
  if (y.size() != mu.size())
    throw NumericalError("pearson_residuals: length mismatch");
  Eigen::VectorXd e(y.size());
  for (Eigen::Index l = 0; l < y.size(); ++l) {
    const double m = family.clamp_mean(mu(l));
    const double v = family.variance(m);
    if (!(v > 0.0))
      throw NumericalError("zero variance function value at observation " + std::to_string(l));
    e(l) = (y(l) - m) / std::sqrt(v);
  }
  return e;
}

/// Moment estimate of the dispersion: phi = sum(e^2) / (M - q).
inline double estimate_dispersion(const Eigen::VectorXd& residuals, Eigen::Index q) {
  const Eigen::Index m_tot = residuals.size();
  if (m_tot <= q)
    throw SpecError("dispersion needs more observations (" + std::to_string(m_tot) +
                    ") than coefficients (" + std::to_string(q) + ")");
  return residuals.squaredNorm() / static_cast<double>(m_tot - q);
}

namespace detail {

inline void clamp_offdiag(double* value, std::vector<std::string>* warnings,
                          const char* what) {
  constexpr double limit = 0.99;
  if (*value > limit || *value < -limit) {
    if (warnings)
      warnings->push_back(std::string(what) + " estimate " + std::to_string(*value) +
                          " clamped to [-0.99, 0.99]");
    *value = std::min(std::max(*value, -limit), limit);
  }
}

}  // namespace detail

/// Moment estimators for the working correlation, pinned conventions:
///  exchangeable  alpha = sum_i sum_{l<l'} e_l e_l' / (phi * (sum_i m_i(m_i-1)/2 - q))
///  ar1 (lag 1)   alpha = sum_i sum_l e_l e_{l+1}   / (phi * (sum_i (m_i-1) - q))
///  unstructured  R_lm  = sum_i e_il e_im           / (phi * (N - q)), unit diagonal.
/// The AR axis is the flat stacked index (time-major, response-minor); see
/// the README caveat on multivariate clusters. Off-diagonals are clamped to
/// [-0.99, 0.99] with a warning.
inline CorrelationStructure estimate_correlation(const Eigen::VectorXd& residuals,
                                                 const std::vector<Eigen::Index>& cluster_starts,
                                                 CorrelationKind kind, double phi,
                                                 Eigen::Index q,
                                                 std::vector<std::string>* warnings = nullptr) {
  CorrelationStructure out;
  out.kind = kind;
  if (kind == CorrelationKind::independence) return out;

  if (!(phi > 0.0))
    throw NumericalError("correlation estimation needs a positive dispersion");

  const Eigen::Index n_clusters = static_cast<Eigen::Index>(cluster_starts.size()) - 1;

  switch (kind) {
    case CorrelationKind::independence:
      break;

    case CorrelationKind::exchangeable: {
      double num = 0.0;
      double pair_count = 0.0;
      for (Eigen::Index i = 0; i < n_clusters; ++i) {
        const Eigen::Index s = cluster_starts[static_cast<std::size_t>(i)];
        const Eigen::Index m = cluster_starts[static_cast<std::size_t>(i) + 1] - s;
        if (m < 2) continue;
        const double total = residuals.segment(s, m).sum();
        const double sq = residuals.segment(s, m).squaredNorm();
        num += 0.5 * (total * total - sq);  // sum over unordered pairs
        pair_count += 0.5 * static_cast<double>(m) * static_cast<double>(m - 1);
      }
      if (pair_count == 0.0)
        throw SpecError("exchangeable correlation needs a cluster of size >= 2");
      const double denom = phi * (pair_count - static_cast<double>(q));
      if (!(denom > 0.0))
        throw SpecError("exchangeable correlation: not enough residual pairs after "
                        "subtracting q degrees of freedom");
      out.alpha = num / denom;
      detail::clamp_offdiag(&out.alpha, warnings, "exchangeable correlation");
      break;
    }

    case CorrelationKind::ar1: {
      double num = 0.0;
      double lag_count = 0.0;
      for (Eigen::Index i = 0; i < n_clusters; ++i) {
        const Eigen::Index s = cluster_starts[static_cast<std::size_t>(i)];
        const Eigen::Index m = cluster_starts[static_cast<std::size_t>(i) + 1] - s;
        if (m < 2) continue;
        for (Eigen::Index l = 0; l + 1 < m; ++l) num += residuals(s + l) * residuals(s + l + 1);
        lag_count += static_cast<double>(m - 1);
      }
      if (lag_count == 0.0)
        throw SpecError("ar1 correlation needs a cluster of size >= 2");
      const double denom = phi * (lag_count - static_cast<double>(q));
      if (!(denom > 0.0))
        throw SpecError("ar1 correlation: not enough lag-1 pairs after subtracting q "
                        "degrees of freedom");
      out.alpha = num / denom;
      detail::clamp_offdiag(&out.alpha, warnings, "ar1 correlation");
      break;
    }

    case CorrelationKind::unstructured: {
      Eigen::Index m = -1;
      for (Eigen::Index i = 0; i < n_clusters; ++i) {
        const Eigen::Index mi = cluster_starts[static_cast<std::size_t>(i) + 1] -
                                cluster_starts[static_cast<std::size_t>(i)];
        if (m < 0) m = mi;
        if (mi != m)
          throw SpecError("unstructured working correlation requires balanced clusters "
                          "(found sizes " +
                          std::to_string(m) + " and " + std::to_string(mi) + ")");
      }
      const double denom = phi * static_cast<double>(n_clusters - q);
      if (!(denom > 0.0))
        throw SpecError("unstructured correlation needs more clusters (" +
                        std::to_string(n_clusters) + ") than coefficients (" +
                        std::to_string(q) + ")");
      Eigen::MatrixXd r = Eigen::MatrixXd::Zero(m, m);
      for (Eigen::Index i = 0; i < n_clusters; ++i) {
        const auto e = residuals.segment(cluster_starts[static_cast<std::size_t>(i)], m);
        r.noalias() += e * e.transpose();
      }
      r /= denom;
      r = 0.5 * (r + r.transpose()).eval();
      bool clamped = false;
      for (Eigen::Index a = 0; a < m; ++a) {
        for (Eigen::Index b = 0; b < m; ++b) {
          if (a == b) {
            r(a, b) = 1.0;
          } else if (r(a, b) > 0.99 || r(a, b) < -0.99) {
            r(a, b) = std::min(std::max(r(a, b), -0.99), 0.99);
            clamped = true;
          }
        }
      }
      if (clamped && warnings)
        warnings->push_back("unstructured correlation entries clamped to [-0.99, 0.99]");
      out.matrix = std::move(r);
      break;
    }
  }
  return out;
}

/// Ridge guard for a nearly singular working correlation: if the smallest
/// eigenvalue is below 1e-10, 1e-8 is added to the diagonal and a warning
/// recorded. Returns true when the ridge was applied.
inline bool stabilize_correlation(Eigen::MatrixXd& r, std::vector<std::string>* warnings) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(r, Eigen::EigenvaluesOnly);
  const double min_eig = es.eigenvalues().minCoeff();
  if (min_eig < 1e-10) {
    r.diagonal().array() += 1e-8;
    if (warnings)
      warnings->push_back("working correlation nearly singular (min eigenvalue " +
                          std::to_string(min_eig) + "); ridge 1e-8 added");
    return true;
  }
  return false;
}

/// Working covariance V = phi * A^{1/2} R A^{1/2} with A = diag(v(mu)).
inline Eigen::MatrixXd build_working_covariance(const Eigen::MatrixXd& r,
                                                const Eigen::VectorXd& mu_cluster, double phi,
                                                const FamilySpec& family) {
  const Eigen::Index m = mu_cluster.size();
  if (r.rows() != m || r.cols() != m)
    throw NumericalError("working covariance: correlation dimension mismatch");
  Eigen::VectorXd a(m);
  for (Eigen::Index l = 0; l < m; ++l) {
    const double v = family.variance(family.clamp_mean(mu_cluster(l)));
    if (!(v > 0.0))
      throw NumericalError("zero variance function value inside working covariance");
    a(l) = std::sqrt(v);
  }
  return phi * (a.asDiagonal() * r * a.asDiagonal());
}

}  // namespace mmgee
