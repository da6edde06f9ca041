#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/QR>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mmgee/correlation.hpp"
#include "mmgee/design.hpp"
#include "mmgee/errors.hpp"
#include "mmgee/family.hpp"

namespace mmgee {

struct GeeControls {
  double tolerance = 1e-6;  // convergence: max |delta beta|
  int max_iterations = 25;
};

/// Result of a GEE fit. Non-convergence is reported through `converged`
/// rather than an error so callers can inspect the step trace; covariances
/// are still computed at the last iterate.
struct GeeFit {
  Eigen::VectorXd beta;
  Eigen::MatrixXd robust_cov;  // sandwich B^{-1} M B^{-1}
  Eigen::MatrixXd model_cov;   // phi * B^{-1}
  double phi = 1.0;
  bool phi_fixed = false;
  CorrelationStructure correlation;
  bool converged = false;
  bool degenerate = false;  // all Pearson residuals vanished
  int iterations = 0;
  std::vector<double> step_trace;  // max |delta beta| per iteration
  Eigen::VectorXd fitted_means;
  double scaled_score = 0.0;  // max |B^{-1} score| at the final iterate
  std::vector<std::string> labels;
  std::vector<std::string> warnings;

  double robust_se(Eigen::Index j) const { return std::sqrt(robust_cov(j, j)); }
  double model_se(Eigen::Index j) const { return std::sqrt(model_cov(j, j)); }
};

namespace detail {

struct ClusterAccumulator {
  Eigen::MatrixXd bread;   // sum D' V^{-1} D   (phi-free V)
  Eigen::VectorXd score;   // sum D' V^{-1} (y - mu)
  Eigen::MatrixXd meat;    // sum (D' V^{-1} r)(D' V^{-1} r)'
};

/// One pass over the clusters at the mean vector implied by `beta`.
/// V is built with phi = 1; the dispersion scales out of the scoring step
/// and is reapplied where it matters (the model-based covariance).
inline ClusterAccumulator accumulate_clusters(const StackedProblem& pr,
                                              const FamilySpec& family,
                                              const CorrelationStructure& corr,
                                              const Eigen::VectorXd& beta,
                                              std::vector<std::string>* warnings) {
  const Eigen::Index q = pr.n_coefficients();
  ClusterAccumulator acc{Eigen::MatrixXd::Zero(q, q), Eigen::VectorXd::Zero(q),
                         Eigen::MatrixXd::Zero(q, q)};

  const Eigen::VectorXd eta = pr.x * beta;

  // Materialized (and, if needed, ridged) R per distinct cluster size.
  std::map<Eigen::Index, Eigen::MatrixXd> r_cache;
  auto correlation_for = [&](Eigen::Index m) -> const Eigen::MatrixXd& {
    auto it = r_cache.find(m);
    if (it == r_cache.end()) {
      Eigen::MatrixXd r = corr.materialize(m);
      if (m > 1) stabilize_correlation(r, warnings);
      it = r_cache.emplace(m, std::move(r)).first;
    }
    return it->second;
  };

  for (Eigen::Index i = 0; i < pr.n_clusters(); ++i) {
    const Eigen::Index s = pr.cluster_begin(i);
    const Eigen::Index m = pr.cluster_size(i);

    Eigen::VectorXd mu(m), dmu(m), a(m);
    for (Eigen::Index l = 0; l < m; ++l) {
      mu(l) = family.clamp_mean(family.inverse_link(eta(s + l)));
      dmu(l) = family.mean_derivative(eta(s + l));
      const double v = family.variance(mu(l));
      if (!(v > 0.0))
        throw NumericalError("cluster " + pr.subject_ids[static_cast<std::size_t>(i)] +
                             ": zero variance function value");
      a(l) = std::sqrt(v);
    }

    const Eigen::MatrixXd& r = correlation_for(m);
    Eigen::MatrixXd v = a.asDiagonal() * r * a.asDiagonal();
    Eigen::LLT<Eigen::MatrixXd> llt(v);
    if (llt.info() != Eigen::Success)
      throw NumericalError("cluster " + pr.subject_ids[static_cast<std::size_t>(i)] +
                           ": working covariance not positive definite");

    const Eigen::MatrixXd d = dmu.asDiagonal() * pr.x.middleRows(s, m);
    const Eigen::VectorXd resid = pr.y.segment(s, m) - mu;
    const Eigen::MatrixXd w = llt.solve(d);            // V^{-1} D
    const Eigen::VectorXd u = d.transpose() * llt.solve(resid);  // D' V^{-1} r

    acc.bread.noalias() += d.transpose() * w;
    acc.score += u;
    acc.meat.noalias() += u * u.transpose();
  }
  return acc;
}

inline void check_finite(const Eigen::VectorXd& v, const char* what) {
  if (!v.allFinite()) throw NumericalError(std::string(what) + ": non-finite values");
}

}  // namespace detail

/// One Fisher-scoring step: delta = (sum D'V^{-1}D)^{-1} sum D'V^{-1}(y-mu).
/// The dispersion cancels between the two sums, so any positive phi gives
/// the same step.
inline Eigen::VectorXd beta_update_step(const Eigen::VectorXd& beta, const StackedProblem& pr,
                                        const FamilySpec& family,
                                        const CorrelationStructure& corr, double phi = 1.0) {
  if (!(phi > 0.0)) throw NumericalError("beta_update_step: dispersion must be positive");
  auto acc = detail::accumulate_clusters(pr, family, corr, beta, nullptr);
  Eigen::LLT<Eigen::MatrixXd> llt(acc.bread);
  if (llt.info() != Eigen::Success)
    throw NumericalError("weighted information matrix is singular");
  Eigen::VectorXd delta = llt.solve(acc.score);
  detail::check_finite(delta, "beta update");
  return delta;
}

namespace detail {

/// Rank check via column-pivoted QR; names the trailing pivot columns when
/// the design is rank deficient.
inline void require_full_rank(const StackedProblem& pr) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(pr.x);
  const Eigen::Index rank = qr.rank();
  const Eigen::Index q = pr.n_coefficients();
  if (rank < q) {
    std::string names;
    const auto perm = qr.colsPermutation().indices();
    for (Eigen::Index j = rank; j < q; ++j) {
      if (!names.empty()) names += ", ";
      names += pr.labels[static_cast<std::size_t>(perm(j))];
    }
    throw SpecError("design matrix is rank deficient (rank " + std::to_string(rank) + " of " +
                    std::to_string(q) + "); linearly dependent columns: " + names);
  }
}

}  // namespace detail

/// Fisher-scoring GEE fit. Starts from the independence GLM solution, then
/// alternates moment re-estimation of (phi, alpha) with scoring updates of
/// beta until max |delta beta| < tolerance.
inline GeeFit fit_gee(const StackedProblem& pr, const FamilySpec& family,
                      CorrelationKind structure, const GeeControls& controls = {}) {
  const Eigen::Index q = pr.n_coefficients();
  if (pr.n_rows() <= q)
    throw SpecError("need more stacked observations (" + std::to_string(pr.n_rows()) +
                    ") than coefficients (" + std::to_string(q) + ")");
  if (pr.n_clusters() < 1) throw SpecError("no clusters");
  detail::require_full_rank(pr);

  GeeFit fit;
  fit.labels = pr.labels;
  fit.phi_fixed = family.fixed_dispersion.has_value();

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(q);
  const CorrelationStructure independence{CorrelationKind::independence, 0.0, {}};

  // Warm start: IRLS under independence (this is the plain GLM fit).
  for (int it = 0; it < controls.max_iterations; ++it) {
    const Eigen::VectorXd delta = beta_update_step(beta, pr, family, independence);
    beta += delta;
    if (delta.cwiseAbs().maxCoeff() < controls.tolerance) break;
  }

  auto means_at = [&](const Eigen::VectorXd& b) {
    const Eigen::VectorXd eta = pr.x * b;
    Eigen::VectorXd mu(eta.size());
    for (Eigen::Index l = 0; l < eta.size(); ++l) mu(l) = family.inverse_link(eta(l));
    return mu;
  };

  CorrelationStructure corr{structure, 0.0, {}};
  double phi_used = family.fixed_dispersion.value_or(1.0);

  for (int it = 1; it <= controls.max_iterations; ++it) {
    const Eigen::VectorXd mu = means_at(beta);
    const Eigen::VectorXd resid = pearson_residuals(pr.y, mu, family);
    const double phi_raw = estimate_dispersion(resid, q);
    if (phi_raw == 0.0) {
      fit.degenerate = true;
      fit.converged = true;
      fit.iterations = it;
      fit.warnings.push_back("all Pearson residuals are zero; fit is exact (degenerate)");
      corr = CorrelationStructure{structure, 0.0, {}};
      if (structure == CorrelationKind::unstructured)
        corr.matrix = Eigen::MatrixXd::Identity(pr.cluster_size(0), pr.cluster_size(0));
      break;
    }
    phi_used = family.fixed_dispersion.value_or(phi_raw);
    corr = estimate_correlation(resid, pr.cluster_starts, structure, phi_used, q,
                                &fit.warnings);

    const Eigen::VectorXd delta = beta_update_step(beta, pr, family, corr);
    beta += delta;
    const double step = delta.cwiseAbs().maxCoeff();
    fit.step_trace.push_back(step);
    fit.iterations = it;
    if (step < controls.tolerance) {
      fit.converged = true;
      break;
    }
  }
  if (!fit.converged && !fit.degenerate)
    fit.warnings.push_back("Fisher scoring did not converge within " +
                           std::to_string(controls.max_iterations) + " iterations");

  // Final moment estimates and covariances at the final iterate.
  const Eigen::VectorXd mu = means_at(beta);
  if (!fit.degenerate) {
    const Eigen::VectorXd resid = pearson_residuals(pr.y, mu, family);
    const double phi_raw = estimate_dispersion(resid, q);
    if (phi_raw == 0.0) {
      fit.degenerate = true;
      fit.warnings.push_back("all Pearson residuals are zero; fit is exact (degenerate)");
      corr = CorrelationStructure{structure, 0.0, {}};
      if (structure == CorrelationKind::unstructured)
        corr.matrix = Eigen::MatrixXd::Identity(pr.cluster_size(0), pr.cluster_size(0));
      phi_used = family.fixed_dispersion.value_or(0.0);
    } else {
      phi_used = family.fixed_dispersion.value_or(phi_raw);
      corr = estimate_correlation(resid, pr.cluster_starts, structure, phi_used, q,
                                  &fit.warnings);
    }
  } else {
    phi_used = family.fixed_dispersion.value_or(0.0);
  }

  auto acc = detail::accumulate_clusters(pr, family, corr, beta, &fit.warnings);
  Eigen::LLT<Eigen::MatrixXd> llt(acc.bread);
  if (llt.info() != Eigen::Success)
    throw NumericalError("weighted information matrix is singular at the solution");
  const Eigen::MatrixXd bread_inv = llt.solve(Eigen::MatrixXd::Identity(q, q));

  // clamp/ridge warnings repeat across iterations; keep the first of each
  {
    std::vector<std::string> unique;
    for (const auto& w : fit.warnings) {
      bool seen = false;
      for (const auto& u : unique)
        if (u == w) seen = true;
      if (!seen) unique.push_back(w);
    }
    fit.warnings = std::move(unique);
  }

  fit.beta = beta;
  fit.phi = phi_used;
  fit.correlation = corr;
  fit.fitted_means = mu;
  fit.model_cov = phi_used * bread_inv;
  fit.robust_cov = bread_inv * acc.meat * bread_inv;
  fit.model_cov = 0.5 * (fit.model_cov + fit.model_cov.transpose()).eval();
  fit.robust_cov = 0.5 * (fit.robust_cov + fit.robust_cov.transpose()).eval();
  fit.scaled_score = (bread_inv * acc.score).cwiseAbs().maxCoeff();
  return fit;
}

}  // namespace mmgee
