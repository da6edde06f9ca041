#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "mmgee/dataset.hpp"
#include "mmgee/design.hpp"
#include "mmgee/errors.hpp"
#include "mmgee/gee.hpp"
#include "mmgee/math.hpp"
#include "mmgee/rng.hpp"

namespace mmgee {

enum class ModelVariant { parsimonious, common };

inline const char* model_variant_name(ModelVariant v) {
  return v == ModelVariant::parsimonious ? "parsimonious" : "common";
}

/// Monte Carlo design for bivariate longitudinal binary data. Marginal
/// means follow a probit model in (x1, x2, x1*x2) with response-type shifts;
/// dependence comes from a latent-Gaussian (copula) threshold construction
/// with one within-response and one between-response latent correlation, so
/// the marginal probabilities are exact by construction.
struct SimConfig {
  int n_subjects = 300;
  int n_times = 3;
  // Mean-model truth, generator parameterization: intercept, x1, x2, x1*x2,
  // then the same four interacted with the generator's response indicator
  // (1 for the first response, 0 for the second).
  std::array<double, 8> beta_truth{-0.5, 0.5, 0.9, 0.6, 0.0, 0.0, 0.0, 0.0};
  double gamma0 = 0.2;   // x1 autoregression intercept
  double gamma1 = 0.5;   // x1 autoregression slope
  double x1_initial_sd = 0.4;
  std::vector<double> innovation_sd{0.25, 0.15};  // updates t=2..T
  double x2_probability = 0.5;
  double rho_within = 0.5;
  double rho_between = 0.25;
  int replications = 500;
  std::uint64_t seed = 1;
  int threads = 1;
  std::vector<CorrelationKind> structures{
      CorrelationKind::independence, CorrelationKind::exchangeable, CorrelationKind::ar1,
      CorrelationKind::unstructured};
  std::vector<ModelVariant> variants{ModelVariant::parsimonious, ModelVariant::common};
  GeeControls controls{};

  void validate() const {
    if (n_subjects < 1) throw SpecError("simulation needs at least one subject");
    if (n_times < 1) throw SpecError("simulation needs at least one time point");
    if (replications < 1) throw SpecError("simulation needs at least one replication");
    if (threads < 1) throw SpecError("thread count must be positive");
    if (static_cast<int>(innovation_sd.size()) < n_times - 1)
      throw SpecError("need one innovation standard deviation per update (t = 2..T)");
    if (structures.empty() || variants.empty())
      throw SpecError("at least one structure and one model variant required");
    if (!(x2_probability > 0.0 && x2_probability < 1.0))
      throw SpecError("x2 probability must lie in (0,1)");
    latent_cholesky();  // throws if the latent correlation is not PD
  }

  /// Latent 2T x 2T correlation: rho_within between same-response time
  /// pairs, rho_between between any cross-response pair. Row order matches
  /// the stacked data layout (time-major, response-minor).
  Eigen::MatrixXd latent_correlation() const {
    const Eigen::Index dim = 2 * static_cast<Eigen::Index>(n_times);
    Eigen::MatrixXd s(dim, dim);
    for (Eigen::Index a = 0; a < dim; ++a) {
      for (Eigen::Index b = 0; b < dim; ++b) {
        if (a == b)
          s(a, b) = 1.0;
        else if (a % 2 == b % 2)
          s(a, b) = rho_within;
        else
          s(a, b) = rho_between;
      }
    }
    return s;
  }

  Eigen::MatrixXd latent_cholesky() const {
    Eigen::LLT<Eigen::MatrixXd> llt(latent_correlation());
    if (llt.info() != Eigen::Success)
      throw SpecError("latent correlation matrix (rho_within=" + std::to_string(rho_within) +
                      ", rho_between=" + std::to_string(rho_between) +
                      ") is not positive definite");
    return llt.matrixL();
  }
};

/// x1 path: x_1 ~ N(0, sd0^2), then x_t = gamma0 + gamma1 x_{t-1} + eps_t.
inline Eigen::VectorXd generate_x1_path(const SimConfig& cfg, RngStream& rng) {
  Eigen::VectorXd x(cfg.n_times);
  x(0) = cfg.x1_initial_sd * rng.normal();
  for (int t = 1; t < cfg.n_times; ++t)
    x(t) = cfg.gamma0 + cfg.gamma1 * x(t - 1) +
           cfg.innovation_sd[static_cast<std::size_t>(t - 1)] * rng.normal();
  return x;
}

/// P(Y=1) for one cell: probit of the eight-term mean model. The generator
/// indicator is 1 for the FIRST response and 0 for the second.
inline double marginal_probability(double x1, double x2, double rtype,
                                   const std::array<double, 8>& beta) {
  const double eta = beta[0] + beta[1] * x1 + beta[2] * x2 + beta[3] * x1 * x2 +
                     rtype * (beta[4] + beta[5] * x1 + beta[6] * x2 + beta[7] * x1 * x2);
  return norm_cdf(eta);
}

/// Threshold correlated latent normals at the probit quantiles of the cell
/// probabilities: Y = 1 iff Z <= Phi^{-1}(p). probs is T x 2 (responses in
/// columns), chol_lower the lower Cholesky factor of the latent correlation.
inline Eigen::MatrixXd generate_subject_responses(const Eigen::MatrixXd& probs,
                                                  const Eigen::MatrixXd& chol_lower,
                                                  RngStream& rng) {
  const Eigen::Index t_count = probs.rows();
  const Eigen::Index dim = 2 * t_count;
  Eigen::VectorXd u(dim);
  for (Eigen::Index l = 0; l < dim; ++l) u(l) = rng.normal();
  const Eigen::VectorXd z = chol_lower * u;

  Eigen::MatrixXd y(t_count, 2);
  for (Eigen::Index t = 0; t < t_count; ++t)
    for (Eigen::Index j = 0; j < 2; ++j)
      y(t, j) = (z(2 * t + j) <= norm_quantile(probs(t, j))) ? 1.0 : 0.0;
  return y;
}

/// One full replication dataset: responses y1, y2; covariates x1, x2, x1x2.
/// Replication r always sees the same draws for a given master seed, no
/// matter how replications are scheduled across threads.
inline LongitudinalDataset generate_dataset(const SimConfig& cfg, std::uint64_t replication) {
  RngStream rng(cfg.seed, replication);
  const Eigen::MatrixXd chol = cfg.latent_cholesky();

  LongitudinalDataset ds;
  ds.response_names = {"y1", "y2"};
  ds.covariate_names = {"x1", "x2", "x1x2"};
  const Eigen::Index rows = static_cast<Eigen::Index>(cfg.n_subjects) * cfg.n_times;
  ds.responses.resize(rows, 2);
  ds.covariates.resize(rows, 3);
  ds.cluster_starts.push_back(0);

  Eigen::Index w = 0;
  for (int i = 0; i < cfg.n_subjects; ++i) {
    const Eigen::VectorXd x1 = generate_x1_path(cfg, rng);
    const double x2 = rng.bernoulli(cfg.x2_probability) ? 1.0 : 0.0;

    Eigen::MatrixXd probs(cfg.n_times, 2);
    for (int t = 0; t < cfg.n_times; ++t) {
      probs(t, 0) = marginal_probability(x1(t), x2, 1.0, cfg.beta_truth);
      probs(t, 1) = marginal_probability(x1(t), x2, 0.0, cfg.beta_truth);
    }
    const Eigen::MatrixXd y = generate_subject_responses(probs, chol, rng);

    const std::string id = std::to_string(i + 1);
    for (int t = 0; t < cfg.n_times; ++t) {
      ds.subject_of_row.push_back(id);
      ds.time_of_row.push_back(t + 1);
      ds.responses(w, 0) = y(t, 0);
      ds.responses(w, 1) = y(t, 1);
      ds.covariates(w, 0) = x1(t);
      ds.covariates(w, 1) = x2;
      ds.covariates(w, 2) = x1(t) * x2;
      ++w;
    }
    ds.subject_ids.push_back(id);
    ds.cluster_starts.push_back(w);
  }
  return ds;
}

inline ModelSpec sim_model_spec(ModelVariant variant) {
  ModelSpec spec;
  spec.responses = {"y1", "y2"};
  spec.covariates = {"x1", "x2", "x1x2"};
  if (variant == ModelVariant::common) {
    spec.include_rtype = true;
    spec.interaction = {1, 2, 3};
  }
  return spec;
}

/// Truth in the fitted parameterization. The fit takes y1 as the reference
/// response while the generator indicator marks y1, so the fitted base
/// coefficients are (b0+b4, ..., b3+b7) and the fitted rtype deltas are the
/// negated generator deltas.
inline Eigen::VectorXd fitted_truth(ModelVariant variant, const std::array<double, 8>& b) {
  if (variant == ModelVariant::parsimonious) {
    Eigen::VectorXd t(4);
    t << b[0], b[1], b[2], b[3];
    return t;
  }
  Eigen::VectorXd t(8);
  t << b[0] + b[4], b[1] + b[5], b[2] + b[6], b[3] + b[7], -b[4], -b[5], -b[6], -b[7];
  return t;
}

struct McCell {
  ModelVariant variant;
  CorrelationKind structure;
  Eigen::MatrixXd estimates;   // replications x q (NaN when failed)
  Eigen::MatrixXd robust_ses;  // replications x q
  std::vector<std::uint8_t> converged;
  int n_converged = 0;
  double seconds = 0.0;
};

struct McSummaryRow {
  std::string parameter;
  ModelVariant variant;
  CorrelationKind structure;
  double mean = 0.0;
  double bias = 0.0;
  double mse = 0.0;
  int n_converged = 0;
};

struct McResult {
  SimConfig config;
  std::vector<McCell> cells;
  std::vector<McSummaryRow> summary;
};

/// Mean, bias and MSE per parameter over the converged replications of one
/// cell. MSE is the average of (estimate - truth)^2, so MSE >= bias^2.
inline std::vector<McSummaryRow> summarize_estimates(const McCell& cell,
                                                     const Eigen::VectorXd& truth) {
  if (cell.estimates.cols() != truth.size())
    throw SpecError("summarize_estimates: truth length mismatch");
  std::vector<McSummaryRow> rows;
  for (Eigen::Index j = 0; j < truth.size(); ++j) {
    McSummaryRow r;
    r.parameter = "beta" + std::to_string(j);
    r.variant = cell.variant;
    r.structure = cell.structure;
    r.n_converged = cell.n_converged;
    if (cell.n_converged == 0) {
      r.mean = r.bias = r.mse = std::numeric_limits<double>::quiet_NaN();
    } else {
      double sum = 0.0, sq = 0.0;
      for (Eigen::Index rep = 0; rep < cell.estimates.rows(); ++rep) {
        if (!cell.converged[static_cast<std::size_t>(rep)]) continue;
        const double est = cell.estimates(rep, j);
        sum += est;
        const double dev = est - truth(j);
        sq += dev * dev;
      }
      r.mean = sum / cell.n_converged;
      r.bias = r.mean - truth(j);
      r.mse = sq / cell.n_converged;
    }
    rows.push_back(r);
  }
  return rows;
}

/// Run the full Monte Carlo comparison. Replications are independent and
/// may run on several threads; per-replication RNG substreams and an
/// ordered summary pass make the result identical for any thread count.
inline McResult monte_carlo(const SimConfig& cfg) {
  cfg.validate();
  const int reps = cfg.replications;

  McResult result;
  result.config = cfg;
  struct CellDef {
    ModelVariant variant;
    CorrelationKind structure;
    Eigen::Index q;
  };
  std::vector<CellDef> defs;
  for (ModelVariant v : cfg.variants) {
    const Eigen::Index q = sim_model_spec(v).stacked_columns();
    for (CorrelationKind s : cfg.structures) defs.push_back({v, s, q});
  }

  for (const auto& def : defs) {
    McCell cell;
    cell.variant = def.variant;
    cell.structure = def.structure;
    cell.estimates = Eigen::MatrixXd::Constant(reps, def.q,
                                               std::numeric_limits<double>::quiet_NaN());
    cell.robust_ses = cell.estimates;
    cell.converged.assign(static_cast<std::size_t>(reps), 0);
    result.cells.push_back(std::move(cell));
  }

  const int n_threads = std::min(cfg.threads, reps);
  std::vector<std::vector<double>> thread_seconds(
      static_cast<std::size_t>(n_threads), std::vector<double>(defs.size(), 0.0));
  std::atomic<int> next{0};

  auto worker = [&](int thread_idx) {
    for (;;) {
      const int rep = next.fetch_add(1);
      if (rep >= reps) break;
      const LongitudinalDataset data = generate_dataset(cfg, static_cast<std::uint64_t>(rep));
      const FamilySpec family = FamilySpec::make(Family::binomial, Link::probit);

      std::size_t cell_idx = 0;
      for (ModelVariant v : cfg.variants) {
        const StackedProblem problem = build_stacked_problem(data, sim_model_spec(v));
        for (CorrelationKind s : cfg.structures) {
          const auto t0 = std::chrono::steady_clock::now();
          McCell& cell = result.cells[cell_idx];
          try {
            const GeeFit fit = fit_gee(problem, family, s, cfg.controls);
            if (fit.converged) {
              for (Eigen::Index j = 0; j < fit.beta.size(); ++j) {
                cell.estimates(rep, j) = fit.beta(j);
                cell.robust_ses(rep, j) = fit.robust_se(j);
              }
              cell.converged[static_cast<std::size_t>(rep)] = 1;
            }
          } catch (const std::exception&) {
            // counted as a failed replication for this cell
          }
          thread_seconds[static_cast<std::size_t>(thread_idx)][cell_idx] +=
              std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
          ++cell_idx;
        }
      }
    }
  };

  if (n_threads <= 1) {
    worker(0);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n_threads));
    for (int t = 0; t < n_threads; ++t) pool.emplace_back(worker, t);
    for (auto& t : pool) t.join();
  }

  for (std::size_t c = 0; c < result.cells.size(); ++c) {
    McCell& cell = result.cells[c];
    cell.n_converged = 0;
    for (std::uint8_t ok : cell.converged) cell.n_converged += ok;
    for (const auto& ts : thread_seconds) cell.seconds += ts[c];
    const auto rows = summarize_estimates(cell, fitted_truth(cell.variant, cfg.beta_truth));
    result.summary.insert(result.summary.end(), rows.begin(), rows.end());
  }
  return result;
}

/// Fraction of converged replications whose robust Wald interval covers the
/// truth, per parameter and cell.
struct CoverageRow {
  std::string parameter;
  ModelVariant variant;
  CorrelationKind structure;
  double coverage = 0.0;
  int n = 0;
};

inline std::vector<CoverageRow> wald_coverage(const McResult& result, double level = 0.95) {
  const double zcrit = norm_quantile(0.5 + level / 2.0);
  std::vector<CoverageRow> rows;
  for (const auto& cell : result.cells) {
    const Eigen::VectorXd truth = fitted_truth(cell.variant, result.config.beta_truth);
    for (Eigen::Index j = 0; j < truth.size(); ++j) {
      CoverageRow r;
      r.parameter = "beta" + std::to_string(j);
      r.variant = cell.variant;
      r.structure = cell.structure;
      int hit = 0;
      for (Eigen::Index rep = 0; rep < cell.estimates.rows(); ++rep) {
        if (!cell.converged[static_cast<std::size_t>(rep)]) continue;
        if (std::abs(cell.estimates(rep, j) - truth(j)) <= zcrit * cell.robust_ses(rep, j))
          ++hit;
      }
      r.n = cell.n_converged;
      r.coverage = cell.n_converged ? static_cast<double>(hit) / cell.n_converged
                                    : std::numeric_limits<double>::quiet_NaN();
      rows.push_back(r);
    }
  }
  return rows;
}

/// Summary CSV: parameter,model,structure,mean,bias,mse,n_converged.
inline void write_mc_csv(std::ostream& out, const McResult& result) {
  using detail::fmt_full;
  out << "parameter,model,structure,mean,bias,mse,n_converged\n";
  for (const auto& r : result.summary)
    out << r.parameter << "," << model_variant_name(r.variant) << ","
        << correlation_name(r.structure) << "," << fmt_full(r.mean) << "," << fmt_full(r.bias)
        << "," << fmt_full(r.mse) << "," << r.n_converged << "\n";
}

/// Raw per-replication draws (estimate and robust SE per parameter).
inline void write_mc_draws_csv(std::ostream& out, const McResult& result) {
  using detail::fmt_full;
  out << "replication,model,structure,parameter,estimate,robust_se,converged\n";
  for (const auto& cell : result.cells) {
    for (Eigen::Index rep = 0; rep < cell.estimates.rows(); ++rep) {
      for (Eigen::Index j = 0; j < cell.estimates.cols(); ++j) {
        out << rep << "," << model_variant_name(cell.variant) << ","
            << correlation_name(cell.structure) << ",beta" << j << ","
            << fmt_full(cell.estimates(rep, j)) << "," << fmt_full(cell.robust_ses(rep, j))
            << "," << static_cast<int>(cell.converged[static_cast<std::size_t>(rep)]) << "\n";
      }
    }
  }
}

}  // namespace mmgee
