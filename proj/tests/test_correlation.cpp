#include <catch2/catch_amalgamated.hpp>
#include <random>

#include "mmgee/correlation.hpp"
#include "oracles.hpp"

using namespace mmgee;

namespace {

std::vector<Eigen::Index> uniform_clusters(Eigen::Index n, Eigen::Index m) {
  std::vector<Eigen::Index> starts;
  for (Eigen::Index i = 0; i <= n; ++i) starts.push_back(i * m);
  return starts;
}

}  // namespace

TEST_CASE("pearson residuals at reference points", "[correlation]") {
  const auto gaussian = FamilySpec::make(Family::gaussian, Link::identity);
  const auto binomial = FamilySpec::make(Family::binomial, Link::logit);
  const auto poisson = FamilySpec::make(Family::poisson, Link::log);

  Eigen::VectorXd y(1), mu(1);
  y << 2.0; mu << 1.0;
  REQUIRE(pearson_residuals(y, mu, gaussian)(0) == Catch::Approx(1.0));
  y << 1.0; mu << 0.5;
  REQUIRE(pearson_residuals(y, mu, binomial)(0) == Catch::Approx(1.0));
  y << 4.0; mu << 1.0;
  REQUIRE(pearson_residuals(y, mu, poisson)(0) == Catch::Approx(3.0));

  mu << 0.0;  // v(mu)=0 for poisson after no clamping
  REQUIRE_THROWS_AS(pearson_residuals(y, mu, poisson), NumericalError);
}

TEST_CASE("dispersion estimator", "[correlation]") {
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(10);
  REQUIRE(estimate_dispersion(zero, 2) == 0.0);

  Eigen::VectorXd e(4);
  e << 1.0, -1.0, 1.0, -1.0;
  REQUIRE(estimate_dispersion(e, 0) == Catch::Approx(1.0));

  REQUIRE_THROWS_AS(estimate_dispersion(e, 4), SpecError);

  // Monte Carlo: phi-hat of iid N(0, 2^2) residuals matches the two-pass
  // sample-variance oracle and the generating variance.
  std::mt19937 gen(42);
  std::normal_distribution<double> normal(0.0, 2.0);
  Eigen::VectorXd draws(10000);
  for (Eigen::Index i = 0; i < draws.size(); ++i) draws(i) = normal(gen);
  const double phi = estimate_dispersion(draws, 0);
  REQUIRE(phi == Catch::Approx(4.0).margin(0.2));
  const double var_oracle = oracle::sample_variance(draws);
  REQUIRE(phi == Catch::Approx(var_oracle + draws.mean() * draws.mean()).margin(1e-12));
}

TEST_CASE("gaussian dispersion is scale-equivariant", "[correlation]") {
  std::mt19937 gen(7);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd e(500);
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = normal(gen);
  const double phi1 = estimate_dispersion(e, 3);
  const double phi2 = estimate_dispersion((2.5 * e).eval(), 3);
  REQUIRE(phi2 == Catch::Approx(2.5 * 2.5 * phi1).epsilon(1e-12));
}

TEST_CASE("independence returns the identity regardless of residuals", "[correlation]") {
  Eigen::VectorXd e(6);
  e << 1.0, 2.0, 3.0, -1.0, -2.0, -3.0;
  const auto c = estimate_correlation(e, uniform_clusters(3, 2),
                                      CorrelationKind::independence, 1.0, 0);
  REQUIRE(c.kind == CorrelationKind::independence);
  REQUIRE(c.materialize(4).isIdentity(0.0));
  REQUIRE(c.parameter_count(24) == 0);
}

TEST_CASE("exchangeable estimator: perfectly correlated residuals give alpha 1",
          "[correlation]") {
  // e_i = (c, c) with c^2 = phi, q = 0 -> raw alpha exactly 1, clamped to 0.99
  const double c = 1.7;
  const double phi = c * c;
  const Eigen::Index n = 40;
  Eigen::VectorXd e(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    e(2 * i) = c;
    e(2 * i + 1) = c;
  }
  std::vector<std::string> warnings;
  const auto est = estimate_correlation(e, uniform_clusters(n, 2),
                                        CorrelationKind::exchangeable, phi, 0, &warnings);
  REQUIRE(est.alpha == Catch::Approx(0.99));  // clamped from exactly 1
  REQUIRE_FALSE(warnings.empty());

  // alternating signs within clusters -> alpha = -1 raw, clamped
  Eigen::VectorXd e2(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    e2(2 * i) = c;
    e2(2 * i + 1) = -c;
  }
  const auto est2 = estimate_correlation(e2, uniform_clusters(n, 2),
                                         CorrelationKind::exchangeable, phi, 0);
  REQUIRE(est2.alpha == Catch::Approx(-0.99));
}

TEST_CASE("exchangeable and ar1 moment estimators against hand sums", "[correlation]") {
  // two clusters of size 3, hand-computable sums
  Eigen::VectorXd e(6);
  e << 0.5, -0.2, 0.3, 1.0, 0.4, -0.6;
  const double phi = 0.8;
  const Eigen::Index q = 2;

  double pair_sum = 0.0;
  for (int i : {0, 3}) {
    pair_sum += e(i) * e(i + 1) + e(i) * e(i + 2) + e(i + 1) * e(i + 2);
  }
  const double denom_exch = phi * (2 * 3.0 - q);  // two clusters contribute 3 pairs each
  const auto exch = estimate_correlation(e, uniform_clusters(2, 3),
                                         CorrelationKind::exchangeable, phi, q);
  REQUIRE(exch.alpha == Catch::Approx(pair_sum / denom_exch).epsilon(1e-14));

  double lag_sum = 0.0;
  for (int i : {0, 3}) lag_sum += e(i) * e(i + 1) + e(i + 1) * e(i + 2);
  const double denom_ar1 = phi * (2 * 2.0 - q);
  const auto ar1 =
      estimate_correlation(e, uniform_clusters(2, 3), CorrelationKind::ar1, phi, q);
  REQUIRE(ar1.alpha == Catch::Approx(lag_sum / denom_ar1).epsilon(1e-14));

  // AR(1) materialization is the power pattern
  const auto r = ar1.materialize(4);
  REQUIRE(r(0, 3) == Catch::Approx(std::pow(ar1.alpha, 3.0)));
  REQUIRE(r(2, 2) == 1.0);
}

TEST_CASE("unstructured estimator: 276 parameters at cluster size 24", "[correlation]") {
  const Eigen::Index n = 50, m = 24;
  std::mt19937 gen(11);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd e(n * m);
  for (Eigen::Index i = 0; i < e.size(); ++i) e(i) = normal(gen);

  const auto est = estimate_correlation(e, uniform_clusters(n, m),
                                        CorrelationKind::unstructured, 1.0, 3);
  REQUIRE(est.matrix.rows() == 24);
  REQUIRE(est.parameter_count(24) == 276);
  REQUIRE(est.matrix.diagonal().isOnes(0.0));
  REQUIRE(est.matrix.isApprox(est.matrix.transpose()));
  REQUIRE(est.matrix.cwiseAbs().maxCoeff() <= 1.0);

  // hand-check one off-diagonal entry
  double s01 = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) s01 += e(i * m) * e(i * m + 1);
  REQUIRE(est.matrix(0, 1) == Catch::Approx(s01 / (1.0 * (n - 3))).epsilon(1e-12));
}

TEST_CASE("correlation estimator error paths", "[correlation]") {
  Eigen::VectorXd e(4);
  e << 1.0, 2.0, 0.5, 0.3;

  // unstructured on unbalanced clusters
  std::vector<Eigen::Index> unbalanced{0, 1, 4};
  REQUIRE_THROWS_AS(
      estimate_correlation(e, unbalanced, CorrelationKind::unstructured, 1.0, 0), SpecError);

  // all clusters singletons -> no pairs
  REQUIRE_THROWS_AS(estimate_correlation(e, std::vector<Eigen::Index>{0, 1, 2, 3, 4},
                                         CorrelationKind::exchangeable, 1.0, 0),
                    SpecError);

  // q too large relative to pair count
  REQUIRE_THROWS_AS(
      estimate_correlation(e, uniform_clusters(2, 2), CorrelationKind::ar1, 1.0, 5),
      SpecError);

  // non-positive dispersion
  REQUIRE_THROWS_AS(
      estimate_correlation(e, uniform_clusters(2, 2), CorrelationKind::exchangeable, 0.0, 0),
      NumericalError);
}

TEST_CASE("working covariance construction", "[correlation]") {
  const auto gaussian = FamilySpec::make(Family::gaussian, Link::identity);
  const auto binomial = FamilySpec::make(Family::binomial, Link::logit);

  Eigen::VectorXd mu2 = Eigen::VectorXd::Constant(2, 0.5);
  CorrelationStructure exch{CorrelationKind::exchangeable, 0.5, {}};
  const Eigen::MatrixXd v = build_working_covariance(exch.materialize(2), mu2, 1.0, binomial);
  REQUIRE(v(0, 0) == Catch::Approx(0.25));
  REQUIRE(v(1, 1) == Catch::Approx(0.25));
  REQUIRE(v(0, 1) == Catch::Approx(0.125));
  REQUIRE(v(1, 0) == Catch::Approx(0.125));

  // R = I, gaussian, phi = 1 -> identity
  Eigen::VectorXd mu3 = Eigen::VectorXd::Constant(3, -4.0);
  const Eigen::MatrixXd v_id = build_working_covariance(
      Eigen::MatrixXd::Identity(3, 3), mu3, 1.0, gaussian);
  REQUIRE(v_id.isIdentity(1e-15));

  // linear in phi
  const Eigen::MatrixXd v2 = build_working_covariance(exch.materialize(2), mu2, 2.0, binomial);
  REQUIRE(v2.isApprox(2.0 * v, 1e-15));
}

TEST_CASE("near-singular correlation gets a ridge and a warning", "[correlation]") {
  Eigen::MatrixXd r = Eigen::MatrixXd::Constant(3, 3, 1.0);  // rank one
  std::vector<std::string> warnings;
  REQUIRE(stabilize_correlation(r, &warnings));
  REQUIRE(r(0, 0) == Catch::Approx(1.0 + 1e-8));
  REQUIRE(warnings.size() == 1);

  Eigen::MatrixXd ok = Eigen::MatrixXd::Identity(3, 3);
  REQUIRE_FALSE(stabilize_correlation(ok, &warnings));
  REQUIRE(warnings.size() == 1);
}
