#pragma once

#include <cmath>
#include <optional>
#include <string>

#include "mmgee/errors.hpp"
#include "mmgee/math.hpp"

namespace mmgee {

enum class Family { gaussian, binomial, poisson };
enum class Link { identity, logit, probit, log };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::gaussian: return "gaussian";
    case Family::binomial: return "binomial";
    case Family::poisson: return "poisson";
  }
  return "?";
}

inline const char* link_name(Link l) {
  switch (l) {
    case Link::identity: return "identity";
    case Link::logit: return "logit";
    case Link::probit: return "probit";
    case Link::log: return "log";
  }
  return "?";
}

/// Response family: link, inverse link, mean derivative and variance
/// function. Allowed pairs are gaussian/identity, binomial/logit,
/// binomial/probit and poisson/log.
///
/// Numerical notes, relied on by the solver:
///  - binomial means are clamped to [1e-12, 1-1e-12] before variance and
///    residual computations (clamp_mean); this is a guard against v(mu)=0,
///    not a model change;
///  - inverse links saturate instead of overflowing: the log link caps the
///    linear predictor at +-700, the binomial links flush to the clamp
///    boundaries once |eta| exceeds double resolution (around 36 for logit,
///    8 for probit), so link(inverse_link(eta)) = eta holds only while the
///    mean is representable away from its bounds.
struct FamilySpec {
  Family family = Family::gaussian;
  Link link = Link::identity;
  std::optional<double> fixed_dispersion;  // empty -> estimate by moments

  static Link default_link(Family f) {
    switch (f) {
      case Family::gaussian: return Link::identity;
      case Family::binomial: return Link::logit;
      case Family::poisson: return Link::log;
    }
    return Link::identity;
  }

  static FamilySpec make(Family f, Link l, std::optional<double> phi = {}) {
    const bool ok = (f == Family::gaussian && l == Link::identity) ||
                    (f == Family::binomial && (l == Link::logit || l == Link::probit)) ||
                    (f == Family::poisson && l == Link::log);
    if (!ok) {
      throw SpecError(std::string("unsupported family/link pair: ") + family_name(f) +
                      "/" + link_name(l));
    }
    if (phi && !(*phi > 0.0)) throw SpecError("fixed dispersion must be positive");
    return FamilySpec{f, l, phi};
  }

  static FamilySpec parse(const std::string& family_str, const std::string& link_str = "",
                          std::optional<double> phi = {}) {
    Family f;
    if (family_str == "gaussian") f = Family::gaussian;
    else if (family_str == "binomial") f = Family::binomial;
    else if (family_str == "poisson") f = Family::poisson;
    else throw SpecError("unknown family '" + family_str + "' (gaussian|binomial|poisson)");

    Link l;
    if (link_str.empty()) l = default_link(f);
    else if (link_str == "identity") l = Link::identity;
    else if (link_str == "logit") l = Link::logit;
    else if (link_str == "probit") l = Link::probit;
    else if (link_str == "log") l = Link::log;
    else throw SpecError("unknown link '" + link_str + "' (identity|logit|probit|log)");

    return make(f, l, phi);
  }

  /// eta = g(mu). mu must lie in the open domain of the link.
  double link_value(double mu) const {
    switch (link) {
      case Link::identity:
        return mu;
      case Link::logit:
        if (!(mu > 0.0 && mu < 1.0))
          throw NumericalError("logit link requires 0 < mu < 1");
        return std::log(mu) - std::log1p(-mu);
      case Link::probit:
        if (!(mu > 0.0 && mu < 1.0))
          throw NumericalError("probit link requires 0 < mu < 1");
        return norm_quantile(mu);
      case Link::log:
        if (!(mu > 0.0)) throw NumericalError("log link requires mu > 0");
        return std::log(mu);
    }
    return 0.0;
  }

  /// mu = g^{-1}(eta); finite for all finite eta (saturating, see above).
  double inverse_link(double eta) const {
    switch (link) {
      case Link::identity:
        return eta;
      case Link::logit: {
        if (eta >= 0.0) {
          const double z = std::exp(-eta);
          return 1.0 / (1.0 + z);
        }
        const double z = std::exp(eta);
        return z / (1.0 + z);
      }
      case Link::probit:
        return norm_cdf(eta);
      case Link::log:
        return std::exp(std::min(std::max(eta, -700.0), 700.0));
    }
    return 0.0;
  }

  /// dmu/deta, strictly positive for every supported link.
  double mean_derivative(double eta) const {
    switch (link) {
      case Link::identity:
        return 1.0;
      case Link::logit: {
        const double z = std::exp(-std::abs(eta));
        const double denom = 1.0 + z;
        return z / (denom * denom);
      }
      case Link::probit:
        return norm_pdf(eta);
      case Link::log:
        return std::exp(std::min(std::max(eta, -700.0), 700.0));
    }
    return 0.0;
  }

  /// Variance function v(mu): 1, mu(1-mu) or mu.
  double variance(double mu) const {
    switch (family) {
      case Family::gaussian:
        return 1.0;
      case Family::binomial:
        if (!(mu >= 0.0 && mu <= 1.0))
          throw NumericalError("binomial variance requires mu in [0,1]");
        return mu * (1.0 - mu);
      case Family::poisson:
        if (!(mu >= 0.0)) throw NumericalError("poisson variance requires mu >= 0");
        return mu;
    }
    return 1.0;
  }

  /// Solver-side mean guard; identity for non-binomial families.
  double clamp_mean(double mu) const {
    if (family != Family::binomial) return mu;
    constexpr double eps = 1e-12;
    return std::min(std::max(mu, eps), 1.0 - eps);
  }
};

}  // namespace mmgee
