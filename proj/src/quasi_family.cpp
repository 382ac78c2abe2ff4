#include "efm/quasi_family.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace efm {

namespace {

constexpr double kVarFloor = 1e-8;      // floor for V(x) in the normalization term
constexpr double kLogitMuEps = 1e-15;   // keeps logit means strictly inside (0,1)
constexpr double kEtaExpCap = 700.0;    // exp() overflow guard for the log link

[[noreturn]] void domain_error(const char* what, double value) {
  throw std::domain_error(std::string(what) + " (got " + std::to_string(value) + ")");
}

bool is_log_family(FamilyKind f) {
  return f == FamilyKind::poisson || f == FamilyKind::quasi_poisson ||
         f == FamilyKind::negative_binomial || f == FamilyKind::gamma;
}

// x*log(x/y) with the x -> 0 limit.
double xlogx_over(double x, double y) {
  return x > 0.0 ? x * std::log(x / y) : 0.0;
}

}  // namespace

QuasiFamily QuasiFamily::parse(std::string_view text) {
  std::string s(text);
  std::string fam_part = s;
  std::string link_part;
  if (auto pos = s.find(':'); pos != std::string::npos) {
    fam_part = s.substr(0, pos);
    link_part = s.substr(pos + 1);
  }

  QuasiFamily fam;
  if (fam_part == "gaussian" || fam_part == "normal") {
    fam.family = FamilyKind::gaussian;
    fam.link = LinkKind::identity;
  } else if (fam_part == "poisson") {
    fam.family = FamilyKind::poisson;
    fam.link = LinkKind::log_link;
  } else if (fam_part == "quasi_poisson" || fam_part == "quasipoisson" ||
             fam_part == "qpoisson") {
    fam.family = FamilyKind::quasi_poisson;
    fam.link = LinkKind::log_link;
  } else if (fam_part == "binomial") {
    fam.family = FamilyKind::binomial;
    fam.link = LinkKind::logit;
  } else if (fam_part == "gamma") {
    fam.family = FamilyKind::gamma;
    fam.link = LinkKind::log_link;
  } else if (fam_part.rfind("negbin", 0) == 0 ||
             fam_part.rfind("negative_binomial", 0) == 0) {
    fam.family = FamilyKind::negative_binomial;
    fam.link = LinkKind::log_link;
    auto open = fam_part.find('(');
    auto close = fam_part.rfind(')');
    if (open == std::string::npos || close == std::string::npos || close <= open + 1) {
      throw std::invalid_argument(
          "negative binomial requires a shape, e.g. \"negbin(0.1)\"");
    }
    fam.shape = std::stod(fam_part.substr(open + 1, close - open - 1));
    if (!(fam.shape > 0.0)) {
      throw std::invalid_argument("negative binomial shape must be > 0");
    }
  } else {
    throw std::invalid_argument("unknown family: \"" + fam_part + "\"");
  }

  if (!link_part.empty()) {
    LinkKind link;
    if (link_part == "identity") link = LinkKind::identity;
    else if (link_part == "log") link = LinkKind::log_link;
    else if (link_part == "logit") link = LinkKind::logit;
    else throw std::invalid_argument("unknown link: \"" + link_part + "\"");
    if (link != fam.link) {
      throw std::invalid_argument("unsupported family/link pair: \"" + s + "\"");
    }
  }
  return fam;
}

std::string QuasiFamily::to_string() const {
  std::string fam_part;
  switch (family) {
    case FamilyKind::gaussian: fam_part = "gaussian"; break;
    case FamilyKind::poisson: fam_part = "poisson"; break;
    case FamilyKind::binomial: fam_part = "binomial"; break;
    case FamilyKind::negative_binomial:
      fam_part = "negbin(" + std::to_string(shape) + ")";
      break;
    case FamilyKind::gamma: fam_part = "gamma"; break;
    case FamilyKind::quasi_poisson: fam_part = "quasi_poisson"; break;
  }
  switch (link) {
    case LinkKind::identity: return fam_part + ":identity";
    case LinkKind::log_link: return fam_part + ":log";
    case LinkKind::logit: return fam_part + ":logit";
  }
  return fam_part;
}

bool QuasiFamily::free_dispersion() const {
  return family == FamilyKind::gaussian || family == FamilyKind::gamma ||
         family == FamilyKind::quasi_poisson;
}

double mean_from_eta(const QuasiFamily& fam, double eta) {
  switch (fam.link) {
    case LinkKind::identity:
      return eta;
    case LinkKind::log_link:
      return std::exp(std::clamp(eta, -kEtaExpCap, kEtaExpCap));
    case LinkKind::logit: {
      double mu;
      if (eta >= 0.0) {
        mu = 1.0 / (1.0 + std::exp(-eta));
      } else {
        const double e = std::exp(eta);
        mu = e / (1.0 + e);
      }
      return std::clamp(mu, kLogitMuEps, 1.0 - kLogitMuEps);
    }
  }
  return eta;
}

double eta_from_mean(const QuasiFamily& fam, double mu) {
  switch (fam.link) {
    case LinkKind::identity:
      return mu;
    case LinkKind::log_link:
      if (mu <= 0.0) domain_error("log link requires mu > 0", mu);
      return std::log(mu);
    case LinkKind::logit:
      if (mu <= 0.0 || mu >= 1.0) domain_error("logit link requires mu in (0,1)", mu);
      return std::log(mu / (1.0 - mu));
  }
  return mu;
}

double mean_derivative(const QuasiFamily& fam, double eta) {
  switch (fam.link) {
    case LinkKind::identity:
      return 1.0;
    case LinkKind::log_link:
      return mean_from_eta(fam, eta);
    case LinkKind::logit: {
      const double mu = mean_from_eta(fam, eta);
      return mu * (1.0 - mu);
    }
  }
  return 1.0;
}

double variance_function(const QuasiFamily& fam, double mu) {
  switch (fam.family) {
    case FamilyKind::gaussian:
      return 1.0;
    case FamilyKind::poisson:
    case FamilyKind::quasi_poisson:
      if (mu <= 0.0) domain_error("poisson mean must be > 0", mu);
      return mu;
    case FamilyKind::binomial:
      if (mu <= 0.0 || mu >= 1.0) domain_error("binomial mean must be in (0,1)", mu);
      return mu * (1.0 - mu);
    case FamilyKind::gamma:
      if (mu <= 0.0) domain_error("gamma mean must be > 0", mu);
      return mu * mu;
    case FamilyKind::negative_binomial:
      if (mu <= 0.0) domain_error("negative binomial mean must be > 0", mu);
      return mu + fam.shape * mu * mu;
  }
  return 1.0;
}

namespace {

void check_observation(const QuasiFamily& fam, double x) {
  switch (fam.family) {
    case FamilyKind::gaussian:
      return;
    case FamilyKind::poisson:
    case FamilyKind::quasi_poisson:
    case FamilyKind::negative_binomial:
      if (x < 0.0) domain_error("count observation must be >= 0", x);
      return;
    case FamilyKind::binomial:
      if (x < 0.0 || x > 1.0) domain_error("binomial proportion must be in [0,1]", x);
      return;
    case FamilyKind::gamma:
      if (x <= 0.0) domain_error("gamma observation must be > 0", x);
      return;
  }
}

// V evaluated at an observation; allowed to touch the domain boundary.
double variance_at_observation(const QuasiFamily& fam, double x) {
  switch (fam.family) {
    case FamilyKind::gaussian: return 1.0;
    case FamilyKind::poisson:
    case FamilyKind::quasi_poisson: return x;
    case FamilyKind::binomial: return x * (1.0 - x);
    case FamilyKind::gamma: return x * x;
    case FamilyKind::negative_binomial: return x + fam.shape * x * x;
  }
  return 1.0;
}

}  // namespace

double quasi_deviance(const QuasiFamily& fam, double x, double mu) {
  check_observation(fam, x);
  variance_function(fam, mu);  // mean-domain check
  switch (fam.family) {
    case FamilyKind::gaussian:
      return (x - mu) * (x - mu);
    case FamilyKind::poisson:
    case FamilyKind::quasi_poisson:
      return 2.0 * (xlogx_over(x, mu) - (x - mu));
    case FamilyKind::binomial:
      return 2.0 * (xlogx_over(x, mu) + xlogx_over(1.0 - x, 1.0 - mu));
    case FamilyKind::gamma:
      return 2.0 * ((x - mu) / mu - std::log(x / mu));
    case FamilyKind::negative_binomial: {
      const double a = fam.shape;
      const double theta = 1.0 / a;  // so (1 + a*x)/a = x + theta
      return 2.0 * (xlogx_over(x, mu) -
                    (x + theta) * std::log((x + theta) / (mu + theta)));
    }
  }
  return 0.0;
}

double quasi_logdensity(const QuasiFamily& fam, double x, double mu,
                        double phi, double w) {
  if (w == 0.0) return 0.0;  // excluded entry
  if (!(phi > 0.0)) domain_error("dispersion must be > 0", phi);
  if (w < 0.0) domain_error("weight must be >= 0", w);
  const double q = quasi_deviance(fam, x, mu);
  const double vstar = std::max(variance_at_observation(fam, x), kVarFloor);
  return -0.5 * (w / phi) * q - 0.5 * std::log(2.0 * M_PI * phi * vstar / w);
}

ScoreTerms score_terms(const QuasiFamily& fam, double x, double eta,
                       double phi, double w) {
  if (w == 0.0) return {0.0, 0.0};
  if (!(phi > 0.0)) domain_error("dispersion must be > 0", phi);
  const double mu = mean_from_eta(fam, eta);
  const double d = mean_derivative(fam, eta);
  const double v = variance_function(fam, mu);
  const double scale = w / phi;
  return {scale * d * d / v, scale * d * (x - mu) / v};
}

}  // namespace efm
