#ifndef EFM_QUASI_FAMILY_HPP
#define EFM_QUASI_FAMILY_HPP

#include <string>
#include <string_view>

namespace efm {

enum class FamilyKind {
  gaussian,
  poisson,
  binomial,
  negative_binomial,
  gamma,
  quasi_poisson,
};

enum class LinkKind { identity, log_link, logit };

/// Mean-variance specification of one data column family: link g, variance
/// function V(mu), and (for the negative binomial) a fixed shape alpha with
/// V(mu) = mu + alpha*mu^2. Only canonical pairings are supported:
/// gaussian:identity, poisson/quasi_poisson/negative_binomial/gamma:log,
/// binomial:logit.
struct QuasiFamily {
  FamilyKind family = FamilyKind::gaussian;
  LinkKind link = LinkKind::identity;
  double shape = 0.0;  // negative binomial alpha; unused otherwise

  /// Parse identifiers like "poisson:log", "negbin(0.1):log", "binomial".
  /// Omitting the link selects the canonical one.
  static QuasiFamily parse(std::string_view text);
  std::string to_string() const;

  /// True when the column dispersions phi_j are estimated (gaussian, gamma,
  /// quasi-poisson); fixed-dispersion families keep phi_j = 1.
  bool free_dispersion() const;
};

/// Per-entry score building blocks: S the weight/dispersion-scaled Fisher
/// information, G the scaled residual score. Both vanish at weight zero.
struct ScoreTerms {
  double S = 0.0;
  double G = 0.0;
};

/// mu = g^{-1}(eta), computed in overflow-safe form; logit never returns
/// 0 or 1 exactly.
double mean_from_eta(const QuasiFamily& fam, double eta);

/// eta = g(mu); requires mu strictly inside the mean domain.
double eta_from_mean(const QuasiFamily& fam, double mu);

/// d mu / d eta evaluated at eta.
double mean_derivative(const QuasiFamily& fam, double eta);

/// V(mu); throws on mean-domain violations.
double variance_function(const QuasiFamily& fam, double mu);

/// Quasi-deviance Q(x; mu) = -2 * int_x^mu (x - t) / V(t) dt, in closed form.
/// Nonnegative, zero iff x == mu.
double quasi_deviance(const QuasiFamily& fam, double x, double mu);

/// Extended quasi-log-density of one entry:
///   -(w/phi) Q(x; mu)/2 - log(2 pi phi V*(x) / w) / 2,
/// where V*(x) = max(V(x), 1e-8) floors the constant normalization term at
/// boundary observations. Weight zero marks the entry excluded and yields 0.
double quasi_logdensity(const QuasiFamily& fam, double x, double mu,
                        double phi, double w);

/// S and G at linear predictor eta. S >= 0 always; both are 0 when w == 0.
ScoreTerms score_terms(const QuasiFamily& fam, double x, double eta,
                       double phi, double w);

}  // namespace efm

#endif  // EFM_QUASI_FAMILY_HPP
