#ifndef EFM_COVARIANCE_HPP
#define EFM_COVARIANCE_HPP

#include <cstdint>

#include "efm/model_core.hpp"

namespace efm {

struct CovEstimate {
  Matrix sigma;
  long mc_draws = 0;  // 0 for the closed form
};

/// Model-implied covariance of a new observation by total variance:
/// Diag{phi_j E[V(g^-1((V lambda)_j + eta0_j))]} + Var(g^-1(V lambda + eta0))
/// over lambda ~ N(0, I). Gaussian/identity short-circuits to
/// diag(phi) + V V^T unless force_mc is set. The Monte Carlo path uses one
/// common draw stream for both terms.
CovEstimate model_covariance(const EFMParams& params, const QuasiFamily& fam,
                             long S_mc, std::uint64_t seed, bool force_mc = false);

/// Column-centered p x p sample covariance with divisor n - 1.
CovEstimate sample_covariance(const Matrix& x);

struct CovErrors {
  double frob = 0.0;
  double entropy = 0.0;
  double normalized = 0.0;
};

/// Frobenius, entropy tr(E T^-1) - log|E T^-1| - p, and normalized loss
/// |T^-1/2 (E - T) T^-1/2|_F / sqrt(p). The truth must be positive definite;
/// the estimate must be for the entropy loss.
CovErrors cov_errors(const CovEstimate& estimate, const CovEstimate& truth);

}  // namespace efm

#endif  // EFM_COVARIANCE_HPP
