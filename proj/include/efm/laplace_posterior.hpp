#ifndef EFM_LAPLACE_POSTERIOR_HPP
#define EFM_LAPLACE_POSTERIOR_HPP

#include <vector>

#include "efm/model_core.hpp"

namespace efm {

/// Gaussian approximation of one latent row given its observations.
/// `precision` is the (likelihood-only) expected Hessian H at the mode;
/// post_cov = (I + H)^-1 and post_mean = (I + H)^-1 H mode fold in the
/// standard normal prior.
struct PosteriorApprox {
  Vector mode;
  Matrix precision;
  Vector post_mean;
  Matrix post_cov;
  bool converged = true;
};

/// Which objective the Taylor expansion is centered on.
enum class PosteriorCenter { likelihood, penalized };

/// Working response Z = eta + (x - mu) / (g^-1)'(eta); the inverse-link
/// derivative is floored to keep Z finite at extreme eta.
double working_response(const QuasiFamily& fam, double x, double eta);

/// Fisher-scoring stationary point of the row quasi-log-likelihood in
/// lambda (no prior). Singular normal equations are ridge-stabilized in the
/// solve only; non-convergence returns the best iterate with *converged
/// cleared when provided.
Vector likelihood_mode(const Eigen::Ref<const Vector>& x_row,
                       const Eigen::Ref<const Vector>& w_row,
                       const EFMParams& params, const QuasiFamily& fam,
                       bool* converged = nullptr);

/// Same iteration maximizing row quasi-log-likelihood + log N(lambda; 0, I);
/// the normal equations gain a unit ridge.
Vector map_mode(const Eigen::Ref<const Vector>& x_row,
                const Eigen::Ref<const Vector>& w_row, const EFMParams& params,
                const QuasiFamily& fam, bool* converged = nullptr);

/// Expected likelihood Hessian sum_j S_j v_j v_j^T at the given lambda;
/// positive semidefinite.
Matrix expected_hessian(const Eigen::Ref<const Vector>& lambda,
                        const Eigen::Ref<const Vector>& x_row,
                        const Eigen::Ref<const Vector>& w_row,
                        const EFMParams& params, const QuasiFamily& fam);

PosteriorApprox posterior_approx(const Eigen::Ref<const Vector>& x_row,
                                 const Eigen::Ref<const Vector>& w_row,
                                 const EFMParams& params, const QuasiFamily& fam,
                                 PosteriorCenter center = PosteriorCenter::likelihood);

/// Row-parallel batch of posterior approximations (order-fixed output).
std::vector<PosteriorApprox> posterior_batch(
    const Dataset& data, const EFMParams& params, const QuasiFamily& fam,
    PosteriorCenter center = PosteriorCenter::likelihood);

}  // namespace efm

#endif  // EFM_LAPLACE_POSTERIOR_HPP
