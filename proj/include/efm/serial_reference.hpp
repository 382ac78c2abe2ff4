#ifndef EFM_SERIAL_REFERENCE_HPP
#define EFM_SERIAL_REFERENCE_HPP

#include "efm/laplace_posterior.hpp"
#include "efm/likelihood_eval.hpp"
#include "efm/sgd_optimizer.hpp"

namespace efm::serial {

// Plain-loop reference implementations of the OpenMP row kernels. Kept for
// testing (results must match the parallel versions bit for bit, since those
// reduce in fixed row order) and for the kernel benchmark.

std::vector<PosteriorApprox> posterior_batch(
    const Dataset& data, const EFMParams& params, const QuasiFamily& fam,
    PosteriorCenter center = PosteriorCenter::likelihood);

SimLoglik simulated_marginal_loglik(const Dataset& data, const EFMParams& params,
                                    const QuasiFamily& fam, const EvalConfig& cfg);

GradientBundle batch_gradient(const EFMParams& params, const QuasiFamily& fam,
                              const Dataset& data,
                              const std::vector<Eigen::Index>& batch_rows,
                              GradMode mode, int S, std::uint64_t master_seed,
                              std::uint64_t step);

}  // namespace efm::serial

#endif  // EFM_SERIAL_REFERENCE_HPP
