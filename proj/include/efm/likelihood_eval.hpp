#ifndef EFM_LIKELIHOOD_EVAL_HPP
#define EFM_LIKELIHOOD_EVAL_HPP

#include <cstdint>
#include <span>

#include "efm/model_core.hpp"

namespace efm {

struct EvalConfig {
  int R = 1500;  // Monte Carlo draws per row
  std::uint64_t seed = 0;
};

/// log sum_k exp(v_k), max-shifted; returns -inf when all entries are -inf.
double log_sum_exp(std::span<const double> v);

struct SimLoglik {
  double value = 0.0;
  double mc_std = 0.0;  // from a 10-way split of the draws
};

/// Monte Carlo estimate of the marginal log-likelihood
/// sum_i [ logsumexp_r log f(X_i | Lambda^(r)) - log R ] with prior draws.
/// Deterministic given cfg.seed (same draws on every call, so traces share
/// common random numbers); never mutates inputs.
SimLoglik simulated_marginal_loglik(const Dataset& data, const EFMParams& params,
                                    const QuasiFamily& fam, const EvalConfig& cfg);

/// Closed-form Gaussian marginal sum_i log N(x_i; eta0, diag(phi) + V V^T);
/// requires gaussian/identity and unit weights.
double exact_gaussian_marginal(const Dataset& data, const EFMParams& params,
                               const QuasiFamily& fam);

}  // namespace efm

#endif  // EFM_LIKELIHOOD_EVAL_HPP
