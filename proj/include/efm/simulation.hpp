#ifndef EFM_SIMULATION_HPP
#define EFM_SIMULATION_HPP

#include <cstdint>
#include <vector>

#include "efm/model_core.hpp"

namespace efm {

/// Draw an n x p data matrix from the factor model at the given latent
/// factors and parameters. Entries with weight 0 receive a domain-valid
/// placeholder. Binomial entries are proportions with trials in w;
/// quasi-Poisson draws phi * Poisson(mu / phi) (variance phi * mu) and
/// rejects phi < 1.
Matrix simulate_data(const QuasiFamily& fam, const Matrix& lambda,
                     const EFMParams& params, const Matrix& weights,
                     std::uint64_t seed);

/// Priors of the covariance simulation study (q = 3).
struct FanPriors {
  Vector lambda_mean;  // 3
  Vector lambda_var;   // diagonal of the latent covariance
  Vector v_mean;       // 3
  Matrix v_cov;        // 3 x 3
  double phi_shape = 4.0713;  // Gamma shape for quasi-Poisson dispersions
  double phi_rate = 0.1623;   // Gamma rate
  double w_poisson_mean = 20.0;  // binomial trial counts

  static FanPriors standard();
};

struct FanScenario {
  Dataset data;
  EFMParams theta;  // true loadings/center/dispersions
  Matrix lambda;    // realized latent factors (n x 3)
};

/// Draw one covariance-study dataset: latent rows, loading rows, dispersions
/// (Gamma for quasi-Poisson, 1 otherwise) and weights (Poisson(20) trials for
/// binomial, 1 otherwise), then the data matrix.
FanScenario fan_scenario(Eigen::Index n, Eigen::Index p, const QuasiFamily& fam,
                         std::uint64_t seed);

/// The latent prior of the scenario is N(lambda_mean, diag(lambda_var)), not
/// standard normal; absorbing it into theta (V' = V L, eta0' = eta0 + V m)
/// lets model_covariance produce the scenario's true covariance.
EFMParams absorb_latent_prior(const EFMParams& params, const FanPriors& priors);

/// Binary symmetric zero-diagonal adjacency layers over common vertices.
struct MultiplexStack {
  std::vector<Matrix> layers;
  void validate() const;
};

struct AggregatedNetwork {
  Matrix A;  // any-layer interaction indicator
  Matrix W;  // spectral-norm-scaled weights
};

/// Largest eigenvalue of a symmetric nonnegative matrix by power iteration.
double spectral_radius(const Matrix& sym, double tol = 1e-10, int max_iter = 10000);

/// Aggregate layers: A_ij = max_l A^l_ij; W_ii = 0; interacting pairs get
/// sum_l A^l_ij / lambda_max^l, non-interacting pairs the minimum of that sum
/// over interacting pairs.
AggregatedNetwork multiplex_weights(const MultiplexStack& stack);

}  // namespace efm

#endif  // EFM_SIMULATION_HPP
