#include "efm/covariance.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

#include "efm/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace efm {

namespace {

constexpr long kChunk = 256;  // draws per accumulation chunk
constexpr int kWave = 8;      // chunks scheduled per parallel wave

struct ChunkSums {
  Vector var_sum;   // sum of V(mu) per column
  Vector mu_sum;    // sum of mu
  Matrix outer_sum; // sum of mu mu^T
};

}  // namespace

CovEstimate model_covariance(const EFMParams& params, const QuasiFamily& fam,
                             long S_mc, std::uint64_t seed, bool force_mc) {
  const Eigen::Index p = params.p();
  const Eigen::Index q = params.q();

  if (fam.family == FamilyKind::gaussian && fam.link == LinkKind::identity &&
      !force_mc) {
    CovEstimate out;
    out.sigma = params.V * params.V.transpose();
    out.sigma.diagonal() += params.phi;
    out.mc_draws = 0;
    return out;
  }
  if (S_mc < 2) throw std::invalid_argument("model_covariance needs S_mc >= 2");

  const long n_chunks = (S_mc + kChunk - 1) / kChunk;
  Vector var_total = Vector::Zero(p);
  Vector mu_total = Vector::Zero(p);
  Matrix outer_total = Matrix::Zero(p, p);

  // Chunked accumulation, reduced in chunk order: deterministic for any
  // thread count and memory-bounded at kWave * p^2.
  for (long wave_start = 0; wave_start < n_chunks; wave_start += kWave) {
    const long wave = std::min<long>(kWave, n_chunks - wave_start);
    std::vector<ChunkSums> sums(static_cast<size_t>(wave));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
    for (long c = 0; c < wave; ++c) {
      const long chunk_id = wave_start + c;
      const long lo = chunk_id * kChunk;
      const long hi = std::min(S_mc, lo + kChunk);
      Rng rng = substream(seed, Stream::cov_mc, {static_cast<std::uint64_t>(chunk_id)});
      ChunkSums s;
      s.var_sum = Vector::Zero(p);
      s.mu_sum = Vector::Zero(p);
      s.outer_sum = Matrix::Zero(p, p);
      Vector z(q);
      Vector mu(p);
      for (long d = lo; d < hi; ++d) {
        for (Eigen::Index k = 0; k < q; ++k) z(k) = rng.normal();
        Vector eta = params.V * z + params.eta0;
        for (Eigen::Index j = 0; j < p; ++j) {
          mu(j) = mean_from_eta(fam, eta(j));
          s.var_sum(j) += variance_function(fam, mu(j));
        }
        s.mu_sum += mu;
        s.outer_sum.selfadjointView<Eigen::Lower>().rankUpdate(mu, 1.0);
      }
      sums[static_cast<size_t>(c)] = std::move(s);
    }
    for (long c = 0; c < wave; ++c) {
      var_total += sums[static_cast<size_t>(c)].var_sum;
      mu_total += sums[static_cast<size_t>(c)].mu_sum;
      outer_total += sums[static_cast<size_t>(c)].outer_sum;
    }
  }
  outer_total = Matrix(outer_total.selfadjointView<Eigen::Lower>());

  const double s_f = static_cast<double>(S_mc);
  CovEstimate out;
  out.mc_draws = S_mc;
  Vector mean_mu = mu_total / s_f;
  out.sigma = (outer_total - s_f * mean_mu * mean_mu.transpose()) / (s_f - 1.0);
  out.sigma.diagonal() += params.phi.cwiseProduct(var_total / s_f);
  out.sigma = 0.5 * (out.sigma + out.sigma.transpose()).eval();
  return out;
}

CovEstimate sample_covariance(const Matrix& x) {
  const Eigen::Index n = x.rows();
  if (n < 2) throw std::invalid_argument("sample covariance needs n >= 2");
  Vector mean = x.colwise().mean();
  Matrix centered = x.rowwise() - mean.transpose();
  CovEstimate out;
  out.sigma = centered.transpose() * centered / static_cast<double>(n - 1);
  out.mc_draws = 0;
  return out;
}

CovErrors cov_errors(const CovEstimate& estimate, const CovEstimate& truth) {
  const Eigen::Index p = truth.sigma.rows();
  if (estimate.sigma.rows() != p || estimate.sigma.cols() != p) {
    throw std::invalid_argument("covariance dimensions disagree");
  }
  Eigen::LLT<Matrix> truth_llt(truth.sigma);
  if (truth_llt.info() != Eigen::Success) {
    throw std::runtime_error("truth covariance is not positive definite");
  }

  CovErrors out;
  Matrix diff = estimate.sigma - truth.sigma;
  out.frob = diff.norm();

  // T^-1/2 (E - T) T^-1/2 via the Cholesky factor of the truth.
  Matrix l = truth_llt.matrixL();
  Matrix whitened = l.triangularView<Eigen::Lower>().solve(diff);
  whitened = l.triangularView<Eigen::Lower>()
                 .solve(whitened.transpose().eval())
                 .transpose();
  out.normalized = whitened.norm() / std::sqrt(static_cast<double>(p));

  Eigen::LLT<Matrix> est_llt(estimate.sigma);
  if (est_llt.info() != Eigen::Success) {
    throw std::runtime_error("estimate covariance is not positive definite");
  }
  double logdet_e = 0.0;
  double logdet_t = 0.0;
  for (Eigen::Index j = 0; j < p; ++j) {
    logdet_e += 2.0 * std::log(Matrix(est_llt.matrixL())(j, j));
    logdet_t += 2.0 * std::log(l(j, j));
  }
  const double trace = truth_llt.solve(estimate.sigma).trace();
  out.entropy = trace - (logdet_e - logdet_t) - static_cast<double>(p);
  return out;
}

}  // namespace efm
