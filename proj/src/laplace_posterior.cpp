#include "efm/laplace_posterior.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace efm {

namespace {

constexpr double kModeTol = 1e-8;
constexpr int kMaxScoring = 100;
constexpr int kMaxHalvings = 20;
constexpr double kDerivFloor = 1e-10;

double row_objective(const Eigen::Ref<const Vector>& x_row,
                     const Eigen::Ref<const Vector>& w_row,
                     const EFMParams& params, const QuasiFamily& fam,
                     const Vector& lambda, bool penalized) {
  double obj = row_quasi_loglik(fam, x_row, w_row, params, lambda);
  if (penalized) obj -= 0.5 * lambda.squaredNorm();
  return obj;
}

Vector fisher_scoring(const Eigen::Ref<const Vector>& x_row,
                      const Eigen::Ref<const Vector>& w_row,
                      const EFMParams& params, const QuasiFamily& fam,
                      bool penalized, bool* converged_out) {
  const Eigen::Index p = params.p();
  const Eigen::Index q = params.q();
  Vector lambda = Vector::Zero(q);
  double obj = row_objective(x_row, w_row, params, fam, lambda, penalized);
  bool converged = false;

  for (int it = 0; it < kMaxScoring; ++it) {
    Matrix a = Matrix::Zero(q, q);
    Vector rhs = Vector::Zero(q);
    for (Eigen::Index j = 0; j < p; ++j) {
      if (w_row(j) == 0.0) continue;
      const double eta = params.V.row(j).dot(lambda) + params.eta0(j);
      const auto [s, g] = score_terms(fam, x_row(j), eta, params.phi(j), w_row(j));
      a.selfadjointView<Eigen::Lower>().rankUpdate(params.V.row(j).transpose(), s);
      // Stable form of V^T D (Z - eta0): D Z - D eta0 = S (eta - eta0) + G.
      rhs += params.V.row(j).transpose() * (s * (eta - params.eta0(j)) + g);
    }
    const Matrix a_sym = Matrix(a.selfadjointView<Eigen::Lower>());
    Matrix lhs = a_sym;
    if (penalized) {
      lhs.diagonal().array() += 1.0;
    } else {
      // Ridge only enters the solve; reported curvature stays unmodified.
      Eigen::LDLT<Matrix> probe(lhs);
      const double dmax = probe.vectorD().maxCoeff();
      const double dmin = probe.vectorD().minCoeff();
      if (probe.info() != Eigen::Success || !(dmin > 1e-12 * std::max(dmax, 1.0))) {
        lhs.diagonal().array() +=
            1e-8 * std::max(a_sym.trace(), 1.0) / static_cast<double>(q);
      }
    }
    Vector proposal = Eigen::LDLT<Matrix>(lhs).solve(rhs);
    if (!proposal.allFinite()) break;

    Vector candidate = proposal;
    double cand_obj = row_objective(x_row, w_row, params, fam, candidate, penalized);
    int halvings = 0;
    while (!(cand_obj >= obj) && halvings < kMaxHalvings) {
      candidate = 0.5 * (candidate + lambda);
      cand_obj = row_objective(x_row, w_row, params, fam, candidate, penalized);
      ++halvings;
    }
    if (!(cand_obj >= obj)) break;  // no ascent direction left; keep best iterate

    const double move = (candidate - lambda).cwiseAbs().maxCoeff();
    lambda = candidate;
    obj = cand_obj;
    if (move < kModeTol) {
      converged = true;
      break;
    }
  }
  if (converged_out) *converged_out = converged;
  return lambda;
}

}  // namespace

double working_response(const QuasiFamily& fam, double x, double eta) {
  const double mu = mean_from_eta(fam, eta);
  const double d = std::max(mean_derivative(fam, eta), kDerivFloor);
  return eta + (x - mu) / d;
}

Vector likelihood_mode(const Eigen::Ref<const Vector>& x_row,
                       const Eigen::Ref<const Vector>& w_row,
                       const EFMParams& params, const QuasiFamily& fam,
                       bool* converged) {
  if ((w_row.array() > 0.0).count() < params.q()) {
    throw std::invalid_argument("row needs at least q observed entries");
  }
  return fisher_scoring(x_row, w_row, params, fam, /*penalized=*/false, converged);
}

Vector map_mode(const Eigen::Ref<const Vector>& x_row,
                const Eigen::Ref<const Vector>& w_row, const EFMParams& params,
                const QuasiFamily& fam, bool* converged) {
  return fisher_scoring(x_row, w_row, params, fam, /*penalized=*/true, converged);
}

Matrix expected_hessian(const Eigen::Ref<const Vector>& lambda,
                        const Eigen::Ref<const Vector>& x_row,
                        const Eigen::Ref<const Vector>& w_row,
                        const EFMParams& params, const QuasiFamily& fam) {
  const Eigen::Index q = params.q();
  Matrix h = Matrix::Zero(q, q);
  for (Eigen::Index j = 0; j < params.p(); ++j) {
    if (w_row(j) == 0.0) continue;
    const double eta = params.V.row(j).dot(lambda) + params.eta0(j);
    const auto [s, g] = score_terms(fam, x_row(j), eta, params.phi(j), w_row(j));
    (void)g;
    h.selfadjointView<Eigen::Lower>().rankUpdate(params.V.row(j).transpose(), s);
  }
  return h.selfadjointView<Eigen::Lower>();
}

PosteriorApprox posterior_approx(const Eigen::Ref<const Vector>& x_row,
                                 const Eigen::Ref<const Vector>& w_row,
                                 const EFMParams& params, const QuasiFamily& fam,
                                 PosteriorCenter center) {
  PosteriorApprox out;
  out.mode = center == PosteriorCenter::likelihood
                 ? likelihood_mode(x_row, w_row, params, fam, &out.converged)
                 : map_mode(x_row, w_row, params, fam, &out.converged);
  out.precision = expected_hessian(out.mode, x_row, w_row, params, fam);

  const Eigen::Index q = params.q();
  Matrix prior_precision = out.precision;
  prior_precision.diagonal().array() += 1.0;
  Eigen::LDLT<Matrix> ldlt(prior_precision);
  out.post_cov = ldlt.solve(Matrix::Identity(q, q));
  out.post_cov = 0.5 * (out.post_cov + out.post_cov.transpose()).eval();
  if (center == PosteriorCenter::likelihood) {
    // Gaussian product of the likelihood expansion with the prior:
    // (I + H^-1)^-1 mode, written in the form valid for singular H.
    out.post_mean = out.post_cov * (out.precision * out.mode);
  } else {
    // The penalized mode already folds the prior in; it is the mean.
    out.post_mean = out.mode;
  }
  return out;
}

std::vector<PosteriorApprox> posterior_batch(const Dataset& data,
                                             const EFMParams& params,
                                             const QuasiFamily& fam,
                                             PosteriorCenter center) {
  std::vector<PosteriorApprox> out(static_cast<size_t>(data.n()));
  const Eigen::Index n = data.n();
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8)
#endif
  for (Eigen::Index i = 0; i < n; ++i) {
    out[static_cast<size_t>(i)] =
        posterior_approx(data.X.row(i), data.W.row(i), params, fam, center);
  }
  return out;
}

}  // namespace efm
