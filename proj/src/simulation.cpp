#include "efm/simulation.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "efm/rng.hpp"

namespace efm {

namespace {

double missing_placeholder(const QuasiFamily& fam) {
  switch (fam.family) {
    case FamilyKind::binomial: return 0.5;
    case FamilyKind::gamma: return 1.0;
    default: return 0.0;
  }
}

double draw_entry(const QuasiFamily& fam, Rng& rng, double mu, double phi, double w) {
  switch (fam.family) {
    case FamilyKind::gaussian:
      return mu + rng.normal() * std::sqrt(phi / w);
    case FamilyKind::poisson:
      return static_cast<double>(rng.poisson(mu));
    case FamilyKind::binomial: {
      const long trials = std::lround(w);
      if (trials < 1 || std::fabs(w - static_cast<double>(trials)) > 1e-9) {
        throw std::invalid_argument("binomial weights must be positive integers");
      }
      return static_cast<double>(rng.binomial(trials, mu)) /
             static_cast<double>(trials);
    }
    case FamilyKind::negative_binomial: {
      const double a = fam.shape;
      if (a == 0.0) return static_cast<double>(rng.poisson(mu));
      return static_cast<double>(rng.poisson(rng.gamma(1.0 / a, a * mu)));
    }
    case FamilyKind::gamma:
      // shape w/phi, scale phi*mu/w: mean mu, variance phi*mu^2/w.
      return rng.gamma(w / phi, phi * mu / w);
    case FamilyKind::quasi_poisson: {
      if (phi < 1.0) {
        throw std::invalid_argument("quasi-poisson simulation requires phi >= 1");
      }
      if (phi == 1.0) return static_cast<double>(rng.poisson(mu));
      // Scaled Poisson: mean mu, variance phi * mu. Much lighter tails than a
      // gamma-Poisson mixture at large phi (excess kurtosis phi/mu rather than
      // ~6 phi/mu), so per-column Pearson dispersion estimates concentrate.
      return phi * static_cast<double>(rng.poisson(mu / phi));
    }
  }
  return mu;
}

}  // namespace

Matrix simulate_data(const QuasiFamily& fam, const Matrix& lambda,
                     const EFMParams& params, const Matrix& weights,
                     std::uint64_t seed) {
  const Eigen::Index n = lambda.rows();
  const Eigen::Index p = params.p();
  if (weights.rows() != n || weights.cols() != p) {
    throw std::invalid_argument("weights dimensions disagree");
  }
  if ((weights.array() < 0.0).any()) {
    throw std::invalid_argument("weights must be >= 0");
  }
  Matrix eta = linear_predictor(lambda, params);
  Matrix x(n, p);
  Rng rng = substream(seed, Stream::sim);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) {
      const double w = weights(i, j);
      if (w == 0.0) {
        x(i, j) = missing_placeholder(fam);
        continue;
      }
      x(i, j) = draw_entry(fam, rng, mean_from_eta(fam, eta(i, j)), params.phi(j), w);
    }
  }
  return x;
}

FanPriors FanPriors::standard() {
  FanPriors fp;
  fp.lambda_mean = Vector(3);
  fp.lambda_mean << 0.023558, 0.012989, 0.020714;
  fp.lambda_var = Vector(3);
  fp.lambda_var << 1.2507, 0.31564, 0.19303;
  fp.v_mean = Vector(3);
  fp.v_mean << 0.78282, 0.51803, 0.41003;
  fp.v_cov = Matrix(3, 3);
  fp.v_cov << 0.029145, 0.023873, 0.010184,
              0.023873, 0.053951, -0.006967,
              0.010184, -0.006967, 0.086856;
  return fp;
}

FanScenario fan_scenario(Eigen::Index n, Eigen::Index p, const QuasiFamily& fam,
                         std::uint64_t seed) {
  switch (fam.family) {
    case FamilyKind::quasi_poisson:
    case FamilyKind::negative_binomial:
    case FamilyKind::binomial:
    case FamilyKind::poisson:
      break;
    default:
      throw std::invalid_argument("scenario supports count/proportion families only");
  }
  const FanPriors fp = FanPriors::standard();
  const Eigen::Index q = 3;
  Rng rng = substream(seed, Stream::sim, {0xfa'017ULL});

  FanScenario out;
  out.lambda.resize(n, q);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < q; ++k) {
      out.lambda(i, k) = fp.lambda_mean(k) + std::sqrt(fp.lambda_var(k)) * rng.normal();
    }
  }

  Eigen::LLT<Matrix> llt(fp.v_cov);
  if (llt.info() != Eigen::Success) {
    throw std::runtime_error("loading prior covariance is not positive definite");
  }
  Matrix chol = llt.matrixL();
  out.theta.V.resize(p, q);
  Vector z(q);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (Eigen::Index k = 0; k < q; ++k) z(k) = rng.normal();
    out.theta.V.row(j) = (fp.v_mean + chol * z).transpose();
  }
  out.theta.eta0 = Vector::Zero(p);
  out.theta.phi = Vector::Ones(p);
  if (fam.family == FamilyKind::quasi_poisson) {
    for (Eigen::Index j = 0; j < p; ++j) {
      out.theta.phi(j) = rng.gamma(fp.phi_shape, 1.0 / fp.phi_rate);
    }
  }

  Matrix w = Matrix::Ones(n, p);
  if (fam.family == FamilyKind::binomial) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) {
        w(i, j) = static_cast<double>(rng.poisson(fp.w_poisson_mean));
      }
    }
  }

  Matrix x = simulate_data(fam, out.lambda, out.theta, w,
                           substream_seed(seed, Stream::sim, {0xda7aULL}));
  out.data = Dataset(std::move(x), std::move(w));
  return out;
}

EFMParams absorb_latent_prior(const EFMParams& params, const FanPriors& priors) {
  EFMParams out = params;
  out.V = params.V * priors.lambda_var.cwiseSqrt().asDiagonal();
  out.eta0 = params.eta0 + params.V * priors.lambda_mean;
  out.canonical = false;
  return out;
}

void MultiplexStack::validate() const {
  if (layers.empty()) throw std::invalid_argument("multiplex stack needs >= 1 layer");
  const Eigen::Index n = layers.front().rows();
  for (const Matrix& a : layers) {
    if (a.rows() != n || a.cols() != n) {
      throw std::invalid_argument("layers must be square with common order");
    }
    for (Eigen::Index i = 0; i < n; ++i) {
      if (a(i, i) != 0.0) throw std::invalid_argument("layer diagonal must be zero");
      for (Eigen::Index j = 0; j < n; ++j) {
        if (a(i, j) != 0.0 && a(i, j) != 1.0) {
          throw std::invalid_argument("layers must be binary");
        }
        if (a(i, j) != a(j, i)) {
          throw std::invalid_argument("layers must be symmetric");
        }
      }
    }
  }
}

double spectral_radius(const Matrix& sym, double tol, int max_iter) {
  const Eigen::Index n = sym.rows();
  Vector v = Vector::Constant(n, 1.0 / std::sqrt(static_cast<double>(n)));
  double value = 0.0;
  for (int it = 0; it < max_iter; ++it) {
    Vector av = sym * v;
    const double norm = av.norm();
    if (norm == 0.0) return 0.0;
    v = av / norm;
    const double next = v.dot(sym * v);
    if (std::fabs(next - value) < tol) return next;
    value = next;
  }
  return value;
}

AggregatedNetwork multiplex_weights(const MultiplexStack& stack) {
  stack.validate();
  const Eigen::Index n = stack.layers.front().rows();
  const size_t k = stack.layers.size();

  std::vector<double> inv_radius(k);
  for (size_t l = 0; l < k; ++l) {
    const double r = spectral_radius(stack.layers[l]);
    if (!(r > 0.0)) {
      throw std::invalid_argument("layer " + std::to_string(l) +
                                  " has no edges (zero spectral radius)");
    }
    inv_radius[l] = 1.0 / r;
  }

  AggregatedNetwork out;
  out.A = Matrix::Zero(n, n);
  Matrix scaled_sum = Matrix::Zero(n, n);
  for (size_t l = 0; l < k; ++l) {
    out.A = out.A.cwiseMax(stack.layers[l]);
    scaled_sum += inv_radius[l] * stack.layers[l];
  }

  double min_interacting = std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j && out.A(i, j) > 0.0) {
        min_interacting = std::min(min_interacting, scaled_sum(i, j));
      }
    }
  }

  out.W = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i == j) continue;
      out.W(i, j) = out.A(i, j) > 0.0 ? scaled_sum(i, j) : min_interacting;
    }
  }
  return out;
}

}  // namespace efm
