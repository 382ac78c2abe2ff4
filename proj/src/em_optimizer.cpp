#include "efm/em_optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "efm/initialize.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace efm {

std::pair<Vector, Vector> gh_rule_1d(int m) {
  if (m < 1 || m > 50) {
    throw std::invalid_argument("gh_rule_1d requires 1 <= m <= 50");
  }
  if (m == 1) {
    return {Vector::Zero(1), Vector::Ones(1)};
  }
  // Golub-Welsch on the Jacobi matrix of the probabilists' Hermite
  // recurrence: zero diagonal, off-diagonal sqrt(k).
  Matrix jacobi = Matrix::Zero(m, m);
  for (int k = 1; k < m; ++k) {
    const double b = std::sqrt(static_cast<double>(k));
    jacobi(k, k - 1) = b;
    jacobi(k - 1, k) = b;
  }
  Eigen::SelfAdjointEigenSolver<Matrix> eig(jacobi);
  Vector nodes = eig.eigenvalues();
  Vector weights = eig.eigenvectors().row(0).transpose().array().square();
  weights /= weights.sum();
  return {std::move(nodes), std::move(weights)};
}

CubatureRule adapted_cubature(const Vector& center, const Matrix& precision, int m) {
  const Eigen::Index q = center.size();
  Matrix prior_precision = precision;
  prior_precision.diagonal().array() += 1.0;

  // scale * scale^T = (H + I)^-1.
  Matrix scale;
  Eigen::LLT<Matrix> llt(prior_precision);
  if (llt.info() == Eigen::Success) {
    scale = llt.matrixL().solve(Matrix::Identity(q, q)).transpose();
  } else {
    Eigen::SelfAdjointEigenSolver<Matrix> eig(prior_precision);
    Vector vals = eig.eigenvalues().cwiseMax(1e-10);
    scale = eig.eigenvectors() * vals.cwiseSqrt().cwiseInverse().asDiagonal();
  }

  auto [nodes_1d, weights_1d] = gh_rule_1d(m);
  Eigen::Index m_tot = 1;
  for (Eigen::Index k = 0; k < q; ++k) m_tot *= m;

  CubatureRule rule;
  rule.center = center;
  rule.scale = scale;
  rule.nodes.resize(m_tot, q);
  rule.weights.resize(m_tot);
  std::vector<int> index(static_cast<size_t>(q), 0);
  for (Eigen::Index l = 0; l < m_tot; ++l) {
    Vector z(q);
    double w = 1.0;
    for (Eigen::Index k = 0; k < q; ++k) {
      z(k) = nodes_1d(index[static_cast<size_t>(k)]);
      w *= weights_1d(index[static_cast<size_t>(k)]);
    }
    rule.nodes.row(l) = (center + scale * z).transpose();
    rule.weights(l) = w;
    for (Eigen::Index k = q - 1; k >= 0; --k) {
      if (++index[static_cast<size_t>(k)] < m) break;
      index[static_cast<size_t>(k)] = 0;
    }
  }
  rule.weights /= rule.weights.sum();
  return rule;
}

namespace {

constexpr double kIrlsTol = 1e-8;
constexpr int kIrlsMaxIter = 50;
constexpr int kIrlsMaxHalvings = 20;
constexpr double kPhiFloor = 1e-8;
// Coefficient bound flagging a separated/degenerate column: with the
// standardized cubature nodes, linear predictors beyond this are numerically
// saturated and the quasi-GLM objective has no finite maximizer.
constexpr double kIrlsBetaCap = 20.0;
// Linear predictors beyond this are saturated for the log and logit links
// (identity is unbounded by nature); a column driven there by the node cloud
// has separated and its quasi-GLM has no useful finite maximizer.
constexpr double kEtaSaturation = 15.0;

// Per-column weighted quasi-GLM objective over all (row, node) replicates.
double column_objective(const QuasiFamily& fam, const Dataset& data,
                        const Matrix& nodes, const Vector& rep_weights,
                        const std::vector<Eigen::Index>& rep_row, Eigen::Index j,
                        const Vector& beta) {
  double obj = 0.0;
  for (Eigen::Index r = 0; r < nodes.rows(); ++r) {
    const double w = rep_weights(r) * data.W(rep_row[static_cast<size_t>(r)], j);
    if (w == 0.0) continue;
    const double eta = nodes.row(r).dot(beta.head(nodes.cols())) + beta(nodes.cols());
    const double mu = mean_from_eta(fam, eta);
    obj -= 0.5 * w * quasi_deviance(fam, data.X(rep_row[static_cast<size_t>(r)], j), mu);
  }
  return obj;
}

// E[g^-1(c + s z)] for z standard normal by Gauss-Hermite.
double gh_mean(const QuasiFamily& fam, const Vector& gh_nodes, const Vector& gh_weights,
               double c, double s) {
  double total = 0.0;
  for (Eigen::Index l = 0; l < gh_nodes.size(); ++l) {
    total += gh_weights(l) * mean_from_eta(fam, c + s * gh_nodes(l));
  }
  return total;
}

// Intercept calibration: on hard data the fitted latent clouds end up
// heavier-tailed than the N(0, I) prior, so the prior-implied column means
// E[g^-1((V lambda)_j + eta0_j)] come out below the means the fit actually
// reproduces. Shift each eta0_j so the two agree; exactly a no-op when the
// clouds are prior-consistent (e.g. the gaussian model at its MLE).
void calibrate_centers(const Dataset& data, const QuasiFamily& fam,
                       const std::vector<PosteriorApprox>& posts, EFMParams& theta) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = theta.p();
  auto [gh_nodes, gh_weights] = gh_rule_1d(20);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Eigen::Index j = 0; j < p; ++j) {
    const Vector v = theta.V.row(j).transpose();
    double target = 0.0;
    double weight_sum = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = data.W(i, j);
      if (w == 0.0) continue;
      const auto& q_i = posts[static_cast<size_t>(i)];
      const double c = v.dot(q_i.post_mean) + theta.eta0(j);
      const double s2 = v.dot(q_i.post_cov * v);
      target += w * gh_mean(fam, gh_nodes, gh_weights, c, std::sqrt(std::max(s2, 0.0)));
      weight_sum += w;
    }
    if (weight_sum == 0.0) continue;
    target /= weight_sum;

    const double spread = v.norm();
    auto prior_mean = [&](double delta) {
      return gh_mean(fam, gh_nodes, gh_weights, theta.eta0(j) + delta, spread);
    };
    // Monotone in delta for monotone links; bisect.
    double lo = -10.0, hi = 10.0;
    if (!(prior_mean(lo) <= target && target <= prior_mean(hi))) continue;
    for (int it = 0; it < 80; ++it) {
      const double mid = 0.5 * (lo + hi);
      (prior_mean(mid) < target ? lo : hi) = mid;
    }
    const double delta = 0.5 * (lo + hi);
    if (std::isfinite(delta)) theta.eta0(j) += delta;
  }
}

}  // namespace

MStepResult m_step(const Dataset& data, const std::vector<CubatureRule>& rules,
                   const EFMParams& prev, const QuasiFamily& fam) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  const Eigen::Index q = prev.q();
  if (rules.size() != static_cast<size_t>(n)) {
    throw std::invalid_argument("one cubature rule per data row required");
  }

  // Stack all rows' nodes once; columns share the design.
  Eigen::Index m_tot = rules.front().nodes.rows();
  Matrix nodes(n * m_tot, q);
  Vector rep_weights(n * m_tot);
  std::vector<Eigen::Index> rep_row(static_cast<size_t>(n * m_tot));
  for (Eigen::Index i = 0; i < n; ++i) {
    nodes.middleRows(i * m_tot, m_tot) = rules[static_cast<size_t>(i)].nodes;
    rep_weights.segment(i * m_tot, m_tot) = rules[static_cast<size_t>(i)].weights;
    for (Eigen::Index l = 0; l < m_tot; ++l) {
      rep_row[static_cast<size_t>(i * m_tot + l)] = i;
    }
  }

  MStepResult out;
  out.V = prev.V;
  out.eta0 = prev.eta0;
  std::vector<int> failed(static_cast<size_t>(p), 0);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 1)
#endif
  for (Eigen::Index j = 0; j < p; ++j) {
    Vector beta(q + 1);
    beta.head(q) = prev.V.row(j).transpose();
    beta(q) = prev.eta0(j);
    double obj = column_objective(fam, data, nodes, rep_weights, rep_row, j, beta);
    bool ok = true;
    for (int it = 0; it < kIrlsMaxIter; ++it) {
      Matrix a = Matrix::Zero(q + 1, q + 1);
      Vector rhs = Vector::Zero(q + 1);
      Vector design(q + 1);
      for (Eigen::Index r = 0; r < nodes.rows(); ++r) {
        const double w = rep_weights(r) * data.W(rep_row[static_cast<size_t>(r)], j);
        if (w == 0.0) continue;
        design.head(q) = nodes.row(r).transpose();
        design(q) = 1.0;
        const double eta = design.dot(beta);
        const auto [s, g] = score_terms(
            fam, data.X(rep_row[static_cast<size_t>(r)], j), eta, 1.0, w);
        a.selfadjointView<Eigen::Lower>().rankUpdate(design, s);
        rhs += design * (s * eta + g);
      }
      Matrix lhs = Matrix(a.selfadjointView<Eigen::Lower>());
      Eigen::LDLT<Matrix> probe(lhs);
      if (probe.info() != Eigen::Success ||
          !(probe.vectorD().minCoeff() >
            1e-12 * std::max(probe.vectorD().maxCoeff(), 1.0))) {
        lhs.diagonal().array() +=
            1e-8 * std::max(lhs.trace(), 1.0) / static_cast<double>(q + 1);
      }
      Vector candidate = Eigen::LDLT<Matrix>(lhs).solve(rhs);
      if (!candidate.allFinite() || candidate.cwiseAbs().maxCoeff() > kIrlsBetaCap) {
        ok = false;  // divergence (separation-style runaway); retain previous
        break;
      }
      double cand_obj =
          column_objective(fam, data, nodes, rep_weights, rep_row, j, candidate);
      int halvings = 0;
      while (!(cand_obj >= obj) && halvings < kIrlsMaxHalvings) {
        candidate = 0.5 * (candidate + beta);
        cand_obj = column_objective(fam, data, nodes, rep_weights, rep_row, j, candidate);
        ++halvings;
      }
      if (!(cand_obj >= obj)) break;  // keep current beta
      if (fam.link != LinkKind::identity) {
        double eta_max = std::fabs(candidate(q));
        for (Eigen::Index r = 0; r < nodes.rows(); ++r) {
          if (data.W(rep_row[static_cast<size_t>(r)], j) == 0.0) continue;
          eta_max = std::max(eta_max, std::fabs(nodes.row(r).dot(candidate.head(q)) +
                                                candidate(q)));
        }
        if (eta_max > kEtaSaturation) {
          ok = false;  // separated column: predictors saturated
          break;
        }
      }
      const double move = (candidate - beta).cwiseAbs().maxCoeff();
      beta = candidate;
      obj = cand_obj;
      if (move < kIrlsTol) break;
    }
    if (ok && beta.allFinite()) {
      out.V.row(j) = beta.head(q).transpose();
      out.eta0(j) = beta(q);
    } else {
      failed[static_cast<size_t>(j)] = 1;  // retain previous column
    }
  }
  for (int f : failed) out.failed_columns += f;
  return out;
}

Vector update_dispersion(const Dataset& data, const std::vector<CubatureRule>& rules,
                         const EFMParams& current, const QuasiFamily& fam) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  if (!fam.free_dispersion()) {
    return Vector::Ones(p);
  }
  Vector phi = current.phi;
  std::vector<char> updated(static_cast<size_t>(p), 0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
  for (Eigen::Index j = 0; j < p; ++j) {
    double sum = 0.0;
    Eigen::Index observed = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      const double w = data.W(i, j);
      if (w == 0.0) continue;
      ++observed;
      const CubatureRule& rule = rules[static_cast<size_t>(i)];
      for (Eigen::Index l = 0; l < rule.nodes.rows(); ++l) {
        const double eta = current.V.row(j).dot(rule.nodes.row(l)) + current.eta0(j);
        const double mu = mean_from_eta(fam, eta);
        const double r = data.X(i, j) - mu;
        sum += rule.weights(l) * w * r * r / variance_function(fam, mu);
      }
    }
    if (observed > 0) {
      phi(j) = std::max(sum / static_cast<double>(observed), kPhiFloor);
      updated[static_cast<size_t>(j)] = 1;
    }
  }
  // Heywood guard: one column collapsing toward zero dispersion while the
  // rest stay noisy makes its E-step weight w/phi explode and the latent
  // modes memorize that column. Bound each column at a small fraction of the
  // median; near-perfect fits across the board keep a tiny median and are
  // unaffected.
  std::vector<double> sorted;
  sorted.reserve(static_cast<size_t>(p));
  for (Eigen::Index j = 0; j < p; ++j) sorted.push_back(phi(j));
  std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
  const double floor = std::max(kPhiFloor, 0.25 * sorted[sorted.size() / 2]);
  for (Eigen::Index j = 0; j < p; ++j) {
    if (updated[static_cast<size_t>(j)]) phi(j) = std::max(phi(j), floor);
  }
  return phi;
}

EMResult fit_em(const Dataset& data, const QuasiFamily& fam, const EMConfig& cfg,
                std::optional<EFMParams> theta0,
                const std::function<void(int, const EFMParams&)>& on_iter) {
  if (cfg.q < 1 || cfg.m < 1 || cfg.max_iter < 1 || !(cfg.tol > 0.0)) {
    throw std::invalid_argument("invalid EM configuration");
  }
  if (std::pow(static_cast<double>(cfg.m), static_cast<double>(cfg.q)) > 1e5) {
    throw std::invalid_argument("m^q exceeds the cubature budget (1e5 nodes)");
  }
  data.validate(cfg.q);

  EFMParams theta = theta0 ? std::move(*theta0) : svd_initialize(data, fam, cfg.q).params;
  theta.validate();
  if (theta.q() != cfg.q || theta.p() != data.p()) {
    throw std::invalid_argument("theta0 dimensions disagree with data/config");
  }

  EMResult out;
  const Eigen::Index n = data.n();
  const auto t_start = std::chrono::steady_clock::now();
  double prev_surrogate = 0.0;

  std::vector<CubatureRule> rules(static_cast<size_t>(n));
  std::vector<char> row_ok(static_cast<size_t>(n), 1);
  Vector surrogates(n);

  for (int iter = 1; iter <= cfg.max_iter; ++iter) {
    // E-step: penalized mode, curvature, adapted rule per row.
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 8)
#endif
    for (Eigen::Index i = 0; i < n; ++i) {
      try {
        Vector mode = map_mode(data.X.row(i), data.W.row(i), theta, fam);
        if (!mode.allFinite()) throw std::runtime_error("non-finite mode");
        Matrix h = expected_hessian(mode, data.X.row(i), data.W.row(i), theta, fam);
        rules[static_cast<size_t>(i)] = adapted_cubature(mode, h, cfg.m);
        surrogates(i) = row_quasi_loglik(fam, data.X.row(i), data.W.row(i), theta, mode) -
                        0.5 * mode.squaredNorm() -
                        0.5 * static_cast<double>(cfg.q) * std::log(2.0 * M_PI);
        row_ok[static_cast<size_t>(i)] = 1;
      } catch (const std::exception&) {
        row_ok[static_cast<size_t>(i)] = 0;
        surrogates(i) = 0.0;
      }
    }

    int skipped = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (!row_ok[static_cast<size_t>(i)]) ++skipped;
    }
    out.skipped_row_events += skipped;
    Dataset masked;
    const Dataset* step_data = &data;
    if (skipped > 0) {
      masked = data;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!row_ok[static_cast<size_t>(i)]) {
          masked.W.row(i).setZero();  // excluded from this iteration's M-step
          rules[static_cast<size_t>(i)] =
              adapted_cubature(Vector::Zero(cfg.q), Matrix::Zero(cfg.q, cfg.q), cfg.m);
        }
      }
      step_data = &masked;
    }

    MStepResult m = m_step(*step_data, rules, theta, fam);
    out.failed_column_events += m.failed_columns;
    theta.V = std::move(m.V);
    theta.eta0 = std::move(m.eta0);
    theta.phi = update_dispersion(*step_data, rules, theta, fam);

    const double surrogate = surrogates.sum();
    const double wall_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                  t_start)
            .count();
    out.trace.push_back({iter, surrogate, wall_ms});
    if (on_iter) on_iter(iter, theta);

    if (iter > 1) {
      const double rel =
          std::fabs(surrogate - prev_surrogate) / std::max(std::fabs(prev_surrogate), 1.0);
      if (rel < cfg.tol) {
        out.tol_reached = true;
        prev_surrogate = surrogate;
        break;
      }
    }
    prev_surrogate = surrogate;
  }

  // Posterior-mean factors at the final parameters.
  std::vector<PosteriorApprox> posts =
      posterior_batch(data, theta, fam, PosteriorCenter::penalized);
  Matrix lambda(n, cfg.q);
  for (Eigen::Index i = 0; i < n; ++i) {
    lambda.row(i) = posts[static_cast<size_t>(i)].post_mean.transpose();
  }
  calibrate_centers(data, fam, posts, theta);

  // Rotation-only canonicalization: keeps the latent prior standard normal
  // and the marginal model unchanged, unlike the product-SVD identify().
  try {
    Matrix rotation;
    out.params = identify_loadings(theta, &rotation);
    out.lambda = lambda * rotation;
  } catch (const std::exception&) {
    // Degenerate loadings (e.g. no latent signal) stay non-canonical.
    out.params = std::move(theta);
    out.lambda = std::move(lambda);
  }
  return out;
}

}  // namespace efm
