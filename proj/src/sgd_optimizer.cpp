#include "efm/sgd_optimizer.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "efm/initialize.hpp"
#include "efm/laplace_posterior.hpp"
#include "efm/likelihood_eval.hpp"
#include "efm/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace efm {

GradMode grad_mode_from_string(std::string_view s) {
  if (s == "lapl") return GradMode::lapl;
  if (s == "ps") return GradMode::ps;
  if (s == "sml") return GradMode::sml;
  throw std::invalid_argument("unknown gradient mode: \"" + std::string(s) + "\"");
}

std::string to_string(GradMode mode) {
  switch (mode) {
    case GradMode::lapl: return "lapl";
    case GradMode::ps: return "ps";
    case GradMode::sml: return "sml";
  }
  return "ps";
}

GradientBundle::GradientBundle(Eigen::Index p, Eigen::Index q)
    : dV(Matrix::Zero(p, q)), deta0(Vector::Zero(p)), dphi(Vector::Zero(p)) {}

GradientBundle& GradientBundle::operator+=(const GradientBundle& other) {
  dV += other.dV;
  deta0 += other.deta0;
  dphi += other.dphi;
  return *this;
}

void GradientBundle::scale(double c) {
  dV *= c;
  deta0 *= c;
  dphi *= c;
}

double GradientBundle::norm() const {
  return std::sqrt(dV.squaredNorm() + deta0.squaredNorm() + dphi.squaredNorm());
}

GradientBundle grad_complete(const EFMParams& params, const QuasiFamily& fam,
                             const Eigen::Ref<const Vector>& x_row,
                             const Eigen::Ref<const Vector>& w_row,
                             const Eigen::Ref<const Vector>& lambda) {
  const Eigen::Index p = params.p();
  const Eigen::Index q = params.q();
  GradientBundle out(p, q);
  const bool free_phi = fam.free_dispersion();
  for (Eigen::Index j = 0; j < p; ++j) {
    const double w = w_row(j);
    if (w == 0.0) continue;
    const double eta = params.V.row(j).dot(lambda) + params.eta0(j);
    const auto [s, g] = score_terms(fam, x_row(j), eta, params.phi(j), w);
    (void)s;
    out.dV.row(j) = g * lambda.transpose();
    out.deta0(j) = g;
    if (free_phi) {
      const double mu = mean_from_eta(fam, eta);
      const double dev = quasi_deviance(fam, x_row(j), mu);
      out.dphi(j) = 0.5 / params.phi(j) * (w * dev / params.phi(j) - 1.0);
    }
  }
  return out;
}

namespace {

// Order-fixed reduction of per-row contributions scaled by n/B.
GradientBundle reduce_contributions(std::vector<GradientBundle>& contribs,
                                    Eigen::Index p, Eigen::Index q, double n_over_b) {
  GradientBundle total(p, q);
  for (const auto& c : contribs) total += c;
  total.scale(n_over_b);
  return total;
}

}  // namespace

GradientBundle grad_lapl(const EFMParams& params, const QuasiFamily& fam,
                         const Dataset& data,
                         const std::vector<Eigen::Index>& batch_rows,
                         GradStats* stats) {
  if (batch_rows.empty()) throw std::invalid_argument("empty batch");
  const Eigen::Index p = params.p();
  const Eigen::Index q = params.q();
  const Eigen::Index b = static_cast<Eigen::Index>(batch_rows.size());
  std::vector<GradientBundle> contribs(static_cast<size_t>(b));
  std::vector<char> failed(static_cast<size_t>(b), 0);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4)
#endif
  for (Eigen::Index k = 0; k < b; ++k) {
    const Eigen::Index i = batch_rows[static_cast<size_t>(k)];
    Vector mode = map_mode(data.X.row(i), data.W.row(i), params, fam);
    if (mode.allFinite()) {
      contribs[static_cast<size_t>(k)] =
          grad_complete(params, fam, data.X.row(i), data.W.row(i), mode);
    } else {
      contribs[static_cast<size_t>(k)] = GradientBundle(p, q);
      failed[static_cast<size_t>(k)] = 1;
    }
  }
  if (stats) {
    for (char f : failed) stats->failed_rows += f;
  }
  return reduce_contributions(contribs, p, q,
                              static_cast<double>(data.n()) / static_cast<double>(b));
}

GradientBundle grad_ps(const EFMParams& params, const QuasiFamily& fam,
                       const Dataset& data,
                       const std::vector<Eigen::Index>& batch_rows, int S,
                       std::uint64_t master_seed, std::uint64_t step) {
  if (batch_rows.empty()) throw std::invalid_argument("empty batch");
  if (S < 1) throw std::invalid_argument("grad_ps requires S >= 1");
  const Eigen::Index p = params.p();
  const Eigen::Index q = params.q();
  const Eigen::Index b = static_cast<Eigen::Index>(batch_rows.size());
  std::vector<GradientBundle> contribs(static_cast<size_t>(b));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4)
#endif
  for (Eigen::Index k = 0; k < b; ++k) {
    const Eigen::Index i = batch_rows[static_cast<size_t>(k)];
    PosteriorApprox post = posterior_approx(data.X.row(i), data.W.row(i), params, fam);
    Matrix chol;
    Eigen::LLT<Matrix> llt(post.post_cov);
    if (llt.info() == Eigen::Success) {
      chol = llt.matrixL();
    } else {
      Eigen::SelfAdjointEigenSolver<Matrix> eig(post.post_cov);
      chol = eig.eigenvectors() *
             eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
    Rng rng = substream(master_seed, Stream::ps_draws,
                        {step, static_cast<std::uint64_t>(k)});
    GradientBundle acc(p, q);
    Vector z(q);
    for (int s = 0; s < S; ++s) {
      for (Eigen::Index c = 0; c < q; ++c) z(c) = rng.normal();
      Vector draw = post.post_mean + chol * z;
      acc += grad_complete(params, fam, data.X.row(i), data.W.row(i), draw);
    }
    acc.scale(1.0 / static_cast<double>(S));
    contribs[static_cast<size_t>(k)] = std::move(acc);
  }
  return reduce_contributions(contribs, p, q,
                              static_cast<double>(data.n()) / static_cast<double>(b));
}

GradientBundle grad_sml(const EFMParams& params, const QuasiFamily& fam,
                        const Dataset& data,
                        const std::vector<Eigen::Index>& batch_rows, int S,
                        std::uint64_t master_seed, std::uint64_t step,
                        GradStats* stats) {
  if (batch_rows.empty()) throw std::invalid_argument("empty batch");
  if (S < 1) throw std::invalid_argument("grad_sml requires S >= 1");
  const Eigen::Index p = params.p();
  const Eigen::Index q = params.q();
  const Eigen::Index b = static_cast<Eigen::Index>(batch_rows.size());
  std::vector<GradientBundle> contribs(static_cast<size_t>(b));
  std::vector<char> low_ess(static_cast<size_t>(b), 0);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4)
#endif
  for (Eigen::Index k = 0; k < b; ++k) {
    const Eigen::Index i = batch_rows[static_cast<size_t>(k)];
    Rng rng = substream(master_seed, Stream::sml_draws,
                        {step, static_cast<std::uint64_t>(k)});
    Matrix draws(S, q);
    std::vector<double> logw(static_cast<size_t>(S));
    for (int s = 0; s < S; ++s) {
      for (Eigen::Index c = 0; c < q; ++c) draws(s, c) = rng.normal();
      logw[static_cast<size_t>(s)] =
          row_quasi_loglik(fam, data.X.row(i), data.W.row(i), params, draws.row(s));
    }
    const double lse = log_sum_exp(logw);
    GradientBundle acc(p, q);
    double sum_sq = 0.0;
    for (int s = 0; s < S; ++s) {
      const double w = std::exp(logw[static_cast<size_t>(s)] - lse);
      sum_sq += w * w;
      GradientBundle g =
          grad_complete(params, fam, data.X.row(i), data.W.row(i), draws.row(s));
      g.scale(w);
      acc += g;
    }
    if (S >= 2 && 1.0 / sum_sq < 2.0) low_ess[static_cast<size_t>(k)] = 1;
    contribs[static_cast<size_t>(k)] = std::move(acc);
  }
  if (stats) {
    for (char f : low_ess) stats->low_ess_rows += f;
  }
  return reduce_contributions(contribs, p, q,
                              static_cast<double>(data.n()) / static_cast<double>(b));
}

AdamState::AdamState(Eigen::Index p, Eigen::Index q)
    : m_V(Matrix::Zero(p, q)),
      v_V(Matrix::Zero(p, q)),
      m_eta0(Vector::Zero(p)),
      v_eta0(Vector::Zero(p)),
      m_logphi(Vector::Zero(p)),
      v_logphi(Vector::Zero(p)),
      t(0) {}

namespace {

// In-place Adam ascent on one parameter block.
template <typename Derived>
void adam_block(Derived& m, Derived& v, const Derived& g, Derived& theta,
                double gamma, double bc1, double bc2, double beta1, double beta2,
                double eps) {
  m = beta1 * m + (1.0 - beta1) * g;
  v = beta2 * v + (1.0 - beta2) * g.cwiseProduct(g);
  theta.array() += gamma * (m.array() / bc1) / ((v.array() / bc2).sqrt() + eps);
}

int sanitize(GradientBundle& g) {
  int zeroed = 0;
  auto clean = [&zeroed](double x) {
    if (!std::isfinite(x)) {
      ++zeroed;
      return 0.0;
    }
    return x;
  };
  g.dV = g.dV.unaryExpr(clean);
  g.deta0 = g.deta0.unaryExpr(clean);
  g.dphi = g.dphi.unaryExpr(clean);
  return zeroed;
}

}  // namespace

int adam_step(AdamState& state, const GradientBundle& grad, EFMParams& params,
              double alpha, long t, bool update_phi, double beta1, double beta2,
              double eps) {
  GradientBundle g = grad;
  const int zeroed = sanitize(g);
  const double gamma = alpha / (1.0 + 0.5 * static_cast<double>(t));
  const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t) + 1.0);
  const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t) + 1.0);

  adam_block(state.m_V, state.v_V, g.dV, params.V, gamma, bc1, bc2, beta1, beta2, eps);
  adam_block(state.m_eta0, state.v_eta0, g.deta0, params.eta0, gamma, bc1, bc2, beta1,
             beta2, eps);
  if (update_phi) {
    // Chain rule through u = log(phi): du-gradient is phi * dphi.
    Vector g_u = params.phi.cwiseProduct(g.dphi);
    Vector u = params.phi.array().log().matrix();
    adam_block(state.m_logphi, state.v_logphi, g_u, u, gamma, bc1, bc2, beta1, beta2,
               eps);
    params.phi = u.array().exp().matrix();
  }
  state.t = t + 1;
  return zeroed;
}

SGDResult fit_sgd(const Dataset& data, const QuasiFamily& fam, const SGDConfig& cfg,
                  std::optional<EFMParams> theta0) {
  const Eigen::Index n = data.n();
  if (cfg.B < 1 || cfg.B > n) throw std::invalid_argument("B must be in [1, n]");
  if (cfg.S < 1 && cfg.mode != GradMode::lapl) {
    throw std::invalid_argument("S must be >= 1");
  }
  if (!(cfg.alpha > 0.0) || cfg.epochs < 1 || cfg.q < 1) {
    throw std::invalid_argument("invalid SGD configuration");
  }
  data.validate(cfg.q);

  EFMParams theta = theta0 ? std::move(*theta0) : svd_initialize(data, fam, cfg.q).params;
  theta.validate();
  if (theta.q() != cfg.q || theta.p() != data.p()) {
    throw std::invalid_argument("theta0 dimensions disagree with data/config");
  }

  SGDResult out;
  out.mode = cfg.mode;
  out.S = cfg.S;
  out.B = cfg.B;

  AdamState state(theta.p(), theta.q());
  Rng batch_rng = substream(cfg.seed, Stream::batch);
  const int steps_per_epoch =
      static_cast<int>((n + cfg.B - 1) / static_cast<Eigen::Index>(cfg.B));
  const bool update_phi = fam.free_dispersion();
  const bool do_eval = cfg.eval_every_epochs > 0 && cfg.eval_R > 0;

  double opt_wall_ms = 0.0;
  auto evaluate = [&](int epoch) -> SimLoglik {
    EvalConfig ec;
    ec.R = cfg.eval_R;
    ec.seed = cfg.eval_crn
                  ? substream_seed(cfg.seed, Stream::eval)
                  : substream_seed(cfg.seed, Stream::eval,
                                   {static_cast<std::uint64_t>(epoch)});
    return simulated_marginal_loglik(data, theta, fam, ec);
  };

  double initial_nll = std::numeric_limits<double>::quiet_NaN();
  if (do_eval) {
    SimLoglik s = evaluate(0);
    initial_nll = -s.value;
    SGDTraceRow row;
    row.step = 0;
    row.epoch = 0;
    row.wall_ms = 0.0;
    row.grad_norm = 0.0;
    row.sim_nll = -s.value;
    row.sim_nll_std = s.mc_std;
    out.trace.push_back(row);
  }

  long t = 0;
  for (int epoch = 1; epoch <= cfg.epochs && !out.diverged; ++epoch) {
    for (int step = 0; step < steps_per_epoch; ++step, ++t) {
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<Eigen::Index> batch(static_cast<size_t>(cfg.B));
      for (int b = 0; b < cfg.B; ++b) {
        batch[static_cast<size_t>(b)] =
            static_cast<Eigen::Index>(batch_rng.next_u64() % static_cast<std::uint64_t>(n));
      }

      GradientBundle grad;
      switch (cfg.mode) {
        case GradMode::lapl:
          grad = grad_lapl(theta, fam, data, batch, &out.grad_stats);
          break;
        case GradMode::ps:
          grad = grad_ps(theta, fam, data, batch, cfg.S, cfg.seed,
                         static_cast<std::uint64_t>(t));
          break;
        case GradMode::sml:
          grad = grad_sml(theta, fam, data, batch, cfg.S, cfg.seed,
                          static_cast<std::uint64_t>(t), &out.grad_stats);
          break;
      }
      out.nonfinite_grad_events +=
          adam_step(state, grad, theta, cfg.alpha, t, update_phi, cfg.beta1, cfg.beta2,
                    cfg.eps);
      opt_wall_ms += std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - t0)
                         .count();

      SGDTraceRow row;
      row.step = static_cast<int>(t) + 1;
      row.epoch = epoch;
      row.wall_ms = opt_wall_ms;
      row.grad_norm = grad.norm();
      if (!theta.V.allFinite() || !theta.eta0.allFinite() || !theta.phi.allFinite()) {
        out.diverged = true;
        out.trace.push_back(row);
        break;
      }
      const bool epoch_end = step + 1 == steps_per_epoch;
      if (do_eval && epoch_end && epoch % cfg.eval_every_epochs == 0) {
        SimLoglik s = evaluate(epoch);  // excluded from opt_wall_ms
        row.sim_nll = -s.value;
        row.sim_nll_std = s.mc_std;
        if (std::isfinite(initial_nll) &&
            row.sim_nll > initial_nll + 10.0 * std::fabs(initial_nll)) {
          out.diverged = true;
        }
      }
      out.trace.push_back(row);
      if (out.diverged) break;
    }
  }

  try {
    out.params = identify_loadings(theta);
  } catch (const std::exception&) {
    out.params = std::move(theta);
  }
  return out;
}

}  // namespace efm
