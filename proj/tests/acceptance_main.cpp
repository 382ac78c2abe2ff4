// Acceptance suite: runs every criterion at its stated tolerance and prints
// one pass/fail line per criterion. Exit status is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "efm/cli.hpp"
#include "efm/covariance.hpp"
#include "efm/csv.hpp"
#include "efm/em_optimizer.hpp"
#include "efm/initialize.hpp"
#include "efm/laplace_posterior.hpp"
#include "efm/likelihood_eval.hpp"
#include "efm/rng.hpp"
#include "efm/sgd_optimizer.hpp"
#include "efm/simulation.hpp"
#include "support/oracles.hpp"

using namespace efm;
namespace fs = std::filesystem;

namespace {

char detail_buf[512];

// Saturated Gaussian MLE bound: mean + full covariance, 1/n divisor.
double saturated_gaussian_loglik(const Matrix& x) {
  const Eigen::Index n = x.rows();
  const Eigen::Index p = x.cols();
  Vector mean = x.colwise().mean();
  Matrix centered = x.rowwise() - mean.transpose();
  Matrix cov = centered.transpose() * centered / static_cast<double>(n);
  Eigen::LLT<Matrix> llt(cov);
  double logdet = 0.0;
  for (Eigen::Index j = 0; j < p; ++j)
    logdet += 2.0 * std::log(Matrix(llt.matrixL())(j, j));
  return -0.5 * n *
         (p * std::log(2.0 * M_PI) + logdet + static_cast<double>(p));
}

Matrix gaussian_mle_covariance(const Matrix& x) {
  const Eigen::Index n = x.rows();
  Vector mean = x.colwise().mean();
  Matrix centered = x.rowwise() - mean.transpose();
  return centered.transpose() * centered / static_cast<double>(n);
}

// --- criterion 1: gradient correctness --------------------------------------

bool criterion_gradients() {
  Rng rng(2026);
  const std::vector<const char*> names = {"gaussian:identity", "poisson:log",
                                          "binomial:logit",    "negbin(0.4):log",
                                          "gamma:log",         "quasi_poisson:log"};
  double worst = 0.0;
  for (const char* name : names) {
    const QuasiFamily fam = QuasiFamily::parse(name);
    for (int rep = 0; rep < 50; ++rep) {
      const Eigen::Index p = 4, q = 2;
      EFMParams params;
      params.V = oracles::random_matrix(rng, p, q, 0.4);
      params.eta0 = oracles::random_matrix(rng, p, 1, 0.3).col(0);
      params.phi = fam.free_dispersion() ? Vector::Constant(p, 1.3) : Vector::Ones(p);
      Matrix lambda_row = oracles::random_matrix(rng, 1, q);
      Matrix x = simulate_data(fam, lambda_row, params, Matrix::Ones(1, p),
                               rng.next_u64());
      Dataset data = Dataset::with_unit_weights(x);
      GradientBundle g = grad_complete(params, fam, data.X.row(0), data.W.row(0),
                                       lambda_row.row(0));
      EFMParams theta = params;
      auto loglik = [&]() { return complete_loglik(data, lambda_row, theta, fam); };
      const double h = 1e-6;
      for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index k = 0; k < q; ++k) {
          theta.V(j, k) = params.V(j, k) + h;
          const double up = loglik();
          theta.V(j, k) = params.V(j, k) - h;
          const double dn = loglik();
          theta.V(j, k) = params.V(j, k);
          worst = std::max(worst, oracles::rel_err(g.dV(j, k), (up - dn) / (2 * h)));
        }
        theta.eta0(j) = params.eta0(j) + h;
        const double up = loglik();
        theta.eta0(j) = params.eta0(j) - h;
        const double dn = loglik();
        theta.eta0(j) = params.eta0(j);
        worst = std::max(worst, oracles::rel_err(g.deta0(j), (up - dn) / (2 * h)));
        if (fam.free_dispersion()) {
          theta.phi(j) = params.phi(j) + h;
          const double pu = loglik();
          theta.phi(j) = params.phi(j) - h;
          const double pd = loglik();
          theta.phi(j) = params.phi(j);
          worst = std::max(worst, oracles::rel_err(g.dphi(j), (pu - pd) / (2 * h)));
        }
      }
    }
  }
  std::snprintf(detail_buf, sizeof(detail_buf), "max rel err %.2e (tol 1e-5)", worst);
  return worst < 1e-5;
}

// --- criterion 2: gaussian oracle equivalence --------------------------------

bool criterion_gaussian_oracle() {
  const QuasiFamily fam = QuasiFamily::parse("gaussian");
  const Eigen::Index n = 300, p = 10, q = 2;
  Rng rng(7);
  Matrix lambda = oracles::random_matrix(rng, n, q);
  EFMParams truth;
  truth.V = oracles::random_matrix(rng, p, q);
  truth.eta0 = oracles::random_matrix(rng, p, 1, 0.5).col(0);
  truth.phi = Vector::Constant(p, 0.6);
  Dataset data = Dataset::with_unit_weights(
      simulate_data(fam, lambda, truth, Matrix::Ones(n, p), 19));

  const double optimum = saturated_gaussian_loglik(data.X);
  const Matrix mle_cov = gaussian_mle_covariance(data.X);

  EMConfig emc;
  emc.q = q;
  emc.m = 3;
  emc.max_iter = 80;
  emc.tol = 1e-9;
  EMResult em = fit_em(data, fam, emc);
  const double em_ll = exact_gaussian_marginal(data, em.params, fam);
  Matrix em_cov = em.params.V * em.params.V.transpose();
  em_cov.diagonal() += em.params.phi;
  const double em_gap = std::fabs(em_ll - optimum) / std::fabs(optimum);
  const double em_cov_err = (em_cov - mle_cov).norm() / mle_cov.norm();

  SGDConfig sgc;
  sgc.q = q;
  sgc.B = 128;
  sgc.S = 200;
  sgc.alpha = 0.3;
  sgc.epochs = 80;
  sgc.mode = GradMode::ps;
  sgc.seed = 11;
  sgc.eval_every_epochs = 0;
  SGDResult sgd = fit_sgd(data, fam, sgc);
  const double sgd_ll = exact_gaussian_marginal(data, sgd.params, fam);
  Matrix sgd_cov = sgd.params.V * sgd.params.V.transpose();
  sgd_cov.diagonal() += sgd.params.phi;
  const double sgd_gap = std::fabs(sgd_ll - optimum) / std::fabs(optimum);
  const double sgd_cov_err = (sgd_cov - mle_cov).norm() / mle_cov.norm();

  std::snprintf(detail_buf, sizeof(detail_buf),
                "loglik gap em %.3f%% sgd %.3f%% (tol 1%%); cov err em %.1f%% sgd "
                "%.1f%% (tol 10%%)",
                100 * em_gap, 100 * sgd_gap, 100 * em_cov_err, 100 * sgd_cov_err);
  return em_gap < 0.01 && sgd_gap < 0.01 && em_cov_err < 0.10 && sgd_cov_err < 0.10;
}

// --- criterion 3: optimizer ordering (p = 10) --------------------------------

struct EvalPoint {
  double wall_ms;
  double nll;
};

std::vector<EvalPoint> eval_points(const SGDResult& res) {
  std::vector<EvalPoint> pts;
  for (const auto& row : res.trace) {
    if (std::isfinite(row.sim_nll)) pts.push_back({row.wall_ms, row.sim_nll});
  }
  return pts;
}

double nll_at(const std::vector<EvalPoint>& pts, double t) {
  double value = pts.front().nll;
  for (const auto& pt : pts) {
    if (pt.wall_ms <= t) value = pt.nll;
  }
  return value;
}

double first_epoch_time(const std::vector<EvalPoint>& pts) {
  // First evaluated point after the wall-zero initial one.
  for (const auto& pt : pts) {
    if (pt.wall_ms > 0.0) return pt.wall_ms;
  }
  return 0.0;
}

bool criterion_optimizer_ordering() {
  const QuasiFamily fam = QuasiFamily::parse("poisson");
  const Eigen::Index n = 500, p = 10, q = 2;
  Rng rng(13);
  Matrix lambda = oracles::random_matrix(rng, n, q);
  EFMParams truth;
  truth.V = oracles::random_matrix(rng, p, q, 0.35);
  truth.eta0 = Vector::Constant(p, 0.5);
  truth.phi = Vector::Ones(p);
  Dataset data = Dataset::with_unit_weights(
      simulate_data(fam, lambda, truth, Matrix::Ones(n, p), 23));

  EFMParams theta0 = svd_initialize(data, fam, q).params;
  auto run_mode = [&](GradMode mode, int S) {
    SGDConfig cfg;
    cfg.q = q;
    cfg.B = 128;
    cfg.S = S;
    cfg.alpha = 0.5;
    cfg.epochs = 40;
    cfg.mode = mode;
    cfg.seed = 17;
    cfg.eval_every_epochs = 1;
    cfg.eval_R = 1500;
    return fit_sgd(data, fam, cfg, theta0);
  };
  auto ps50 = eval_points(run_mode(GradMode::ps, 50));
  auto sml500 = eval_points(run_mode(GradMode::sml, 500));
  auto sml50 = eval_points(run_mode(GradMode::sml, 50));

  // PS(50) vs SML(500): matched wall-time checkpoints over the common
  // observation window, starting after every run's first epoch.
  const double t_lo =
      std::max({first_epoch_time(ps50), first_epoch_time(sml500), first_epoch_time(sml50)});
  const double t_hi =
      std::min({ps50.back().wall_ms, sml500.back().wall_ms, sml50.back().wall_ms});
  if (!(t_hi > t_lo)) {
    std::snprintf(detail_buf, sizeof(detail_buf), "no common wall-time window");
    return false;
  }
  const int grid = 20;
  int ps_wins = 0;
  for (int k = 0; k < grid; ++k) {
    const double t = t_lo + (t_hi - t_lo) * (k + 1) / grid;
    if (nll_at(ps50, t) < nll_at(sml500, t)) ++ps_wins;
  }
  // SML(50) trails SML(500): matched epoch checkpoints after the first epoch
  // (equal step counts; the cheap estimator is trivially ahead on a raw time
  // axis while the expensive one is still in its first epochs).
  int sml_order = 0;
  int sml_total = 0;
  for (size_t k = 2; k < sml50.size() && k < sml500.size(); ++k) {
    ++sml_total;
    if (sml50[k].nll > sml500[k].nll) ++sml_order;
  }
  std::snprintf(detail_buf, sizeof(detail_buf),
                "PS(50)<SML(500) at %d/20 wall checkpoints, SML(50)>SML(500) at "
                "%d/%d epochs (need >=80%%)",
                ps_wins, sml_order, sml_total);
  return ps_wins >= 16 && 5 * sml_order >= 4 * sml_total;
}

// --- criterion 4: Laplace behavior at p = 512 --------------------------------

bool criterion_laplace_large_p() {
  const QuasiFamily fam = QuasiFamily::parse("poisson");
  const Eigen::Index n = 256, p = 512, q = 3;
  Rng rng(29);
  Matrix lambda = oracles::random_matrix(rng, n, q);
  EFMParams truth;
  truth.V = oracles::random_matrix(rng, p, q, 0.3);
  truth.eta0 = Vector::Constant(p, 1.2);
  truth.phi = Vector::Ones(p);
  Dataset data = Dataset::with_unit_weights(
      simulate_data(fam, lambda, truth, Matrix::Ones(n, p), 31));

  // One continuous Laplace-gradient run; monotonicity is read off its last
  // ten epochs, past the transient of the fresh Adam state.
  SGDConfig cfg;
  cfg.q = q;
  cfg.B = 128;
  cfg.S = 50;
  cfg.alpha = 0.1;
  cfg.epochs = 50;
  cfg.mode = GradMode::lapl;
  cfg.seed = 37;
  cfg.eval_every_epochs = 1;
  cfg.eval_R = 400;
  SGDResult lapl = fit_sgd(data, fam, cfg);
  std::vector<double> nll;
  std::vector<double> stds;
  for (const auto& row : lapl.trace) {
    if (std::isfinite(row.sim_nll)) {
      nll.push_back(row.sim_nll);
      stds.push_back(row.sim_nll_std);
    }
  }
  if (nll.size() != 51) {
    std::snprintf(detail_buf, sizeof(detail_buf), "lapl run aborted early");
    return false;
  }
  const size_t tail = nll.size() - 11;  // epochs 40..50
  bool monotone = true;
  double worst_rise = -1e300;
  for (size_t k = tail + 1; k < nll.size(); ++k) {
    const double allowed = 2.0 * (stds[k] + stds[k - 1]);
    worst_rise = std::max(worst_rise, nll[k] - nll[k - 1] - allowed);
    if (nll[k] > nll[k - 1] + allowed) monotone = false;
  }
  const bool lapl_decreases = nll.back() <= nll[tail] && nll.back() < nll.front();

  // SML from the settled point: the self-normalized weights collapse at this
  // dimension and the loss fails to come back down.
  SGDConfig scfg = cfg;
  scfg.mode = GradMode::sml;
  scfg.epochs = 10;
  SGDResult sml = fit_sgd(data, fam, scfg, lapl.params);
  std::vector<EvalPoint> sml_pts = eval_points(sml);
  const double sml_first = sml_pts.front().nll;
  const double sml_last = sml_pts.back().nll;
  const bool sml_stuck = sml.diverged || sml_last >= sml_first - 2.0 * stds.front();

  std::snprintf(detail_buf, sizeof(detail_buf),
                "lapl total drop %.0f, tail drop %.1f (worst rise beyond band "
                "%.1f); sml net change %+.0f%s",
                nll.front() - nll.back(), nll[tail] - nll.back(), worst_rise,
                sml_last - sml_first, sml.diverged ? " [diverged]" : "");
  return monotone && lapl_decreases && sml_stuck;
}

// --- criterion 5: dispersion recovery ----------------------------------------

bool criterion_dispersion_recovery() {
  const QuasiFamily fam = QuasiFamily::parse("quasi_poisson");
  FanScenario sc = fan_scenario(756, 66, fam, 41);
  EMConfig cfg;
  cfg.q = 3;
  cfg.m = 3;
  cfg.max_iter = 15;
  EMResult res = fit_em(sc.data, fam, cfg);
  std::vector<double> rel;
  for (Eigen::Index j = 0; j < 66; ++j) {
    rel.push_back(std::fabs(res.params.phi(j) / sc.theta.phi(j) - 1.0));
  }
  std::nth_element(rel.begin(), rel.begin() + rel.size() / 2, rel.end());
  const double median = rel[rel.size() / 2];
  std::snprintf(detail_buf, sizeof(detail_buf),
                "median |phi_hat/phi - 1| = %.3f (tol 0.2)", median);
  return median < 0.2;
}

// --- criterion 6: covariance study -------------------------------------------

bool criterion_covariance_study() {
  const std::vector<const char*> families = {"quasi_poisson:log", "negbin(0.05):log",
                                             "binomial:logit", "poisson:log"};
  const FanPriors priors = FanPriors::standard();
  int wins = 0;
  int total = 0;
  std::string failures;
  for (Eigen::Index p : {66, 116}) {
    for (const char* name : families) {
      const QuasiFamily fam = QuasiFamily::parse(name);
      for (int rep = 0; rep < 3; ++rep) {
        const std::uint64_t seed = 1000 + 97 * rep + 7 * p +
                                   static_cast<std::uint64_t>(fam.family);
        FanScenario sc = fan_scenario(756, p, fam, seed);
        CovEstimate truth =
            model_covariance(absorb_latent_prior(sc.theta, priors), fam, 60000, seed + 1);

        EMConfig cfg;
        cfg.q = 3;
        cfg.m = 3;
        cfg.max_iter = 8;
        EMResult fit = fit_em(sc.data, fam, cfg);
        CovEstimate model = model_covariance(fit.params, fam, 30000, seed + 2);
        CovEstimate naive = sample_covariance(sc.data.X);

        CovErrors em = cov_errors(model, truth);
        CovErrors ne = cov_errors(naive, truth);
        ++total;
        const bool win = em.entropy < ne.entropy && em.normalized < ne.normalized;
        if (win) {
          ++wins;
        } else if (failures.size() < 200) {
          failures += std::string(" ") + name + "@p" + std::to_string(p) + "#" +
                      std::to_string(rep);
        }
      }
    }
  }
  std::snprintf(detail_buf, sizeof(detail_buf),
                "model beat sample covariance in %d/%d replicates%s%s", wins, total,
                failures.empty() ? "" : "; lost:", failures.c_str());
  return wins == total;
}

// --- criterion 7: identifiability suite ---------------------------------------

bool criterion_identifiability() {
  Rng rng(43);
  double worst_recon = 0.0;
  double worst_idem = 0.0;
  double worst_rot = 0.0;
  double worst_ll = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::Index n = 25, p = 9, q = 3;
    EFMParams params;
    params.V = oracles::random_matrix(rng, p, q);
    params.eta0 = oracles::random_matrix(rng, p, 1, 0.3).col(0);
    params.phi = Vector::Ones(p);
    Matrix lambda = oracles::random_matrix(rng, n, q);

    Identified once = identify(lambda, params);
    const Matrix prod = lambda * params.V.transpose();
    worst_recon = std::max(
        worst_recon,
        (once.lambda * once.params.V.transpose() - prod).norm() / prod.norm());
    Identified twice = identify(once.lambda, once.params);
    worst_idem = std::max(worst_idem,
                          (twice.params.V - once.params.V).cwiseAbs().maxCoeff());

    Matrix t = oracles::random_orthogonal(rng, q);
    EFMParams rotated = params;
    rotated.V = params.V * t.transpose();
    Identified from_rot = identify(lambda * t.transpose(), rotated);
    worst_rot = std::max(worst_rot,
                         (from_rot.params.V - once.params.V).cwiseAbs().maxCoeff());

    // complete_loglik invariance under orthogonal reparameterization.
    const QuasiFamily pois = QuasiFamily::parse("poisson");
    EFMParams pp = params;
    pp.V *= 0.4;
    pp.eta0 = Vector::Constant(p, 0.5);
    Matrix x(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < p; ++j)
        x(i, j) = static_cast<double>(rng.poisson(2.0));
    Dataset data = Dataset::with_unit_weights(x);
    EFMParams pp_rot = pp;
    pp_rot.V = pp.V * t.transpose();
    const double base = complete_loglik(data, lambda, pp, pois);
    const double rot = complete_loglik(data, lambda * t.transpose(), pp_rot, pois);
    worst_ll = std::max(worst_ll, std::fabs(base - rot) / std::fabs(base));
  }
  std::snprintf(detail_buf, sizeof(detail_buf),
                "recon %.1e (tol 1e-10), idem %.1e, rot %.1e, loglik-invar %.1e "
                "(tol 1e-9)",
                worst_recon, worst_idem, worst_rot, worst_ll);
  return worst_recon < 1e-10 && worst_idem < 1e-9 && worst_rot < 1e-8 &&
         worst_ll < 1e-9;
}

// --- criterion 8: cubature exactness ------------------------------------------

bool criterion_cubature() {
  double worst = 0.0;
  for (int m = 1; m <= 10; ++m) {
    auto [nodes, weights] = gh_rule_1d(m);
    for (int k = 0; k <= 2 * m - 1; ++k) {
      double mk = 0.0;
      double scale = 0.0;
      for (int l = 0; l < m; ++l) {
        mk += weights(l) * std::pow(nodes(l), k);
        scale += weights(l) * std::pow(std::fabs(nodes(l)), k);
      }
      double want = 0.0;
      if (k % 2 == 0) {
        want = 1.0;
        for (int j = k - 1; j > 1; j -= 2) want *= j;
      }
      worst = std::max(worst, std::fabs(mk - want) / std::max(1.0, scale));
    }
  }

  Rng rng(47);
  double worst_moment = 0.0;
  for (int rep = 0; rep < 5; ++rep) {
    const Eigen::Index q = 2;
    Matrix a = oracles::random_matrix(rng, q, q);
    Matrix h = a * a.transpose();
    Vector center = oracles::random_matrix(rng, q, 1).col(0);
    CubatureRule rule = adapted_cubature(center, h, 3);
    Vector mean = Vector::Zero(q);
    Matrix second = Matrix::Zero(q, q);
    for (Eigen::Index l = 0; l < rule.nodes.rows(); ++l) {
      mean += rule.weights(l) * rule.nodes.row(l).transpose();
      Vector d = rule.nodes.row(l).transpose() - center;
      second += rule.weights(l) * d * d.transpose();
    }
    Matrix target = (h + Matrix::Identity(q, q)).ldlt().solve(Matrix::Identity(q, q));
    worst_moment = std::max(worst_moment, (mean - center).cwiseAbs().maxCoeff());
    worst_moment = std::max(worst_moment, (second - target).cwiseAbs().maxCoeff());
  }
  std::snprintf(detail_buf, sizeof(detail_buf),
                "1-d exactness err %.1e (tol 1e-9); adapted moment err %.1e (tol 1e-10)",
                worst, worst_moment);
  return worst < 1e-9 && worst_moment < 1e-10;
}

// --- criterion 9: posterior sanity ---------------------------------------------

bool criterion_posterior_sanity() {
  Rng rng(53);
  const QuasiFamily gauss = QuasiFamily::parse("gaussian");
  double worst_gauss = 0.0;
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::Index p = 9, q = 2;
    const double sigma2 = 0.8 + rng.uniform();
    EFMParams params;
    params.V = oracles::random_matrix(rng, p, q);
    params.eta0 = oracles::random_matrix(rng, p, 1, 0.3).col(0);
    params.phi = Vector::Constant(p, sigma2);
    Vector x = oracles::random_matrix(rng, p, 1).col(0);
    PosteriorApprox post = posterior_approx(x, Vector::Ones(p), params, gauss);
    Matrix cov = ((params.V.transpose() * params.V) / sigma2 + Matrix::Identity(q, q))
                     .ldlt()
                     .solve(Matrix::Identity(q, q));
    Vector mean = cov * params.V.transpose() * (x - params.eta0) / sigma2;
    worst_gauss = std::max(worst_gauss, (post.post_cov - cov).cwiseAbs().maxCoeff());
    worst_gauss = std::max(worst_gauss, (post.post_mean - mean).cwiseAbs().maxCoeff());
  }

  const QuasiFamily pois = QuasiFamily::parse("poisson");
  int ok = 0;
  double worst_rel = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::Index p = 20;
    EFMParams params;
    params.V = oracles::random_matrix(rng, p, 1, 0.5);
    params.eta0 = Vector::Constant(p, 0.5);
    params.phi = Vector::Ones(p);
    const double lt = rng.normal();
    Vector x(p), w = Vector::Ones(p);
    for (Eigen::Index j = 0; j < p; ++j) {
      x(j) = static_cast<double>(
          rng.poisson(std::exp(params.V(j, 0) * lt + params.eta0(j))));
    }
    PosteriorApprox post = posterior_approx(x, w, params, pois);
    const double ref =
        row_quasi_loglik(pois, x, w, params, post.mode) - 0.5 * post.mode.squaredNorm();
    auto unnorm = [&](double l) {
      return std::exp(row_quasi_loglik(pois, x, w, params, Vector::Constant(1, l)) -
                      0.5 * l * l - ref);
    };
    const double z = oracles::integrate(unnorm, -8.0, 8.0, 1e-12);
    const double m1 =
        oracles::integrate([&](double l) { return l * unnorm(l); }, -8.0, 8.0, 1e-12) /
        z;
    const double m2 = oracles::integrate([&](double l) { return l * l * unnorm(l); },
                                         -8.0, 8.0, 1e-12) /
                      z;
    const double var = m2 - m1 * m1;
    const double mean_err = std::fabs(post.post_mean(0) - m1) / std::max(std::fabs(m1), 0.25);
    const double var_err = std::fabs(post.post_cov(0, 0) - var) / std::max(var, 0.05);
    worst_rel = std::max({worst_rel, mean_err, var_err});
    if (mean_err < 0.10 && var_err < 0.10) ++ok;
  }
  std::snprintf(detail_buf, sizeof(detail_buf),
                "gaussian conjugate err %.1e (tol 1e-10); poisson rows ok %d/20 "
                "(worst rel %.3f, tol 0.10)",
                worst_gauss, ok, worst_rel);
  return worst_gauss < 1e-10 && ok == 20;
}

// --- criterion 10: bench determinism -------------------------------------------

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "<missing " + path + ">";
  return std::string(std::istreambuf_iterator<char>(in), {});
}

bool criterion_determinism() {
  const fs::path root = fs::temp_directory_path() / "efm_acceptance_bench";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string sim_dir = (root / "sim").string();
  RunConfig sim = parse_config({"simulate", "--scenario", "generic", "--family",
                                "poisson:log", "--n", "80", "--p", "6", "--q", "2",
                                "--eta0", "0.7", "--seed", "5", "-o", sim_dir});
  if (run(sim) != 0) return false;

  auto bench_into = [&](const std::string& dir, const char* threads) {
    RunConfig b = parse_config({"bench", "-i", sim_dir + "/X.csv", "--family",
                                "poisson:log", "--q", "2", "--B", "32", "--S", "10",
                                "--epochs", "3", "--eval-R", "200", "--seed", "21",
                                "--threads", threads, "-o", dir});
    return run(b);
  };
  if (bench_into((root / "a").string(), "2") != 0) return false;
  if (bench_into((root / "b").string(), "2") != 0) return false;
  if (bench_into((root / "c").string(), "1") != 0) return false;

  bool equal = true;
  for (const char* name :
       {"trace_ps.csv", "trace_lapl.csv", "trace_sml.csv", "bench_summary.csv"}) {
    const std::string ref = slurp((root / "a" / name).string());
    equal = equal && ref == slurp((root / "b" / name).string());
    equal = equal && ref == slurp((root / "c" / name).string());
  }
  fs::remove_all(root);
  std::snprintf(detail_buf, sizeof(detail_buf),
                "repeat run and 1-vs-2 thread traces %s", equal ? "identical" : "DIFFER");
  return equal;
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<bool()> fn;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient correctness vs finite differences", criterion_gradients},
      {2, "gaussian oracle equivalence (em + sgd/ps)", criterion_gaussian_oracle},
      {3, "optimizer ordering at p=10 (ps vs sml)", criterion_optimizer_ordering},
      {4, "laplace decreases / sml stalls at p=512", criterion_laplace_large_p},
      {5, "quasi-poisson dispersion recovery", criterion_dispersion_recovery},
      {6, "covariance study beats sample covariance", criterion_covariance_study},
      {7, "identifiability suite", criterion_identifiability},
      {8, "cubature exactness", criterion_cubature},
      {9, "posterior approximation sanity", criterion_posterior_sanity},
      {10, "bench determinism across runs and threads", criterion_determinism},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    bool ok = false;
    detail_buf[0] = '\0';
    try {
      ok = c.fn();
    } catch (const std::exception& e) {
      std::snprintf(detail_buf, sizeof(detail_buf), "exception: %s", e.what());
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %2d %s: %s [%.1fs]\n", ok ? "PASS" : "FAIL", c.id, c.name,
                detail_buf, secs);
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  if (failures == 0) {
    std::printf("all %zu acceptance criteria passed\n", criteria.size());
  } else {
    std::printf("%d acceptance criteria FAILED\n", failures);
  }
  return failures;
}
