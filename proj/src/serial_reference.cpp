#include "efm/serial_reference.hpp"

#include <cmath>

#include "efm/rng.hpp"

namespace efm::serial {

std::vector<PosteriorApprox> posterior_batch(const Dataset& data,
                                             const EFMParams& params,
                                             const QuasiFamily& fam,
                                             PosteriorCenter center) {
  std::vector<PosteriorApprox> out;
  out.reserve(static_cast<size_t>(data.n()));
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    out.push_back(posterior_approx(data.X.row(i), data.W.row(i), params, fam, center));
  }
  return out;
}

SimLoglik simulated_marginal_loglik(const Dataset& data, const EFMParams& params,
                                    const QuasiFamily& fam, const EvalConfig& cfg) {
  const Eigen::Index n = data.n();
  const Eigen::Index q = params.q();
  const int groups = std::min(10, cfg.R);

  double value = 0.0;
  Vector group_est = Vector::Zero(groups);
  std::vector<double> lw(static_cast<size_t>(cfg.R));
  std::vector<double> sub;
  Vector draw(q);
  for (Eigen::Index i = 0; i < n; ++i) {
    Rng rng = substream(cfg.seed, Stream::eval, {static_cast<std::uint64_t>(i)});
    for (int r = 0; r < cfg.R; ++r) {
      for (Eigen::Index k = 0; k < q; ++k) draw(k) = rng.normal();
      lw[static_cast<size_t>(r)] =
          row_quasi_loglik(fam, data.X.row(i), data.W.row(i), params, draw);
    }
    value += log_sum_exp(lw) - std::log(static_cast<double>(cfg.R));
    for (int g = 0; g < groups; ++g) {
      sub.clear();
      for (int r = g; r < cfg.R; r += groups) sub.push_back(lw[static_cast<size_t>(r)]);
      group_est(g) += log_sum_exp(sub) - std::log(static_cast<double>(sub.size()));
    }
  }

  SimLoglik out;
  out.value = value;
  if (groups > 1) {
    const double mean = group_est.mean();
    const double var =
        (group_est.array() - mean).square().sum() / static_cast<double>(groups - 1);
    out.mc_std = std::sqrt(var / static_cast<double>(groups));
  }
  return out;
}

GradientBundle batch_gradient(const EFMParams& params, const QuasiFamily& fam,
                              const Dataset& data,
                              const std::vector<Eigen::Index>& batch_rows,
                              GradMode mode, int S, std::uint64_t master_seed,
                              std::uint64_t step) {
  const Eigen::Index p = params.p();
  const Eigen::Index q = params.q();
  GradientBundle total(p, q);
  for (size_t k = 0; k < batch_rows.size(); ++k) {
    const Eigen::Index i = batch_rows[k];
    const auto x_row = data.X.row(i);
    const auto w_row = data.W.row(i);
    switch (mode) {
      case GradMode::lapl: {
        Vector mode_vec = map_mode(x_row, w_row, params, fam);
        if (mode_vec.allFinite()) {
          total += grad_complete(params, fam, x_row, w_row, mode_vec);
        }
        break;
      }
      case GradMode::ps: {
        PosteriorApprox post = posterior_approx(x_row, w_row, params, fam);
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
          acc += grad_complete(params, fam, x_row, w_row, draw);
        }
        acc.scale(1.0 / static_cast<double>(S));
        total += acc;
        break;
      }
      case GradMode::sml: {
        Rng rng = substream(master_seed, Stream::sml_draws,
                            {step, static_cast<std::uint64_t>(k)});
        Matrix draws(S, q);
        std::vector<double> logw(static_cast<size_t>(S));
        for (int s = 0; s < S; ++s) {
          for (Eigen::Index c = 0; c < q; ++c) draws(s, c) = rng.normal();
          logw[static_cast<size_t>(s)] =
              row_quasi_loglik(fam, x_row, w_row, params, draws.row(s));
        }
        const double lse = log_sum_exp(logw);
        GradientBundle acc(p, q);
        for (int s = 0; s < S; ++s) {
          GradientBundle g = grad_complete(params, fam, x_row, w_row, draws.row(s));
          g.scale(std::exp(logw[static_cast<size_t>(s)] - lse));
          acc += g;
        }
        total += acc;
        break;
      }
    }
  }
  total.scale(static_cast<double>(data.n()) / static_cast<double>(batch_rows.size()));
  return total;
}

}  // namespace efm::serial
