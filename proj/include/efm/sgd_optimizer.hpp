#ifndef EFM_SGD_OPTIMIZER_HPP
#define EFM_SGD_OPTIMIZER_HPP

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "efm/model_core.hpp"

namespace efm {

enum class GradMode { lapl, ps, sml };

GradMode grad_mode_from_string(std::string_view s);
std::string to_string(GradMode mode);

struct SGDConfig {
  Eigen::Index q = 2;
  int B = 128;         // batch size (rows sampled with replacement)
  int S = 50;          // Monte Carlo draws per row (ps/sml)
  double alpha = 0.5;  // base learning rate; step t uses alpha / (1 + 0.5 t)
  int epochs = 30;     // T
  GradMode mode = GradMode::ps;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int eval_every_epochs = 1;  // 0 disables trace evaluations
  int eval_R = 1500;
  bool eval_crn = true;  // reuse the same evaluation draws across epochs
};

/// Ascent-direction gradients of log f(x_row, lambda) with respect to theta.
/// dphi is only populated for free-dispersion families.
struct GradientBundle {
  Matrix dV;
  Vector deta0;
  Vector dphi;

  GradientBundle() = default;
  GradientBundle(Eigen::Index p, Eigen::Index q);
  GradientBundle& operator+=(const GradientBundle& other);
  void scale(double c);
  double norm() const;
};

/// One row's complete-data gradient at the given latent value.
GradientBundle grad_complete(const EFMParams& params, const QuasiFamily& fam,
                             const Eigen::Ref<const Vector>& x_row,
                             const Eigen::Ref<const Vector>& w_row,
                             const Eigen::Ref<const Vector>& lambda);

struct GradStats {
  int failed_rows = 0;     // excluded mode failures (lapl)
  int low_ess_rows = 0;    // sml rows with effective sample size < 2
};

/// Laplace plug-in gradient: sum over batch rows of grad_complete at the
/// penalized mode, scaled by n/B.
GradientBundle grad_lapl(const EFMParams& params, const QuasiFamily& fam,
                         const Dataset& data,
                         const std::vector<Eigen::Index>& batch_rows,
                         GradStats* stats = nullptr);

/// Posterior-sampling gradient: per row, averages grad_complete over S draws
/// from the Gaussian posterior approximation; scaled by n/B. `step` indexes
/// the draw substream so results are reproducible and thread-invariant.
GradientBundle grad_ps(const EFMParams& params, const QuasiFamily& fam,
                       const Dataset& data,
                       const std::vector<Eigen::Index>& batch_rows, int S,
                       std::uint64_t master_seed, std::uint64_t step);

/// Simulated-ML gradient: self-normalized importance weights over prior
/// draws, all weight arithmetic in log space.
GradientBundle grad_sml(const EFMParams& params, const QuasiFamily& fam,
                        const Dataset& data,
                        const std::vector<Eigen::Index>& batch_rows, int S,
                        std::uint64_t master_seed, std::uint64_t step,
                        GradStats* stats = nullptr);

/// Adam accumulators; dispersions are updated through log(phi) to stay
/// positive.
struct AdamState {
  Matrix m_V, v_V;
  Vector m_eta0, v_eta0;
  Vector m_logphi, v_logphi;
  long t = 0;

  AdamState() = default;
  AdamState(Eigen::Index p, Eigen::Index q);
};

/// Standard Adam ascent step with bias correction and decayed learning rate
/// gamma_t = alpha / (1 + 0.5 t). Non-finite gradient entries are zeroed;
/// the count is returned.
int adam_step(AdamState& state, const GradientBundle& grad, EFMParams& params,
              double alpha, long t, bool update_phi, double beta1 = 0.9,
              double beta2 = 0.999, double eps = 1e-8);

struct SGDTraceRow {
  int step = 0;
  int epoch = 0;
  double wall_ms = 0.0;   // optimization time, evaluation excluded
  double grad_norm = 0.0;
  double sim_nll = std::numeric_limits<double>::quiet_NaN();  // NaN = not evaluated
  double sim_nll_std = std::numeric_limits<double>::quiet_NaN();
};

struct SGDResult {
  EFMParams params;
  std::vector<SGDTraceRow> trace;
  GradMode mode = GradMode::ps;
  int S = 0;
  int B = 0;
  bool diverged = false;
  int nonfinite_grad_events = 0;
  GradStats grad_stats;
};

/// Adam SGD over with-replacement mini-batches with the selected marginal
/// gradient evaluator; canonicalizes the loadings on exit.
SGDResult fit_sgd(const Dataset& data, const QuasiFamily& fam, const SGDConfig& cfg,
                  std::optional<EFMParams> theta0 = std::nullopt);

}  // namespace efm

#endif  // EFM_SGD_OPTIMIZER_HPP
