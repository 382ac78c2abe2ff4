#ifndef EFM_EM_OPTIMIZER_HPP
#define EFM_EM_OPTIMIZER_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <utility>
#include <vector>

#include "efm/laplace_posterior.hpp"
#include "efm/model_core.hpp"

namespace efm {

/// Probabilists' Gauss-Hermite rule: nodes/weights for integrals against the
/// standard normal density, exact for polynomials of degree <= 2m-1; weights
/// sum to one. Valid for 1 <= m <= 50.
std::pair<Vector, Vector> gh_rule_1d(int m);

/// Tensor-product rule affinely mapped onto one row's Laplace posterior:
/// nodes = center + scale * z with scale scale^T = (H + I)^-1, weights the
/// product base weights.
struct CubatureRule {
  Matrix nodes;    // m^q x q
  Vector weights;  // sums to 1
  Vector center;   // q
  Matrix scale;    // q x q factor of (H + I)^-1
};

/// `precision` is the likelihood curvature H at the (penalized) mode; the
/// unit prior curvature is added internally. Cholesky failure falls back to
/// an eigendecomposition with eigenvalues floored at 1e-10.
CubatureRule adapted_cubature(const Vector& center, const Matrix& precision, int m);

struct EMConfig {
  Eigen::Index q = 2;
  int m = 3;          // per-axis Gauss-Hermite nodes (m^q total)
  int max_iter = 50;  // T
  double tol = 1e-6;  // relative change of the penalized surrogate objective
  std::uint64_t seed = 0;
};

/// One weighted quasi-GLM regression per column of X on the cubature nodes;
/// each (row, node) replicate enters with weight w_il * w_ij. Returns the
/// updated loadings and centers plus the count of columns whose IRLS failed
/// (those keep their previous values).
struct MStepResult {
  Matrix V;
  Vector eta0;
  int failed_columns = 0;
};
MStepResult m_step(const Dataset& data, const std::vector<CubatureRule>& rules,
                   const EFMParams& prev, const QuasiFamily& fam);

/// Cubature-weighted Pearson dispersion update; fixed-dispersion families
/// return all ones. Columns with no observed entries keep their previous phi.
Vector update_dispersion(const Dataset& data, const std::vector<CubatureRule>& rules,
                         const EFMParams& current, const QuasiFamily& fam);

struct EMTraceRow {
  int iter = 0;
  double surrogate_obj = 0.0;
  double wall_ms = 0.0;
};

struct EMResult {
  EFMParams params;
  Matrix lambda;  // posterior-mean factors (cubature centers at the final fit)
  std::vector<EMTraceRow> trace;
  int skipped_row_events = 0;  // E-step rows skipped across iterations
  int failed_column_events = 0;
  bool tol_reached = false;
};

/// Alternates the Laplace-adapted cubature E-step with the quasi-GLM M-step
/// and Pearson dispersion update, then canonicalizes the result. `on_iter`
/// (optional) observes each iteration's parameters.
EMResult fit_em(const Dataset& data, const QuasiFamily& fam, const EMConfig& cfg,
                std::optional<EFMParams> theta0 = std::nullopt,
                const std::function<void(int, const EFMParams&)>& on_iter = {});

}  // namespace efm

#endif  // EFM_EM_OPTIMIZER_HPP
