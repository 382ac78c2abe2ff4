#ifndef EFM_MODEL_CORE_HPP
#define EFM_MODEL_CORE_HPP

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "efm/quasi_family.hpp"

namespace efm {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Model parameters theta = (V, eta0, phi). `canonical` is set after
/// identification: V = U D with orthogonal columns and descending positive
/// column norms.
struct EFMParams {
  Matrix V;      // p x q loadings
  Vector eta0;   // latent center
  Vector phi;    // per-column dispersions, all > 0
  bool canonical = false;

  Eigen::Index p() const { return V.rows(); }
  Eigen::Index q() const { return V.cols(); }
  void validate() const;
};

/// Observations with entry weights; weight 0 marks a missing/excluded entry
/// (the stored X value there is a domain-valid placeholder).
struct Dataset {
  Matrix X;
  Matrix W;

  Dataset() = default;
  Dataset(Matrix x, Matrix w);
  static Dataset with_unit_weights(Matrix x);

  Eigen::Index n() const { return X.rows(); }
  Eigen::Index p() const { return X.cols(); }
  /// Fit feasibility: every row and column needs at least q observed entries.
  void validate(Eigen::Index q) const;
};

/// eta = Lambda V^T + 1 eta0^T.
Matrix linear_predictor(const Matrix& lambda, const EFMParams& params);

/// Data part of one row's log-likelihood at latent value `lambda_row`.
double row_quasi_loglik(const QuasiFamily& fam, const Eigen::Ref<const Vector>& x_row,
                        const Eigen::Ref<const Vector>& w_row, const EFMParams& params,
                        const Eigen::Ref<const Vector>& lambda_row);

/// Joint log-likelihood of the complete data: quasi-log-density summed over
/// observed entries plus the standard normal prior over latent rows.
double complete_loglik(const Dataset& data, const Matrix& lambda,
                       const EFMParams& params, const QuasiFamily& fam);

struct Identified {
  Matrix lambda;
  EFMParams params;
};

/// SVD canonicalization of the pair (Lambda, V): Lambda* takes the left
/// singular vectors of Lambda V^T and V* = U D the right ones scaled by the
/// singular values, so Lambda* V*^T reconstructs Lambda V^T. Column signs are
/// fixed by making the largest-magnitude entry of each column of U positive.
/// Throws if the product has numerical rank below q.
Identified identify(const Matrix& lambda, const EFMParams& params);

/// Rotation-only canonicalization: V* = V W = U D from the SVD of V itself.
/// Unlike identify(), this leaves V V^T (and so the marginal model and the
/// standard normal latent prior) unchanged; fitted factors rotate by W,
/// returned through `rotation` when provided.
EFMParams identify_loadings(const EFMParams& params, Matrix* rotation = nullptr);

/// Parameter serialization: V.csv, eta0.csv, phi.csv and meta.txt
/// (family, link, q, seed) inside `dir`.
void save_params(const std::string& dir, const EFMParams& params,
                 const QuasiFamily& fam, std::uint64_t seed);
struct LoadedParams {
  EFMParams params;
  QuasiFamily fam;
  std::uint64_t seed = 0;
};
LoadedParams load_params(const std::string& dir);

}  // namespace efm

#endif  // EFM_MODEL_CORE_HPP
