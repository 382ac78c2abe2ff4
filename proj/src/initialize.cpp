#include "efm/initialize.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace efm {

namespace {

double clip_interior(const QuasiFamily& fam, double x) {
  switch (fam.family) {
    case FamilyKind::gaussian:
      return x;
    case FamilyKind::poisson:
    case FamilyKind::quasi_poisson:
    case FamilyKind::negative_binomial:
    case FamilyKind::gamma:
      return std::max(x, 0.1);
    case FamilyKind::binomial:
      return std::clamp(x, 0.05, 0.95);
  }
  return x;
}

}  // namespace

Initialization svd_initialize(const Dataset& data, const QuasiFamily& fam,
                              Eigen::Index q) {
  const Eigen::Index n = data.n();
  const Eigen::Index p = data.p();
  if (q < 1 || q > std::min(n, p)) {
    throw std::invalid_argument("q must be in [1, min(n, p)]");
  }
  data.validate(q);

  // Link-transformed data with per-column centers over observed entries.
  Matrix y(n, p);
  Vector center(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    double sum = 0.0;
    Eigen::Index count = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (data.W(i, j) > 0.0) {
        y(i, j) = eta_from_mean(fam, clip_interior(fam, data.X(i, j)));
        sum += y(i, j);
        ++count;
      }
    }
    center(j) = sum / static_cast<double>(count);
    for (Eigen::Index i = 0; i < n; ++i) {
      y(i, j) = data.W(i, j) > 0.0 ? y(i, j) - center(j) : 0.0;
    }
  }

  Eigen::BDCSVD<Matrix> svd(y, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double root_n = std::sqrt(static_cast<double>(n));

  Initialization out;
  out.lambda = root_n * svd.matrixU().leftCols(q);
  out.params.V =
      svd.matrixV().leftCols(q) * (svd.singularValues().head(q) / root_n).asDiagonal();
  out.params.eta0 = center;
  out.params.phi = Vector::Ones(p);

  if (fam.free_dispersion()) {
    const Matrix eta = linear_predictor(out.lambda, out.params);
    for (Eigen::Index j = 0; j < p; ++j) {
      double sum = 0.0;
      Eigen::Index count = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        const double w = data.W(i, j);
        if (w == 0.0) continue;
        const double mu = mean_from_eta(fam, eta(i, j));
        const double r = data.X(i, j) - mu;
        sum += w * r * r / variance_function(fam, mu);
        ++count;
      }
      out.params.phi(j) = std::max(sum / static_cast<double>(count), 1e-8);
    }
  }
  return out;
}

}  // namespace efm
