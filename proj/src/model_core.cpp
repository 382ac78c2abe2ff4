#include "efm/model_core.hpp"

#include <cmath>
#include <filesystem>
#include <stdexcept>

#include "efm/csv.hpp"

namespace efm {

void EFMParams::validate() const {
  if (eta0.size() != V.rows() || phi.size() != V.rows()) {
    throw std::invalid_argument("parameter dimensions disagree");
  }
  for (Eigen::Index j = 0; j < phi.size(); ++j) {
    if (!(phi(j) > 0.0) || !std::isfinite(phi(j))) {
      throw std::invalid_argument("phi must be positive and finite");
    }
  }
  if (!V.allFinite() || !eta0.allFinite()) {
    throw std::invalid_argument("non-finite parameter entries");
  }
}

Dataset::Dataset(Matrix x, Matrix w) : X(std::move(x)), W(std::move(w)) {
  if (X.rows() != W.rows() || X.cols() != W.cols()) {
    throw std::invalid_argument("X and W dimensions disagree");
  }
  if ((W.array() < 0.0).any()) {
    throw std::invalid_argument("weights must be >= 0");
  }
  if (!X.allFinite() || !W.allFinite()) {
    throw std::invalid_argument("non-finite data entries");
  }
}

Dataset Dataset::with_unit_weights(Matrix x) {
  Matrix w = Matrix::Ones(x.rows(), x.cols());
  return Dataset(std::move(x), std::move(w));
}

void Dataset::validate(Eigen::Index q) const {
  for (Eigen::Index i = 0; i < n(); ++i) {
    if ((W.row(i).array() > 0.0).count() < q) {
      throw std::invalid_argument("row " + std::to_string(i) +
                                  " has fewer than q observed entries");
    }
  }
  for (Eigen::Index j = 0; j < p(); ++j) {
    if ((W.col(j).array() > 0.0).count() < q) {
      throw std::invalid_argument("column " + std::to_string(j) +
                                  " has fewer than q observed entries");
    }
  }
}

Matrix linear_predictor(const Matrix& lambda, const EFMParams& params) {
  if (lambda.cols() != params.q()) {
    throw std::invalid_argument("latent dimension disagrees with loadings");
  }
  return (lambda * params.V.transpose()).rowwise() + params.eta0.transpose();
}

double row_quasi_loglik(const QuasiFamily& fam, const Eigen::Ref<const Vector>& x_row,
                        const Eigen::Ref<const Vector>& w_row, const EFMParams& params,
                        const Eigen::Ref<const Vector>& lambda_row) {
  double total = 0.0;
  for (Eigen::Index j = 0; j < params.p(); ++j) {
    if (w_row(j) == 0.0) continue;
    const double eta = params.V.row(j).dot(lambda_row) + params.eta0(j);
    const double mu = mean_from_eta(fam, eta);
    total += quasi_logdensity(fam, x_row(j), mu, params.phi(j), w_row(j));
  }
  return total;
}

double complete_loglik(const Dataset& data, const Matrix& lambda,
                       const EFMParams& params, const QuasiFamily& fam) {
  if (lambda.rows() != data.n()) {
    throw std::invalid_argument("latent row count disagrees with data");
  }
  const double q = static_cast<double>(params.q());
  double total = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    total += row_quasi_loglik(fam, data.X.row(i), data.W.row(i), params, lambda.row(i));
    total += -0.5 * q * std::log(2.0 * M_PI) - 0.5 * lambda.row(i).squaredNorm();
  }
  return total;
}

namespace {

// Flip column signs so the largest-magnitude entry of each column of `u`
// (the loading directions) is positive; `l` columns flip alongside.
void fix_column_signs(Matrix& l, Matrix& u) {
  for (Eigen::Index k = 0; k < u.cols(); ++k) {
    Eigen::Index arg = 0;
    u.col(k).cwiseAbs().maxCoeff(&arg);
    if (u(arg, k) < 0.0) {
      u.col(k) = -u.col(k);
      l.col(k) = -l.col(k);
    }
  }
}

}  // namespace

Identified identify(const Matrix& lambda, const EFMParams& params) {
  if (lambda.cols() != params.q()) {
    throw std::invalid_argument("latent dimension disagrees with loadings");
  }
  const Eigen::Index q = params.q();
  Matrix product = lambda * params.V.transpose();
  Eigen::BDCSVD<Matrix> svd(product, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  if (sv.size() < q || !(sv(q - 1) > 1e-10 * sv(0))) {
    const double gap = sv.size() >= q && sv(0) > 0.0 ? sv(q - 1) / sv(0) : 0.0;
    throw std::runtime_error(
        "factor product has numerical rank below q (singular value ratio " +
        std::to_string(gap) + ")");
  }
  Matrix lstar = svd.matrixU().leftCols(q);
  Matrix u = svd.matrixV().leftCols(q);
  fix_column_signs(lstar, u);

  Identified out;
  out.lambda = std::move(lstar);
  out.params = params;
  out.params.V = u * sv.head(q).asDiagonal();
  out.params.canonical = true;
  return out;
}

EFMParams identify_loadings(const EFMParams& params, Matrix* rotation) {
  Eigen::BDCSVD<Matrix> svd(params.V, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vector& sv = svd.singularValues();
  const Eigen::Index q = params.q();
  if (!(sv(q - 1) > 1e-10 * sv(0))) {
    throw std::runtime_error("loadings have numerical rank below q");
  }
  Matrix u = svd.matrixU().leftCols(q);
  Matrix w = svd.matrixV().leftCols(q);  // the rotation: V w = u D
  fix_column_signs(w, u);
  EFMParams out = params;
  out.V = u * sv.head(q).asDiagonal();
  out.canonical = true;
  if (rotation) *rotation = std::move(w);
  return out;
}

void save_params(const std::string& dir, const EFMParams& params,
                 const QuasiFamily& fam, std::uint64_t seed) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  write_csv_matrix(dir + "/V.csv", params.V);
  write_csv_matrix(dir + "/eta0.csv", params.eta0);
  write_csv_matrix(dir + "/phi.csv", params.phi);
  std::string link;
  switch (fam.link) {
    case LinkKind::identity: link = "identity"; break;
    case LinkKind::log_link: link = "log"; break;
    case LinkKind::logit: link = "logit"; break;
  }
  write_kv(dir + "/meta.txt", {
                                  {"family", fam.to_string()},
                                  {"link", link},
                                  {"q", std::to_string(params.q())},
                                  {"seed", std::to_string(seed)},
                              });
}

LoadedParams load_params(const std::string& dir) {
  LoadedParams out;
  out.params.V = read_csv_matrix(dir + "/V.csv");
  out.params.eta0 = read_csv_matrix(dir + "/eta0.csv").col(0);
  out.params.phi = read_csv_matrix(dir + "/phi.csv").col(0);
  auto kv = read_kv(dir + "/meta.txt");
  out.fam = QuasiFamily::parse(kv.at("family"));
  if (auto it = kv.find("seed"); it != kv.end()) {
    out.seed = std::stoull(it->second);
  }
  out.params.validate();
  if (std::stol(kv.at("q")) != out.params.q()) {
    throw std::runtime_error("meta q disagrees with V.csv in " + dir);
  }
  return out;
}

}  // namespace efm
