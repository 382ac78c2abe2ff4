#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "efm/csv.hpp"
#include "efm/model_core.hpp"
#include "efm/rng.hpp"
#include "support/oracles.hpp"

using namespace efm;

namespace {

EFMParams make_params(Rng& rng, Eigen::Index p, Eigen::Index q, double scale = 1.0) {
  EFMParams params;
  params.V = oracles::random_matrix(rng, p, q, scale);
  params.eta0 = oracles::random_matrix(rng, p, 1, 0.5).col(0);
  params.phi = Vector::Ones(p);
  return params;
}

}  // namespace

TEST_SUITE_BEGIN("model_core");

TEST_CASE("dataset validation") {
  Matrix x = Matrix::Zero(3, 2);
  CHECK_THROWS(Dataset(x, Matrix::Zero(2, 2)));                 // shape
  CHECK_THROWS(Dataset(x, Matrix::Constant(3, 2, -1.0)));       // negative weight
  Dataset ok = Dataset::with_unit_weights(x);
  CHECK_NOTHROW(ok.validate(2));

  // A row with all weights zero fails the per-row observed count.
  Matrix w = Matrix::Ones(3, 2);
  w.row(1).setZero();
  Dataset sparse(x, w);
  CHECK_THROWS(sparse.validate(1));
}

TEST_CASE("linear predictor forms") {
  Rng rng(1);
  SUBCASE("zero factors reproduce the center") {
    EFMParams params = make_params(rng, 4, 2);
    Matrix lambda = Matrix::Zero(3, 2);
    Matrix eta = linear_predictor(lambda, params);
    for (int i = 0; i < 3; ++i) {
      CHECK((eta.row(i).transpose() - params.eta0).norm() == doctest::Approx(0.0));
    }
  }
  SUBCASE("scalar case") {
    EFMParams params;
    params.V = Matrix::Constant(1, 1, 3.0);
    params.eta0 = Vector::Zero(1);
    params.phi = Vector::Ones(1);
    Matrix lambda(2, 1);
    lambda << 1.0, 2.0;
    Matrix eta = linear_predictor(lambda, params);
    CHECK(eta(0, 0) == doctest::Approx(3.0));
    CHECK(eta(1, 0) == doctest::Approx(6.0));
  }
  SUBCASE("matches the triple loop oracle") {
    EFMParams params = make_params(rng, 3, 2);
    Matrix lambda = oracles::random_matrix(rng, 4, 2);
    Matrix eta = linear_predictor(lambda, params);
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 3; ++j) {
        double want = params.eta0(j);
        for (int k = 0; k < 2; ++k) want += lambda(i, k) * params.V(j, k);
        CHECK(eta(i, j) == doctest::Approx(want).epsilon(1e-12));
      }
    }
  }
  SUBCASE("affine in lambda") {
    EFMParams params = make_params(rng, 5, 3);
    Matrix l1 = oracles::random_matrix(rng, 4, 3);
    Matrix l2 = oracles::random_matrix(rng, 4, 3);
    Matrix zero = Matrix::Zero(4, 3);
    Matrix gap = linear_predictor(l1 + l2, params) - linear_predictor(l1, params) -
                 linear_predictor(l2, params) + linear_predictor(zero, params);
    CHECK(gap.cwiseAbs().maxCoeff() < 1e-10);
  }
  SUBCASE("dimension mismatch") {
    EFMParams params = make_params(rng, 4, 2);
    CHECK_THROWS(linear_predictor(Matrix::Zero(3, 3), params));
  }
}

TEST_CASE("complete loglik pinned cases") {
  const QuasiFamily gauss = QuasiFamily::parse("gaussian");
  SUBCASE("all-excluded row leaves only the prior term") {
    Matrix x = Matrix::Zero(1, 3);
    Matrix w = Matrix::Zero(1, 3);
    Dataset data(x, w);
    EFMParams params;
    params.V = Matrix::Zero(3, 2);
    params.eta0 = Vector::Zero(3);
    params.phi = Vector::Ones(3);
    Matrix lambda = Matrix::Zero(1, 2);
    CHECK(complete_loglik(data, lambda, params, gauss) ==
          doctest::Approx(-std::log(2.0 * M_PI)));  // q = 2
  }
  SUBCASE("gaussian zero-residual rows") {
    Rng rng(7);
    const Eigen::Index n = 5, p = 4, q = 2;
    Matrix x = oracles::random_matrix(rng, n, p);
    for (Eigen::Index i = 1; i < n; ++i) x.row(i) = x.row(0);
    Dataset data = Dataset::with_unit_weights(x);
    EFMParams params;
    params.V = Matrix::Zero(p, q);
    params.eta0 = x.row(0).transpose();
    params.phi = Vector::Ones(p);
    Matrix lambda = Matrix::Zero(n, q);
    const double got = complete_loglik(data, lambda, params, gauss);
    const double want = n * (-0.5 * q * std::log(2.0 * M_PI)) +
                        n * p * (-0.5 * std::log(2.0 * M_PI));
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }
  SUBCASE("poisson 2x2 matches the scalar oracle") {
    const QuasiFamily pois = QuasiFamily::parse("poisson");
    Matrix x(2, 2);
    x << 1.0, 3.0, 0.0, 2.0;
    Dataset data = Dataset::with_unit_weights(x);
    Rng rng(9);
    EFMParams params = make_params(rng, 2, 1, 0.4);
    Matrix lambda = oracles::random_matrix(rng, 2, 1);
    double want = 0.0;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        const double mu = std::exp(params.V(j, 0) * lambda(i, 0) + params.eta0(j));
        want += quasi_logdensity(pois, x(i, j), mu, 1.0, 1.0);
      }
      want += -0.5 * std::log(2.0 * M_PI) - 0.5 * lambda.row(i).squaredNorm();
    }
    CHECK(complete_loglik(data, lambda, params, pois) ==
          doctest::Approx(want).epsilon(1e-12));
  }
}

TEST_CASE("identify canonicalizes and reconstructs") {
  Rng rng(11);
  const Eigen::Index n = 20, p = 8, q = 3;
  EFMParams params = make_params(rng, p, q);
  Matrix lambda = oracles::random_matrix(rng, n, q);
  Identified id = identify(lambda, params);

  const Matrix prod_before = lambda * params.V.transpose();
  const Matrix prod_after = id.lambda * id.params.V.transpose();
  CHECK((prod_after - prod_before).norm() / prod_before.norm() < 1e-10);
  CHECK(id.params.canonical);

  Matrix vtv = id.params.V.transpose() * id.params.V;
  for (Eigen::Index a = 0; a < q; ++a) {
    for (Eigen::Index b = 0; b < q; ++b) {
      if (a != b) CHECK(std::fabs(vtv(a, b)) < 1e-8 * vtv(0, 0));
    }
    CHECK(vtv(a, a) > 0.0);
    if (a > 0) CHECK(vtv(a, a) <= vtv(a - 1, a - 1) * (1.0 + 1e-12));
  }
}

TEST_CASE("identify is idempotent") {
  Rng rng(13);
  EFMParams params = make_params(rng, 6, 2);
  Matrix lambda = oracles::random_matrix(rng, 15, 2);
  Identified once = identify(lambda, params);
  Identified twice = identify(once.lambda, once.params);
  CHECK((twice.lambda - once.lambda).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((twice.params.V - once.params.V).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("identify is invariant to orthogonal reparameterization") {
  Rng rng(17);
  const Eigen::Index n = 12, p = 7, q = 3;
  EFMParams params = make_params(rng, p, q);
  Matrix lambda = oracles::random_matrix(rng, n, q);
  Matrix t = oracles::random_orthogonal(rng, q);

  EFMParams rotated = params;
  rotated.V = params.V * t.transpose();
  Identified a = identify(lambda, params);
  Identified b = identify(lambda * t.transpose(), rotated);
  CHECK((a.params.V - b.params.V).cwiseAbs().maxCoeff() < 1e-9);
  CHECK((a.lambda - b.lambda).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("identify reports rank deficiency") {
  Rng rng(19);
  EFMParams params = make_params(rng, 6, 2);
  params.V.col(1).setZero();
  Matrix lambda = oracles::random_matrix(rng, 10, 2);
  lambda.col(1).setZero();
  CHECK_THROWS_AS(identify(lambda, params), std::runtime_error);
}

TEST_CASE("complete loglik invariant under orthogonal rotation") {
  Rng rng(23);
  const QuasiFamily pois = QuasiFamily::parse("poisson");
  const Eigen::Index n = 6, p = 5, q = 2;
  EFMParams params = make_params(rng, p, q, 0.4);
  Matrix lambda = oracles::random_matrix(rng, n, q);
  Matrix x(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      x(i, j) = static_cast<double>(rng.poisson(1.0 + rng.uniform()));
  Dataset data = Dataset::with_unit_weights(x);

  Matrix t = oracles::random_orthogonal(rng, q);
  EFMParams rotated = params;
  rotated.V = params.V * t.transpose();
  const double base = complete_loglik(data, lambda, params, pois);
  const double rot = complete_loglik(data, lambda * t.transpose(), rotated, pois);
  CHECK(rot == doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("parameter round trip through CSV") {
  namespace fs = std::filesystem;
  Rng rng(29);
  EFMParams params = make_params(rng, 5, 2);
  params.phi = (params.phi.array() + 0.5).matrix();
  const QuasiFamily fam = QuasiFamily::parse("negbin(0.25):log");
  const std::string dir = (fs::temp_directory_path() / "efm_params_rt").string();
  save_params(dir, params, fam, 99);
  LoadedParams loaded = load_params(dir);
  CHECK((loaded.params.V - params.V).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.params.eta0 - params.eta0).cwiseAbs().maxCoeff() == 0.0);
  CHECK((loaded.params.phi - params.phi).cwiseAbs().maxCoeff() == 0.0);
  CHECK(loaded.fam.family == FamilyKind::negative_binomial);
  CHECK(loaded.fam.shape == doctest::Approx(0.25));
  CHECK(loaded.seed == 99);
  fs::remove_all(dir);
}

TEST_CASE("csv reader handles headers and rejects garbage") {
  namespace fs = std::filesystem;
  const std::string path = (fs::temp_directory_path() / "efm_csv_test.csv").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("a,b\n1.5,2\n3,4e-2\n", f);
    std::fclose(f);
  }
  Matrix m = read_csv_matrix(path);
  CHECK(m.rows() == 2);
  CHECK(m(1, 1) == doctest::Approx(0.04));
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("1,2\nx,4\n", f);
    std::fclose(f);
  }
  CHECK_THROWS(read_csv_matrix(path));
  fs::remove(path);
}

TEST_SUITE_END();
