// Times the OpenMP row kernels against their serial reference
// implementations on a synthetic Poisson instance and checks that both
// produce identical results.

#include <chrono>
#include <cstdio>
#include <string>

#include "efm/initialize.hpp"
#include "efm/laplace_posterior.hpp"
#include "efm/likelihood_eval.hpp"
#include "efm/rng.hpp"
#include "efm/serial_reference.hpp"
#include "efm/sgd_optimizer.hpp"
#include "efm/simulation.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

}  // namespace

int main(int argc, char** argv) {
  using namespace efm;
  Eigen::Index n = 1500;
  Eigen::Index p = 48;
  const Eigen::Index q = 3;
  if (argc > 1) n = std::stol(argv[1]);
  if (argc > 2) p = std::stol(argv[2]);

  const QuasiFamily fam = QuasiFamily::parse("poisson:log");
  Rng rng(42);
  Matrix lambda(n, q);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index k = 0; k < q; ++k) lambda(i, k) = rng.normal();
  EFMParams truth;
  truth.V = Matrix::NullaryExpr(p, q, [&rng](Eigen::Index, Eigen::Index) {
    return 0.4 * rng.normal();
  });
  truth.eta0 = Vector::Constant(p, 0.5);
  truth.phi = Vector::Ones(p);
  Dataset data = Dataset::with_unit_weights(simulate_data(fam, lambda, truth,
      Matrix::Ones(n, p), 7));

  EFMParams theta = svd_initialize(data, fam, q).params;

#ifdef _OPENMP
  std::printf("threads: %d\n", omp_get_max_threads());
#else
  std::printf("threads: 1 (OpenMP disabled)\n");
#endif
  std::printf("instance: n=%ld p=%ld q=%ld poisson:log\n\n", long(n), long(p), long(q));
  std::printf("%-28s %12s %12s %9s %7s\n", "kernel", "serial ms", "parallel ms",
              "speedup", "equal");

  int mismatches = 0;
  auto report = [&](const char* name, double t_ser, double t_par, bool equal) {
    std::printf("%-28s %12.1f %12.1f %8.2fx %7s\n", name, t_ser, t_par,
                t_ser / t_par, equal ? "yes" : "NO");
    if (!equal) ++mismatches;
  };

  {
    auto t0 = std::chrono::steady_clock::now();
    auto ref = serial::posterior_batch(data, theta, fam);
    const double t_ser = ms_since(t0);
    t0 = std::chrono::steady_clock::now();
    auto par = posterior_batch(data, theta, fam);
    const double t_par = ms_since(t0);
    bool equal = ref.size() == par.size();
    for (size_t i = 0; equal && i < ref.size(); ++i) {
      equal = ref[i].post_mean == par[i].post_mean && ref[i].post_cov == par[i].post_cov;
    }
    report("posterior_batch", t_ser, t_par, equal);
  }

  {
    EvalConfig ec{/*R=*/400, /*seed=*/11};
    auto t0 = std::chrono::steady_clock::now();
    auto ref = serial::simulated_marginal_loglik(data, theta, fam, ec);
    const double t_ser = ms_since(t0);
    t0 = std::chrono::steady_clock::now();
    auto par = simulated_marginal_loglik(data, theta, fam, ec);
    const double t_par = ms_since(t0);
    report("simulated_marginal_loglik", t_ser, t_par,
           ref.value == par.value && ref.mc_std == par.mc_std);
  }

  std::vector<Eigen::Index> batch;
  for (Eigen::Index i = 0; i < n; ++i) batch.push_back(i);
  const struct {
    const char* name;
    GradMode mode;
    int S;
  } grads[] = {{"batch_gradient (lapl)", GradMode::lapl, 0},
               {"batch_gradient (ps, S=20)", GradMode::ps, 20},
               {"batch_gradient (sml, S=20)", GradMode::sml, 20}};
  for (const auto& g : grads) {
    auto t0 = std::chrono::steady_clock::now();
    GradientBundle ref = serial::batch_gradient(theta, fam, data, batch, g.mode, g.S, 3, 0);
    const double t_ser = ms_since(t0);
    t0 = std::chrono::steady_clock::now();
    GradientBundle par;
    switch (g.mode) {
      case GradMode::lapl: par = grad_lapl(theta, fam, data, batch); break;
      case GradMode::ps: par = grad_ps(theta, fam, data, batch, g.S, 3, 0); break;
      case GradMode::sml: par = grad_sml(theta, fam, data, batch, g.S, 3, 0); break;
    }
    const double t_par = ms_since(t0);
    report(g.name, t_ser, t_par,
           ref.dV == par.dV && ref.deta0 == par.deta0 && ref.dphi == par.dphi);
  }

  if (mismatches > 0) {
    std::printf("\n%d kernel(s) disagree with the serial reference\n", mismatches);
    return 1;
  }
  std::printf("\nall kernels match the serial reference\n");
  return 0;
}
