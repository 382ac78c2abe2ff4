#include "efm/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "efm/covariance.hpp"
#include "efm/csv.hpp"
#include "efm/em_optimizer.hpp"
#include "efm/initialize.hpp"
#include "efm/laplace_posterior.hpp"
#include "efm/likelihood_eval.hpp"
#include "efm/model_core.hpp"
#include "efm/rng.hpp"
#include "efm/sgd_optimizer.hpp"
#include "efm/simulation.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace efm {

namespace {

namespace fs = std::filesystem;

std::vector<std::string> load_config_tokens(const std::string& path) {
  auto kv = read_kv(path);
  std::vector<std::string> tokens;
  tokens.reserve(kv.size());
  for (const auto& [k, v] : kv) {
    std::string key = k;
    for (char& c : key) {
      if (c == '_') c = '-';
    }
    tokens.push_back("--" + key + "=" + v);
  }
  return tokens;
}

void add_common(CLI::App* cmd, RunConfig& cfg, bool need_out = true) {
  cmd->option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  cmd->add_option("--config", "flat key=value config file (CLI flags override)")
      ->expected(1);
  cmd->add_option("--seed", cfg.seed, "master seed; determines all outputs");
  cmd->add_option("--threads", cfg.threads, "worker cap (results are thread-invariant)");
  auto* out = cmd->add_option("-o,--out", cfg.out_dir, "output directory");
  if (need_out) out->required();
}

void apply_threads(const RunConfig& cfg) {
#ifdef _OPENMP
  if (cfg.threads > 0) omp_set_num_threads(cfg.threads);
#else
  (void)cfg;
#endif
}

void write_trace_sgd(const std::string& path, const SGDResult& res, bool wall_times) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path);
  std::fputs("step,epoch,wall_ms,grad_norm,sim_nll,mode,S,B\n", f);
  for (const auto& row : res.trace) {
    std::fprintf(f, "%d,%d,%.17g,%.17g,", row.step, row.epoch,
                 wall_times ? row.wall_ms : 0.0, row.grad_norm);
    if (std::isfinite(row.sim_nll)) std::fprintf(f, "%.17g", row.sim_nll);
    std::fprintf(f, ",%s,%d,%d\n", to_string(res.mode).c_str(), res.S, res.B);
  }
  std::fclose(f);
}

void write_trace_em(const std::string& path, const EMResult& res, bool wall_times) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path);
  std::fputs("iter,surrogate_obj,wall_ms\n", f);
  for (const auto& row : res.trace) {
    std::fprintf(f, "%d,%.17g,%.17g\n", row.iter, row.surrogate_obj,
                 wall_times ? row.wall_ms : 0.0);
  }
  std::fclose(f);
}

Dataset load_dataset(const RunConfig& cfg) {
  Matrix x = read_csv_matrix(cfg.data_path);
  if (cfg.weights_path.empty()) {
    return Dataset::with_unit_weights(std::move(x));
  }
  Matrix w = read_csv_matrix(cfg.weights_path);
  return Dataset(std::move(x), std::move(w));
}

int run_fit(const RunConfig& cfg) {
  const QuasiFamily fam = QuasiFamily::parse(cfg.family);
  Dataset data = load_dataset(cfg);
  fs::create_directories(cfg.out_dir);

  std::optional<EFMParams> theta0;
  if (!cfg.init_dir.empty()) theta0 = load_params(cfg.init_dir).params;

  EFMParams fitted;
  Matrix lambda;
  if (cfg.mode == "em") {
    EMConfig emc;
    emc.q = cfg.q;
    emc.m = cfg.m;
    emc.max_iter = cfg.max_iter;
    emc.tol = cfg.tol;
    emc.seed = cfg.seed;
    EMResult res = fit_em(data, fam, emc, theta0);
    write_trace_em(cfg.out_dir + "/trace.csv", res, cfg.wall_times);
    fitted = std::move(res.params);
    lambda = std::move(res.lambda);
  } else {
    SGDConfig sgc;
    sgc.q = cfg.q;
    sgc.B = cfg.B;
    sgc.S = cfg.S;
    sgc.alpha = cfg.alpha;
    sgc.epochs = cfg.epochs;
    sgc.mode = grad_mode_from_string(cfg.mode);
    sgc.seed = cfg.seed;
    sgc.eval_every_epochs = cfg.eval_every;
    sgc.eval_R = cfg.eval_R;
    SGDResult res = fit_sgd(data, fam, sgc, theta0);
    write_trace_sgd(cfg.out_dir + "/trace.csv", res, cfg.wall_times);
    fitted = std::move(res.params);
    // Posterior means at the fitted parameters.
    auto posts = posterior_batch(data, fitted, fam);
    lambda.resize(data.n(), fitted.q());
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      lambda.row(i) = posts[static_cast<size_t>(i)].post_mean.transpose();
    }
    if (res.diverged) {
      save_params(cfg.out_dir, fitted, fam, cfg.seed);
      throw std::runtime_error("optimization diverged; trace written to " +
                               cfg.out_dir + "/trace.csv");
    }
  }

  save_params(cfg.out_dir, fitted, fam, cfg.seed);
  write_csv_matrix(cfg.out_dir + "/lambda_post_mean.csv", lambda);
  return 0;
}

int run_simulate(const RunConfig& cfg) {
  const QuasiFamily fam = QuasiFamily::parse(cfg.family);
  fs::create_directories(cfg.out_dir);

  Matrix x, w, lambda;
  EFMParams theta;
  if (cfg.scenario == "fan") {
    FanScenario sc = fan_scenario(cfg.n, cfg.p, fam, cfg.seed);
    x = std::move(sc.data.X);
    w = std::move(sc.data.W);
    lambda = std::move(sc.lambda);
    theta = std::move(sc.theta);
  } else if (cfg.scenario == "generic") {
    Rng rng = substream(cfg.seed, Stream::sim, {0x6e6eULL});
    lambda.resize(cfg.n, cfg.q);
    for (Eigen::Index i = 0; i < cfg.n; ++i)
      for (Eigen::Index k = 0; k < cfg.q; ++k) lambda(i, k) = rng.normal();
    theta.V.resize(cfg.p, cfg.q);
    for (Eigen::Index j = 0; j < cfg.p; ++j)
      for (Eigen::Index k = 0; k < cfg.q; ++k) theta.V(j, k) = cfg.v_scale * rng.normal();
    theta.eta0 = Vector::Constant(cfg.p, cfg.eta0_const);
    theta.phi = Vector::Constant(cfg.p, cfg.phi_const);
    w = Matrix::Ones(cfg.n, cfg.p);
    if (cfg.missing_frac > 0.0) {
      for (Eigen::Index i = 0; i < cfg.n; ++i)
        for (Eigen::Index j = 0; j < cfg.p; ++j)
          if (rng.uniform() < cfg.missing_frac) w(i, j) = 0.0;
    }
    x = simulate_data(fam, lambda, theta, w,
                      substream_seed(cfg.seed, Stream::sim, {0xda7aULL}));
  } else {
    throw std::invalid_argument("unknown scenario: \"" + cfg.scenario + "\"");
  }

  write_csv_matrix(cfg.out_dir + "/X.csv", x);
  write_csv_matrix(cfg.out_dir + "/W.csv", w);
  write_csv_matrix(cfg.out_dir + "/lambda.csv", lambda);
  save_params(cfg.out_dir, theta, fam, cfg.seed);
  return 0;
}

int run_covariance(const RunConfig& cfg) {
  LoadedParams loaded = load_params(cfg.params_dir);
  fs::create_directories(cfg.out_dir);

  CovEstimate model = model_covariance(loaded.params, loaded.fam, cfg.S_mc, cfg.seed);
  write_csv_matrix(cfg.out_dir + "/sigma.csv", model.sigma);

  std::optional<CovEstimate> sample;
  if (!cfg.data_path.empty()) {
    sample = sample_covariance(read_csv_matrix(cfg.data_path));
    write_csv_matrix(cfg.out_dir + "/sigma_sample.csv", sample->sigma);
  }

  if (!cfg.truth_sigma_path.empty()) {
    CovEstimate truth;
    truth.sigma = read_csv_matrix(cfg.truth_sigma_path);
    auto write_errors = [&](const std::string& name, const CovErrors& e) {
      std::FILE* f = std::fopen((cfg.out_dir + "/" + name).c_str(), "w");
      if (!f) throw std::runtime_error("cannot write " + name);
      std::fputs("frob,entropy,normalized\n", f);
      std::fprintf(f, "%.17g,%.17g,%.17g\n", e.frob, e.entropy, e.normalized);
      std::fclose(f);
    };
    write_errors("errors.csv", cov_errors(model, truth));
    if (sample) write_errors("errors_sample.csv", cov_errors(*sample, truth));
  }
  return 0;
}

int run_eval(const RunConfig& cfg) {
  LoadedParams loaded = load_params(cfg.params_dir);
  Dataset data = load_dataset(cfg);
  fs::create_directories(cfg.out_dir);
  EvalConfig ec;
  ec.R = cfg.R;
  ec.seed = substream_seed(cfg.seed, Stream::eval);
  SimLoglik s = simulated_marginal_loglik(data, loaded.params, loaded.fam, ec);
  std::FILE* f = std::fopen((cfg.out_dir + "/eval.csv").c_str(), "w");
  if (!f) throw std::runtime_error("cannot write eval.csv");
  std::fputs("sim_loglik,mc_std,R\n", f);
  std::fprintf(f, "%.17g,%.17g,%d\n", s.value, s.mc_std, cfg.R);
  std::fclose(f);
  std::printf("sim_loglik=%.6f mc_std=%.6f R=%d\n", s.value, s.mc_std, cfg.R);
  return 0;
}

int run_bench(const RunConfig& cfg) {
  const QuasiFamily fam = QuasiFamily::parse(cfg.family);
  Dataset data = load_dataset(cfg);
  fs::create_directories(cfg.out_dir);

  // One shared starting point and seed for all modes.
  EFMParams theta0 = cfg.init_dir.empty() ? svd_initialize(data, fam, cfg.q).params
                                          : load_params(cfg.init_dir).params;

  std::FILE* summary = std::fopen((cfg.out_dir + "/bench_summary.csv").c_str(), "w");
  if (!summary) throw std::runtime_error("cannot write bench_summary.csv");
  std::fputs("mode,S,final_sim_nll,final_mc_std,diverged\n", summary);

  const std::vector<std::pair<GradMode, int>> runs = {
      {GradMode::ps, cfg.S},
      {GradMode::lapl, cfg.S},
      {GradMode::sml, cfg.S_sml > 0 ? cfg.S_sml : cfg.S},
  };
  for (const auto& [mode, draws] : runs) {
    SGDConfig sgc;
    sgc.q = cfg.q;
    sgc.B = cfg.B;
    sgc.S = draws;
    sgc.alpha = cfg.alpha;
    sgc.epochs = cfg.epochs;
    sgc.mode = mode;
    sgc.seed = cfg.seed;
    sgc.eval_every_epochs = cfg.eval_every;
    sgc.eval_R = cfg.eval_R;
    SGDResult res = fit_sgd(data, fam, sgc, theta0);
    write_trace_sgd(cfg.out_dir + "/trace_" + to_string(mode) + ".csv", res,
                    cfg.wall_times);
    double final_nll = std::numeric_limits<double>::quiet_NaN();
    double final_std = std::numeric_limits<double>::quiet_NaN();
    for (const auto& row : res.trace) {
      if (std::isfinite(row.sim_nll)) {
        final_nll = row.sim_nll;
        final_std = row.sim_nll_std;
      }
    }
    std::fprintf(summary, "%s,%d,%.17g,%.17g,%d\n", to_string(mode).c_str(), draws,
                 final_nll, final_std, res.diverged ? 1 : 0);
  }
  std::fclose(summary);
  return 0;
}

int run_aggregate(const RunConfig& cfg) {
  auto edges = read_edge_list(cfg.edges_path);
  if (edges.empty()) throw std::invalid_argument("edge list is empty");
  int max_id = 0;
  int max_layer = 0;
  for (const auto& [i, j, l] : edges) {
    if (i < 0 || j < 0 || l < 0) {
      throw std::invalid_argument("edge list entries must be nonnegative");
    }
    max_id = std::max({max_id, i, j});
    max_layer = std::max(max_layer, l);
  }
  const Eigen::Index n = cfg.n_vertices > 0 ? cfg.n_vertices : max_id + 1;
  MultiplexStack stack;
  stack.layers.assign(static_cast<size_t>(max_layer) + 1, Matrix::Zero(n, n));
  for (const auto& [i, j, l] : edges) {
    if (i >= n || j >= n) throw std::invalid_argument("vertex id exceeds --n");
    if (i == j) continue;
    stack.layers[static_cast<size_t>(l)](i, j) = 1.0;
    stack.layers[static_cast<size_t>(l)](j, i) = 1.0;
  }
  AggregatedNetwork agg = multiplex_weights(stack);
  fs::create_directories(cfg.out_dir);
  write_csv_matrix(cfg.out_dir + "/A.csv", agg.A);
  write_csv_matrix(cfg.out_dir + "/W.csv", agg.W);
  return 0;
}

}  // namespace

RunConfig parse_config(const std::vector<std::string>& args) {
  RunConfig cfg;
  CLI::App app{"exponential-family factor models: fitting, simulation, benchmarks"};
  app.require_subcommand(1);

  auto* fit = app.add_subcommand("fit", "fit a factor model to a data matrix");
  add_common(fit, cfg);
  fit->add_option("-i,--data", cfg.data_path, "X matrix CSV")->required();
  fit->add_option("-w,--weights", cfg.weights_path, "entry weight CSV (default all 1)");
  fit->add_option("--family", cfg.family, "e.g. poisson:log, negbin(0.1):log")
      ->required();
  fit->add_option("--q", cfg.q, "factorization rank")->required();
  auto* mode_opt =
      fit->add_option("--mode", cfg.mode, "em | ps | lapl | sml")->required();
  fit->add_option("--init", cfg.init_dir, "parameter directory for theta0");
  auto* m_opt = fit->add_option("--m", cfg.m, "Gauss-Hermite nodes per axis (em)");
  fit->add_option("--max-iter", cfg.max_iter, "EM iteration cap");
  fit->add_option("--tol", cfg.tol, "EM surrogate tolerance");
  auto* b_opt = fit->add_option("--B", cfg.B, "batch size (sgd)");
  auto* s_opt = fit->add_option("--S", cfg.S, "draws per row (ps/sml)");
  auto* a_opt = fit->add_option("--alpha", cfg.alpha, "base learning rate (sgd)");
  auto* e_opt = fit->add_option("--epochs", cfg.epochs, "SGD epochs");
  fit->add_option("--eval-every", cfg.eval_every, "trace evaluation cadence (epochs)");
  fit->add_option("--eval-R", cfg.eval_R, "draws per evaluation");
  fit->add_flag("--wall-times", cfg.wall_times,
                "write real wall times into traces (breaks byte reproducibility)");
  fit->callback([&cfg, mode_opt, m_opt, b_opt, s_opt, a_opt, e_opt]() {
    (void)mode_opt;
    if (cfg.mode == "em") {
      for (const auto* opt : {s_opt, b_opt, a_opt, e_opt}) {
        if (opt->count() > 0) {
          throw CLI::ValidationError("--mode em is incompatible with " +
                                     opt->get_name());
        }
      }
    } else {
      if (m_opt->count() > 0) {
        throw CLI::ValidationError("--m applies to --mode em only");
      }
    }
  });

  auto* sim = app.add_subcommand("simulate", "draw a dataset from the model");
  add_common(sim, cfg);
  sim->add_option("--scenario", cfg.scenario, "generic | fan");
  sim->add_option("--family", cfg.family)->required();
  sim->add_option("--n", cfg.n, "rows")->required();
  sim->add_option("--p", cfg.p, "columns")->required();
  sim->add_option("--q", cfg.q, "rank (generic scenario)");
  sim->add_option("--v-scale", cfg.v_scale, "loading scale (generic)");
  sim->add_option("--eta0", cfg.eta0_const, "constant latent center (generic)");
  sim->add_option("--phi", cfg.phi_const, "constant dispersion (generic)");
  sim->add_option("--missing-frac", cfg.missing_frac, "fraction of zero weights");

  auto* cov = app.add_subcommand("covariance", "model-implied covariance + losses");
  add_common(cov, cfg);
  cov->add_option("--params", cfg.params_dir, "fitted parameter directory")->required();
  cov->add_option("--S-mc", cfg.S_mc, "Monte Carlo draws");
  cov->add_option("-i,--data", cfg.data_path, "X matrix for the sample covariance");
  cov->add_option("--truth", cfg.truth_sigma_path, "true covariance CSV for losses");

  auto* ev = app.add_subcommand("eval", "simulated marginal log-likelihood");
  add_common(ev, cfg);
  ev->add_option("--params", cfg.params_dir)->required();
  ev->add_option("-i,--data", cfg.data_path)->required();
  ev->add_option("-w,--weights", cfg.weights_path);
  ev->add_option("--R", cfg.R, "draws per row");

  auto* bench = app.add_subcommand(
      "bench", "run ps/lapl/sml from one shared start and write aligned traces");
  add_common(bench, cfg);
  bench->add_option("-i,--data", cfg.data_path)->required();
  bench->add_option("-w,--weights", cfg.weights_path);
  bench->add_option("--family", cfg.family)->required();
  bench->add_option("--q", cfg.q)->required();
  bench->add_option("--init", cfg.init_dir);
  bench->add_option("--B", cfg.B);
  bench->add_option("--S", cfg.S, "draws for ps (and sml unless --S-sml)");
  bench->add_option("--S-sml", cfg.S_sml, "draws for sml");
  bench->add_option("--alpha", cfg.alpha);
  bench->add_option("--epochs", cfg.epochs);
  bench->add_option("--eval-every", cfg.eval_every);
  bench->add_option("--eval-R", cfg.eval_R);
  bench->add_flag("--wall-times", cfg.wall_times);

  auto* agg = app.add_subcommand("aggregate", "multiplex layers -> (A, W)");
  add_common(agg, cfg);
  agg->add_option("--edges", cfg.edges_path, "edge list CSV (i, j, layer)")->required();
  agg->add_option("--n", cfg.n_vertices, "vertex count (default: max id + 1)");

  // Inject config-file tokens (if any) ahead of the CLI tokens so explicit
  // flags take precedence under TakeLast.
  std::vector<std::string> full = args;
  for (size_t k = 0; k + 1 < full.size(); ++k) {
    if (full[k] == "--config") {
      auto tokens = load_config_tokens(full[k + 1]);
      full.insert(full.begin() + 1, tokens.begin(), tokens.end());
      break;
    }
    if (full[k].rfind("--config=", 0) == 0) {
      auto tokens = load_config_tokens(full[k].substr(9));
      full.insert(full.begin() + 1, tokens.begin(), tokens.end());
      break;
    }
  }

  // CLI11 parses reversed argv.
  std::vector<std::string> reversed(full.rbegin(), full.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    throw std::invalid_argument(e.what());
  }
  cfg.command = app.get_subcommands().front()->get_name();
  return cfg;
}

int run(const RunConfig& cfg) {
  apply_threads(cfg);
  if (cfg.command == "fit") return run_fit(cfg);
  if (cfg.command == "simulate") return run_simulate(cfg);
  if (cfg.command == "covariance") return run_covariance(cfg);
  if (cfg.command == "eval") return run_eval(cfg);
  if (cfg.command == "bench") return run_bench(cfg);
  if (cfg.command == "aggregate") return run_aggregate(cfg);
  throw std::invalid_argument("unknown command: \"" + cfg.command + "\"");
}

int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    RunConfig cfg = parse_config(args);
    return run(cfg);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "EFM_ERROR: %s\n", e.what());
    return 1;
  }
}

}  // namespace efm
