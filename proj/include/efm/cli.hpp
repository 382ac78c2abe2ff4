#ifndef EFM_CLI_HPP
#define EFM_CLI_HPP

#include <cstdint>
#include <string>
#include <vector>

namespace efm {

/// Parsed command-line/config-file state for one invocation.
struct RunConfig {
  std::string command;  // fit | simulate | covariance | eval | bench | aggregate

  // shared
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = library default
  std::string out_dir;

  // data inputs
  std::string data_path;
  std::string weights_path;

  // model
  std::string family = "gaussian:identity";
  long q = 2;
  std::string mode = "ps";  // em | ps | lapl | sml
  std::string init_dir;

  // EM
  int m = 3;
  int max_iter = 50;
  double tol = 1e-6;

  // SGD
  int B = 128;
  int S = 50;
  int S_sml = -1;  // bench: SML draw count; -1 means "same as S"
  double alpha = 0.5;
  int epochs = 30;
  int eval_every = 1;
  int eval_R = 1500;
  bool wall_times = false;  // write real wall-clock times into trace CSVs

  // simulate
  std::string scenario = "generic";  // generic | fan
  long n = 200;
  long p = 10;
  double v_scale = 0.5;
  double eta0_const = 0.0;
  double phi_const = 1.0;
  double missing_frac = 0.0;

  // covariance / eval
  std::string params_dir;
  long S_mc = 20000;
  std::string truth_sigma_path;
  int R = 1500;

  // aggregate
  std::string edges_path;
  long n_vertices = 0;  // 0 = infer from edge list
};

/// Parse argv (without the program name). A `--config file` option loads
/// flat key=value pairs as defaults; explicit CLI flags override them and
/// unknown keys are rejected. Throws std::invalid_argument on usage errors.
RunConfig parse_config(const std::vector<std::string>& args);

/// Execute one parsed command; writes artifacts under cfg.out_dir and
/// returns the process exit status (0 on success). Failures throw.
int run(const RunConfig& cfg);

/// Entry point used by the binary: parse + run with error reporting.
int cli_main(int argc, char** argv);

}  // namespace efm

#endif  // EFM_CLI_HPP
