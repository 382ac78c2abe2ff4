#ifndef EFM_RNG_HPP
#define EFM_RNG_HPP

#include <array>
#include <cstdint>
#include <initializer_list>

namespace efm {

/// Stable 64-bit mixer (splitmix64 finalizer); used to derive substream seeds.
std::uint64_t mix64(std::uint64_t x);

/// Named randomness sub-streams. Every consumer derives its own stream from
/// the master seed so that, e.g., changing the evaluation cadence never
/// perturbs the optimization path.
enum class Stream : std::uint64_t {
  init = 1,
  batch = 2,
  ps_draws = 3,
  sml_draws = 4,
  eval = 5,
  sim = 6,
  cov_mc = 7,
};

/// Self-contained xoshiro256++ generator with hand-rolled samplers.
/// All draws are reproducible across platforms and thread counts; nothing
/// here depends on the standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform on (0, 1); never returns 0 or 1 exactly.
  double uniform();
  /// Standard normal via Box-Muller (second draw cached).
  double normal();
  /// Gamma(shape, scale) via Marsaglia-Tsang.
  double gamma(double shape, double scale);
  /// Poisson(mean); inversion for small means, transformed rejection above.
  long poisson(double mean);
  /// Binomial(trials, prob) by direct Bernoulli summation (small trial counts).
  long binomial(long trials, double prob);

 private:
  std::array<std::uint64_t, 4> state_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

/// Derive the seed of a named substream, optionally indexed (step, row, ...).
std::uint64_t substream_seed(std::uint64_t master, Stream stream,
                             std::initializer_list<std::uint64_t> tags = {});

/// Convenience: generator positioned on the given substream.
Rng substream(std::uint64_t master, Stream stream,
              std::initializer_list<std::uint64_t> tags = {});

}  // namespace efm

#endif  // EFM_RNG_HPP
