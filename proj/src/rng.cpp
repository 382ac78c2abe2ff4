#include "efm/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace efm {

std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) {
  // Expand the seed through splitmix64; guarantees a nonzero state.
  std::uint64_t s = seed;
  for (auto& word : state_) {
    s = mix64(s + 0x632be59bd9b4e019ULL);
    word = s;
  }
  state_[0] |= 1ULL;
}

namespace {
inline std::uint64_t rotl(std::uint64_t x, int k) {
  return (x << k) | (x >> (64 - k));
}
}  // namespace

std::uint64_t Rng::next_u64() {
  const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
  const std::uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl(state_[3], 45);
  return result;
}

double Rng::uniform() {
  // 53 random bits into (0,1); the +0.5 offset keeps endpoints out.
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  const double u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

double Rng::gamma(double shape, double scale) {
  if (shape <= 0.0 || scale <= 0.0) {
    throw std::invalid_argument("Rng::gamma requires positive shape and scale");
  }
  if (shape < 1.0) {
    // Boost to shape+1 and correct with a uniform power.
    const double u = uniform();
    return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x;
    double v;
    do {
      x = normal();
      v = 1.0 + c * x;
    } while (v <= 0.0);
    v = v * v * v;
    const double u = uniform();
    if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
      return d * v * scale;
    }
  }
}

long Rng::poisson(double mean) {
  if (mean < 0.0 || !std::isfinite(mean)) {
    throw std::invalid_argument("Rng::poisson requires a finite mean >= 0");
  }
  if (mean == 0.0) return 0;
  if (mean < 10.0) {
    // Sequential inversion.
    double p = std::exp(-mean);
    double cdf = p;
    const double u = uniform();
    long k = 0;
    while (u > cdf) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
      if (k > 10 * mean + 200) break;
    }
    return k;
  }
  // Transformed rejection with squeeze (Hormann's PTRS), valid for mean >= 10.
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mean = std::log(mean);
  for (;;) {
    const double u = uniform() - 0.5;
    const double v = uniform();
    const double us = 0.5 - std::fabs(u);
    const long k = static_cast<long>(std::floor((2.0 * a / us + b) * u + mean + 0.43));
    if (us >= 0.07 && v <= v_r) return k;
    if (k < 0 || (us < 0.013 && v > us)) continue;
    if (std::log(v) + std::log(inv_alpha) - std::log(a / (us * us) + b) <=
        k * log_mean - mean - std::lgamma(static_cast<double>(k) + 1.0)) {
      return k;
    }
  }
}

long Rng::binomial(long trials, double prob) {
  if (trials < 0 || prob < 0.0 || prob > 1.0) {
    throw std::invalid_argument("Rng::binomial requires trials >= 0, prob in [0,1]");
  }
  long count = 0;
  for (long t = 0; t < trials; ++t) {
    if (uniform() < prob) ++count;
  }
  return count;
}

std::uint64_t substream_seed(std::uint64_t master, Stream stream,
                             std::initializer_list<std::uint64_t> tags) {
  std::uint64_t h = mix64(master ^ 0xa0761d6478bd642fULL);
  h = mix64(h ^ static_cast<std::uint64_t>(stream));
  for (std::uint64_t tag : tags) {
    h = mix64(h ^ mix64(tag + 0x1d8e4e27c47d124fULL));
  }
  return h;
}

Rng substream(std::uint64_t master, Stream stream,
              std::initializer_list<std::uint64_t> tags) {
  return Rng(substream_seed(master, stream, tags));
}

}  // namespace efm
