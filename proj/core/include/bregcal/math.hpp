#pragma once

#include <cstdint>
#include <random>

namespace bregcal {

/// Standard normal CDF.
double norm_cdf(double x);

/// Standard normal quantile function (Wichura's AS 241, double precision).
double norm_ppf(double p);

/// Logistic function 1/(1+exp(-x)), stable for large |x|.
double logistic(double x);

/// Two-sided 97.5% normal quantile used for all confidence intervals.
inline constexpr double kNormal975 = 1.959963984540054;

/// Deterministic stream-splitting: mixes a base seed with a stream id so
/// replicates can run in any order (or in parallel) and still reproduce.
std::uint64_t mix_seed(std::uint64_t base, std::uint64_t stream);

/// mt19937_64 wrapper drawing everything through inverse CDFs so a draw
/// consumes a fixed number of engine steps.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  /// Uniform on [0, 1).
  double uniform() {
    return (eng_() >> 11) * 0x1.0p-53;
  }

  double normal() { return norm_ppf(uniform_open()); }

  /// Normal(mu, sigma) truncated to (a, b), via inverse CDF.
  double truncated_normal(double mu, double sigma, double a, double b);

  bool bernoulli(double p) { return uniform() < p; }

  /// Uniform integer in {0, ..., k-1}.
  int uniform_int(int k) { return static_cast<int>(uniform() * k); }

  std::mt19937_64& engine() { return eng_; }

 private:
  // Uniform on (0, 1): avoids the exact endpoints norm_ppf rejects.
  double uniform_open() {
    double u = uniform();
    return u <= 0.0 ? 0x1.0p-54 : u;
  }

  std::mt19937_64 eng_;
};

}  // namespace bregcal
