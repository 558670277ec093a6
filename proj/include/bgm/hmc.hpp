#pragma once

#include "bgm/common.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace bgm {

struct HMCConfig {
  double step_size = 0.01;
  std::size_t n_leapfrog = 10;
  double target_accept = 0.75;
  std::size_t burn_in = 5000;
  std::size_t n_samples = 5000;
  bool adapt = true;
  // Each transition uses step * U(1 - jitter, 1 + jitter). With a fixed
  // trajectory length an unjittered step can land near a period of the
  // dynamics and stall the chain.
  double step_jitter = 0.2;
  // Dual-averaging shrinkage constants.
  double gamma = 0.05;
  double t0 = 10.0;
  double kappa = 0.75;
  double max_divergent_fraction = 0.5;

  void validate() const;
};

// Log density and gradient for `rows` independent points (rows x dim,
// row-major). Row r of the input always belongs to chain r.
using BatchLogDensity =
    std::function<void(const double* z, std::size_t rows, double* logp, double* grad)>;

struct ChainResult {
  RowMatrix draws;  // n_samples x dim
  double acceptance_rate = 0.0;  // accepted fraction after burn-in
  double step_size = 0.0;        // frozen post-adaptation step
  std::size_t divergent = 0;     // non-finite Hamiltonians over all transitions
  Rng rng;                       // stream state after sampling, for follow-up draws
};

// Dual averaging of log step size towards a target acceptance statistic.
class DualAveraging {
 public:
  DualAveraging(double initial_step, double target, double gamma, double t0, double kappa);
  void update(double accept_stat);
  double step() const { return std::exp(log_step_); }
  double final_step() const { return std::exp(log_step_bar_); }

 private:
  double mu_;
  double target_;
  double gamma_;
  double t0_;
  double kappa_;
  double h_bar_ = 0.0;
  double log_step_;
  double log_step_bar_ = 0.0;
  double m_ = 0.0;
};

// Runs one HMC chain per row of `init` in lockstep (identity mass matrix,
// leapfrog integrator, Metropolis correction). Each chain owns an RNG seeded
// from `seeds[r]`, so a chain's draws do not depend on which other chains
// share the batch. Throws NumericError if a chain's divergent fraction
// exceeds cfg.max_divergent_fraction.
std::vector<ChainResult> hmc_sample_batch(const BatchLogDensity& target, const RowMatrix& init,
                                          std::span<const std::uint64_t> seeds,
                                          const HMCConfig& cfg);

ChainResult hmc_sample(const BatchLogDensity& target, std::span<const double> init,
                       std::uint64_t seed, const HMCConfig& cfg);

// N(0, I) in any dimension; used as a calibration target.
void standard_normal_target(const double* z, std::size_t rows, std::size_t dim, double* logp,
                            double* grad);

}  // namespace bgm
