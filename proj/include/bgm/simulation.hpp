#pragma once

#include "bgm/common.hpp"
#include "bgm/gaussian.hpp"

#include <cstdint>

namespace bgm {

// Low-rank latent model:
//   Z ~ N(0, I_k)
//   V | Z ~ N(0.2 Z A^T, 0.1^2 I_d)
//   R | Z ~ N(sin(Z w), (0.1 + 0.5 sigmoid(Z u))^2)
struct SimulationSpec {
  std::size_t k = 10;
  std::size_t d = 49;
  std::size_t n = 5000;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SimulationTruth {
  RowMatrix a;  // d x k
  Vector w;     // k
  Vector u;     // k
};

struct SimulationData {
  RowMatrix v;  // n x d
  Vector r;     // n
  RowMatrix z;  // n x k
  SimulationTruth truth;

  // [V | R], n x (d + 1).
  RowMatrix joint() const;
};

inline constexpr double kLoadingScale = 0.2;
inline constexpr double kPredictorNoise = 0.1;

// Draws (A, w, u) from the simulation seed alone.
SimulationTruth draw_truth(const SimulationSpec& spec);

// Response noise standard deviation at latent z.
double response_sd(std::span<const double> z, const Vector& u);

SimulationData simulate(const SimulationSpec& spec);

// n fresh rows from a fixed truth.
SimulationData simulate_from(const SimulationTruth& truth, std::size_t n, std::uint64_t seed);

struct OracleModel {
  Eigen::MatrixXd posterior_cov;   // (I + 4 A^T A)^-1
  Eigen::MatrixXd posterior_gain;  // posterior_cov * 20 A^T
  Eigen::MatrixXd cov_factor;      // lower Cholesky factor of posterior_cov

  static OracleModel from(const RowMatrix& a);
};

ConditionalGaussian oracle_posterior_z(std::span<const double> v, const OracleModel& oracle);

struct OracleInterval {
  double lower = 0.0;
  double upper = 0.0;
  double length = 0.0;
};

// Monte Carlo interval for R | V = v: Z from the exact posterior, then R
// from its conditional law, then type-7 alpha/2 and 1 - alpha/2 quantiles.
OracleInterval oracle_interval(std::span<const double> v, const OracleModel& oracle,
                               const SimulationTruth& truth, double alpha, std::size_t m_draws,
                               std::uint64_t seed);

}  // namespace bgm
