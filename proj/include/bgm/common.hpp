#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>

namespace bgm {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using Rng = std::mt19937_64;

// Invalid shapes, sizes or settings.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad user-supplied data (unparseable files, non-finite cells, bad masks).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or failed factorizations during computation.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

inline void fill_normal(Rng& rng, std::span<double> out) {
  std::normal_distribution<double> normal;
  for (double& x : out) x = normal(rng);
}

inline double softplus(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// Inverse of softplus for y > 0.
inline double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

}  // namespace bgm
