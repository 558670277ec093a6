#pragma once

#include "bgm/common.hpp"

#include <span>

namespace bgm {

struct ConditionalGaussian {
  Vector mean;
  Eigen::MatrixXd cov;
};

// X_B | X_A = x_a for X ~ N(mu, sigma). Index lists are 0-based. Throws
// NumericError when Sigma_AA has condition number above 1e12 or is not
// positive definite.
ConditionalGaussian conditional_gaussian_general(const Vector& mu, const Eigen::MatrixXd& sigma,
                                                 const Vector& x_a,
                                                 std::span<const std::size_t> a_idx,
                                                 std::span<const std::size_t> b_idx);

// Log-density of N(mu, sigma) at x.
double gaussian_log_density(const Vector& x, const Vector& mu, const Eigen::MatrixXd& sigma);

}  // namespace bgm
