#pragma once

// Independent oracles shared by the unit tests and the acceptance gate.

#include "bgm/common.hpp"
#include "bgm/dense_net.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace bgm::checks {

// Central differences with step h.
std::vector<double> numeric_gradient(const std::function<double(std::span<const double>)>& f,
                                     std::vector<double> x, double h = 1e-5);

// Largest entry-wise relative error. Entries are compared relative to
// max(|a|, |b|, 1e-3 * largest |b|), so tiny components do not dominate.
double max_relative_error(std::span<const double> analytic, std::span<const double> numeric);

struct RandomNet {
  DenseNet net;
  std::vector<double> params;
};

// d_z in [1, 4], one to three hidden layers of width 2..16, p in [1, 6],
// parameters N(0, 0.5^2).
RandomNet random_net(Rng& rng);

// Smallest |pre-activation| over all hidden units for the given inputs.
double min_kink_distance(const DenseNet& net, std::span<const double> params,
                         std::span<const double> inputs, std::size_t rows);

inline constexpr double kKinkMargin = 1e-3;

// Each check builds one random instance from `seed`, redrawing inputs until
// no pre-activation is within kKinkMargin of the LeakyReLU kink, and returns
// the largest relative error between the analytic and numeric gradients.
double check_net_backward(std::uint64_t seed);
double check_latent_log_posterior(std::uint64_t seed);
double check_elbo(std::uint64_t seed, bool flipout = false);

// Random 4-D SPD covariance (eigenvalues in [0.5, 2]) and a random split
// with |A| = a_size. Evaluates the joint density on a dense grid over the B
// coordinates at a fixed x_A, normalizes it numerically, and returns the
// sup-norm distance to the closed-form conditional density.
double conditional_grid_sup_error(std::uint64_t seed, std::size_t a_size);

// Kolmogorov-Smirnov statistic of a sample against N(0, 1).
double ks_statistic_normal(std::vector<double> sample);

// Asymptotic p-value of the one-sample KS statistic (Stephens' correction).
double ks_pvalue(double d, std::size_t n);

double normal_cdf(double x);

}  // namespace bgm::checks
