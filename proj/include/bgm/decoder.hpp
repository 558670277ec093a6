#pragma once

#include "bgm/common.hpp"
#include "bgm/dense_net.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace bgm {

// Mean-field Gaussian posterior over all network parameters:
// theta ~ N(mu, diag(softplus(rho))^2).
struct VariationalParams {
  std::vector<double> mu;
  std::vector<double> rho;

  std::size_t size() const { return mu.size(); }
  std::vector<double> sigma() const;
};

struct PriorSpec {
  double theta_scale = 1.0;  // theta ~ N(0, s^2 I); z ~ N(0, I)
};

struct DecoderConfig {
  double variance_floor = 1e-4;
  bool map_mode = false;  // sigma pinned to 0, KL dropped
  bool flipout = false;
  std::size_t n_theta_samples = 1;
  PriorSpec prior;
};

// rho is set so that softplus(rho) == initial_sigma.
VariationalParams make_variational(std::vector<double> mean, double initial_sigma = 1e-3);

// Diagonal Gaussian log-density including the -(p/2) ln(2 pi) constant.
// Throws NumericError naming the first non-positive variance.
double log_likelihood_diag(std::span<const double> x, std::span<const double> mu,
                           std::span<const double> sigma2);

// Log-density of a batch under the decoder output in `cache` (raw Softplus
// variances; `floor` is added). Optionally restricted to a coordinate subset.
// When dmu/dsigma2 are non-null they receive weight * d(log p)/d(mu, sigma2)
// (zero outside the subset). Returns the sum over rows.
double batch_log_likelihood(const double* x, const NetCache& cache, std::size_t p, double floor,
                            double weight, std::span<const std::size_t> coords, double* dmu,
                            double* dsigma2);

// theta = mu + softplus(rho) * noise; theta = mu in MAP mode.
std::vector<double> sample_theta(const VariationalParams& vp, std::span<const double> noise,
                                 bool map_mode = false);

double kl_to_prior(const VariationalParams& vp, const PriorSpec& prior);

// Random inputs for one ELBO evaluation. eps holds n_theta_samples blocks of
// length d; flipout signs (one set per theta sample) are only read when
// Flipout is enabled.
struct FlipoutSigns {
  std::vector<RowMatrix> in_signs;
  std::vector<RowMatrix> out_signs;
};

struct ThetaNoise {
  std::vector<double> eps;
  std::vector<FlipoutSigns> signs;
};

FlipoutSigns draw_flipout_signs(const DenseNet& net, std::size_t rows, Rng& rng);
ThetaNoise draw_theta_noise(const DenseNet& net, const DecoderConfig& cfg, std::size_t rows,
                            Rng& rng);

// Per-example Flipout perturbation of one affine layer's pre-activation:
// ((input .* in_signs) * weight_delta^T) .* out_signs.
RowMatrix flipout_perturbation(const RowMatrix& input, const RowMatrix& weight_delta,
                               const RowMatrix& in_signs, const RowMatrix& out_signs);

struct ElboResult {
  double value = 0.0;
  double log_likelihood = 0.0;  // (N/m) * sum over batch, averaged over theta samples
  double kl = 0.0;
  std::vector<double> grad_mu;
  std::vector<double> grad_rho;
};

// Reusable buffers for elbo_minibatch.
struct ElboWorkspace {
  NetCache cache;
  std::vector<double> theta;
  std::vector<double> delta;
  std::vector<double> sigma;
  std::vector<double> grad_sample;
  std::vector<double> grad_delta;
  std::vector<double> dmu;
  std::vector<double> dsigma2;
};

// Minibatch ELBO: (N/m) * sum_i E_q[log p(x_i | z_i, theta)] - KL(q || prior),
// with the expectation replaced by the average over the supplied noise draws.
// x_batch is m x p, z_batch m x d_z (row-major).
ElboResult elbo_minibatch(const RowMatrix& x_batch, const RowMatrix& z_batch,
                          const VariationalParams& vp, const DenseNet& net,
                          const DecoderConfig& cfg, std::size_t n_total, const ThetaNoise& noise,
                          ElboWorkspace* workspace = nullptr);

}  // namespace bgm
