#pragma once

#include "bgm/common.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace bgm {

inline constexpr double kLeakySlope = 0.2;

// One affine map inside the flat parameter vector. The weight block is
// out x in, row-major, immediately followed by the bias.
struct AffineLayout {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

struct LayerParams {
  RowMatrix weight;
  Vector bias;
};

// Per-example sign flips for the Flipout estimator. `delta` is the shared
// zero-mean perturbation (sigma * eps) over the whole parameter vector; the
// bias entries of `delta` are applied as-is to every example.
struct Flipout {
  std::span<const double> delta;
  std::vector<RowMatrix> in_signs;   // one rows x in matrix per affine layer
  std::vector<RowMatrix> out_signs;  // one rows x out matrix per affine layer
};

// Activations kept by forward() for backward(). Reused across calls to avoid
// reallocating on every minibatch.
struct NetCache {
  std::size_t rows = 0;
  std::vector<std::vector<double>> acts;  // acts[0] = input, acts[l+1] = hidden l output
  std::vector<std::vector<double>> pre;   // hidden pre-activations
  std::vector<double> mu;                 // rows x p
  std::vector<double> var_pre;            // rows x p
  std::vector<double> sigma2;             // rows x p, softplus(var_pre)

  // Flipout buffers, one per affine layer.
  std::vector<std::vector<double>> signed_inputs;
  std::vector<double> bias_hat;
  std::vector<double> scratch;

  // Backward scratch.
  std::vector<double> grad_a;
  std::vector<double> grad_b;
  std::vector<double> grad_c;
};

// Fully connected decoder: input -> [affine -> LeakyReLU(0.2)] x hidden ->
// two parallel heads (identity mean head, Softplus variance head).
//
// Parameter layout: hidden layers in order, each as (weight, bias), then the
// mean head, then the variance head.
class DenseNet {
 public:
  DenseNet(std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t output_dim);

  // Three hidden layers of 128 units.
  static DenseNet for_data(std::size_t latent_dim, std::size_t data_dim);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t output_dim() const { return output_dim_; }
  const std::vector<std::size_t>& hidden() const { return hidden_; }
  std::size_t num_params() const { return num_params_; }

  // [input, hidden..., 2 * output]
  std::vector<std::size_t> layer_dims() const;

  // Hidden layers, then mean head, then variance head.
  std::span<const AffineLayout> layers() const { return layers_; }
  const AffineLayout& mean_head() const { return layers_[layers_.size() - 2]; }
  const AffineLayout& variance_head() const { return layers_.back(); }

  // Glorot-uniform weights, zero biases.
  std::vector<double> initial_params(Rng& rng) const;

  std::vector<LayerParams> unpack(std::span<const double> params) const;
  std::vector<double> pack(std::span<const LayerParams> layers) const;

  // Evaluates `rows` inputs (row-major, rows x input_dim). Fills cache.mu and
  // cache.sigma2 (raw Softplus output, no floor).
  void forward(std::span<const double> params, const double* input, std::size_t rows,
               NetCache& cache, const Flipout* flipout = nullptr) const;

  // Reverse pass for the scalar sum_r <grad_mu[r], mu[r]> + <grad_sigma2[r], sigma2[r]>.
  // grad_input (rows x input_dim) is overwritten when non-null; grad_params is
  // accumulated into when non-empty. With Flipout, gradients with respect to
  // the perturbation are accumulated into grad_delta.
  void backward(std::span<const double> params, NetCache& cache, const double* grad_mu,
                const double* grad_sigma2, double* grad_input, std::span<double> grad_params,
                const Flipout* flipout = nullptr, std::span<double> grad_delta = {}) const;

  void check_params(std::span<const double> params) const;

 private:
  std::size_t input_dim_;
  std::vector<std::size_t> hidden_;
  std::size_t output_dim_;
  std::vector<AffineLayout> layers_;
  std::size_t num_params_ = 0;
};

struct NetOutput {
  Vector mu;
  Vector sigma2;
};

struct NetGradients {
  Vector grad_z;
  std::vector<double> grad_params;
};

NetOutput net_forward(std::span<const double> z, std::span<const double> params,
                      const DenseNet& net);

// Throws NumericError naming the first non-finite cotangent entry.
NetGradients net_backward(std::span<const double> z, std::span<const double> params,
                          const DenseNet& net, std::span<const double> grad_mu,
                          std::span<const double> grad_sigma2);

}  // namespace bgm
