#include "bgm/dense_net.hpp"

#include "bgm/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace bgm {

DenseNet::DenseNet(std::size_t input_dim, std::vector<std::size_t> hidden, std::size_t output_dim)
    : input_dim_(input_dim), hidden_(std::move(hidden)), output_dim_(output_dim) {
  if (input_dim_ == 0 || output_dim_ == 0)
    throw ConfigError("DenseNet: input and output dimensions must be positive");
  std::size_t offset = 0;
  std::size_t in = input_dim_;
  auto add = [&](std::size_t out) {
    if (out == 0) throw ConfigError("DenseNet: layer width must be positive");
    AffineLayout l{in, out, offset, offset + in * out};
    offset += in * out + out;
    layers_.push_back(l);
  };
  for (std::size_t h : hidden_) {
    add(h);
    in = h;
  }
  add(output_dim_);
  add(output_dim_);
  num_params_ = offset;
}

DenseNet DenseNet::for_data(std::size_t latent_dim, std::size_t data_dim) {
  return DenseNet(latent_dim, {128, 128, 128}, data_dim);
}

std::vector<std::size_t> DenseNet::layer_dims() const {
  std::vector<std::size_t> dims{input_dim_};
  dims.insert(dims.end(), hidden_.begin(), hidden_.end());
  dims.push_back(2 * output_dim_);
  return dims;
}

std::vector<double> DenseNet::initial_params(Rng& rng) const {
  std::vector<double> params(num_params_, 0.0);
  for (const AffineLayout& l : layers_) {
    const double limit = std::sqrt(6.0 / static_cast<double>(l.in + l.out));
    std::uniform_real_distribution<double> dist(-limit, limit);
    for (std::size_t i = 0; i < l.in * l.out; ++i) params[l.weight_offset + i] = dist(rng);
  }
  return params;
}

std::vector<LayerParams> DenseNet::unpack(std::span<const double> params) const {
  check_params(params);
  std::vector<LayerParams> out;
  out.reserve(layers_.size());
  for (const AffineLayout& l : layers_) {
    LayerParams lp;
    lp.weight = Eigen::Map<const RowMatrix>(params.data() + l.weight_offset,
                                            static_cast<Eigen::Index>(l.out),
                                            static_cast<Eigen::Index>(l.in));
    lp.bias = Eigen::Map<const Vector>(params.data() + l.bias_offset,
                                       static_cast<Eigen::Index>(l.out));
    out.push_back(std::move(lp));
  }
  return out;
}

std::vector<double> DenseNet::pack(std::span<const LayerParams> layers) const {
  if (layers.size() != layers_.size()) throw ConfigError("DenseNet::pack: layer count mismatch");
  std::vector<double> params(num_params_);
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const AffineLayout& l = layers_[i];
    const LayerParams& lp = layers[i];
    if (static_cast<std::size_t>(lp.weight.rows()) != l.out ||
        static_cast<std::size_t>(lp.weight.cols()) != l.in ||
        static_cast<std::size_t>(lp.bias.size()) != l.out)
      throw ConfigError("DenseNet::pack: shape mismatch in layer " + std::to_string(i));
    std::copy(lp.weight.data(), lp.weight.data() + l.in * l.out, params.begin() + l.weight_offset);
    std::copy(lp.bias.data(), lp.bias.data() + l.out, params.begin() + l.bias_offset);
  }
  return params;
}

void DenseNet::check_params(std::span<const double> params) const {
  if (params.size() != num_params_)
    throw ConfigError("DenseNet: expected " + std::to_string(num_params_) + " parameters, got " +
                      std::to_string(params.size()));
}

namespace {

void affine_apply(const kernels::KernelTable& k, const AffineLayout& l, std::size_t index,
                  std::span<const double> params, const double* x, std::size_t rows,
                  double* out, NetCache& cache, const Flipout* flipout) {
  const double* w = params.data() + l.weight_offset;
  const double* b = params.data() + l.bias_offset;
  if (!flipout) {
    k.affine_forward(x, rows, l.in, w, b, l.out, out);
    return;
  }
  cache.bias_hat.resize(l.out);
  for (std::size_t o = 0; o < l.out; ++o) cache.bias_hat[o] = b[o] + flipout->delta[l.bias_offset + o];
  k.affine_forward(x, rows, l.in, w, cache.bias_hat.data(), l.out, out);

  const RowMatrix& s = flipout->in_signs[index];
  const RowMatrix& r = flipout->out_signs[index];
  std::vector<double>& xs = cache.signed_inputs[index];
  xs.resize(rows * l.in);
  for (std::size_t i = 0; i < rows * l.in; ++i) xs[i] = x[i] * s.data()[i];
  cache.scratch.resize(rows * l.out);
  std::fill(cache.bias_hat.begin(), cache.bias_hat.end(), 0.0);
  k.affine_forward(xs.data(), rows, l.in, flipout->delta.data() + l.weight_offset,
                   cache.bias_hat.data(), l.out, cache.scratch.data());
  for (std::size_t i = 0; i < rows * l.out; ++i) out[i] += cache.scratch[i] * r.data()[i];
}

// Reverse pass through one affine layer given dPre. Writes dX when dx != nullptr.
void affine_reverse(const kernels::KernelTable& k, const AffineLayout& l, std::size_t index,
                    std::span<const double> params, const double* x, const double* dpre,
                    std::size_t rows, double* dx, std::span<double> grad_params,
                    NetCache& cache, const Flipout* flipout, std::span<double> grad_delta,
                    std::vector<double>& dr, std::vector<double>& tmp) {
  const double* w = params.data() + l.weight_offset;
  if (!grad_params.empty())
    k.affine_backward_params(dpre, x, rows, l.in, l.out, grad_params.data() + l.weight_offset,
                             grad_params.data() + l.bias_offset);
  if (flipout) {
    const RowMatrix& r = flipout->out_signs[index];
    dr.resize(rows * l.out);
    for (std::size_t i = 0; i < rows * l.out; ++i) dr[i] = dpre[i] * r.data()[i];
    if (!grad_delta.empty()) {
      tmp.assign(l.out, 0.0);
      k.affine_backward_params(dr.data(), cache.signed_inputs[index].data(), rows, l.in, l.out,
                               grad_delta.data() + l.weight_offset, tmp.data());
      for (std::size_t rr = 0; rr < rows; ++rr)
        for (std::size_t o = 0; o < l.out; ++o) grad_delta[l.bias_offset + o] += dpre[rr * l.out + o];
    }
  }
  if (dx) {
    k.affine_backward_input(dpre, rows, l.out, w, l.in, dx);
    if (flipout) {
      const RowMatrix& s = flipout->in_signs[index];
      tmp.resize(rows * l.in);
      k.affine_backward_input(dr.data(), rows, l.out, flipout->delta.data() + l.weight_offset,
                              l.in, tmp.data());
      for (std::size_t i = 0; i < rows * l.in; ++i) dx[i] += tmp[i] * s.data()[i];
    }
  }
}

}  // namespace

void DenseNet::forward(std::span<const double> params, const double* input, std::size_t rows,
                       NetCache& cache, const Flipout* flipout) const {
  check_params(params);
  const kernels::KernelTable& k = kernels::active();
  const std::size_t nh = hidden_.size();
  cache.rows = rows;
  cache.acts.resize(nh + 1);
  cache.pre.resize(nh);
  if (flipout) {
    if (flipout->delta.size() != num_params_ || flipout->in_signs.size() != layers_.size() ||
        flipout->out_signs.size() != layers_.size())
      throw ConfigError("DenseNet: Flipout context does not match the network");
    cache.signed_inputs.resize(layers_.size());
  }
  cache.acts[0].assign(input, input + rows * input_dim_);
  for (std::size_t l = 0; l < nh; ++l) {
    const AffineLayout& lay = layers_[l];
    cache.pre[l].resize(rows * lay.out);
    affine_apply(k, lay, l, params, cache.acts[l].data(), rows, cache.pre[l].data(), cache, flipout);
    cache.acts[l + 1].resize(rows * lay.out);
    k.leaky_relu_forward(cache.pre[l].data(), rows * lay.out, kLeakySlope, cache.acts[l + 1].data());
  }
  const std::size_t p = output_dim_;
  cache.mu.resize(rows * p);
  cache.var_pre.resize(rows * p);
  cache.sigma2.resize(rows * p);
  affine_apply(k, mean_head(), nh, params, cache.acts[nh].data(), rows, cache.mu.data(), cache,
               flipout);
  affine_apply(k, variance_head(), nh + 1, params, cache.acts[nh].data(), rows,
               cache.var_pre.data(), cache, flipout);
  for (std::size_t i = 0; i < rows * p; ++i) cache.sigma2[i] = softplus(cache.var_pre[i]);
}

void DenseNet::backward(std::span<const double> params, NetCache& cache, const double* grad_mu,
                        const double* grad_sigma2, double* grad_input,
                        std::span<double> grad_params, const Flipout* flipout,
                        std::span<double> grad_delta) const {
  check_params(params);
  if (!grad_params.empty() && grad_params.size() != num_params_)
    throw ConfigError("DenseNet::backward: gradient buffer has wrong length");
  if (!grad_delta.empty() && grad_delta.size() != num_params_)
    throw ConfigError("DenseNet::backward: perturbation gradient buffer has wrong length");
  const kernels::KernelTable& k = kernels::active();
  const std::size_t rows = cache.rows;
  const std::size_t p = output_dim_;
  const std::size_t nh = hidden_.size();
  for (std::size_t i = 0; i < rows * p; ++i) {
    if (!std::isfinite(grad_mu[i]))
      throw NumericError("non-finite mean cotangent at index " + std::to_string(i));
    if (!std::isfinite(grad_sigma2[i]))
      throw NumericError("non-finite variance cotangent at index " + std::to_string(i));
  }

  std::vector<double>& d_var = cache.grad_c;
  d_var.resize(rows * p);
  for (std::size_t i = 0; i < rows * p; ++i) d_var[i] = grad_sigma2[i] * sigmoid(cache.var_pre[i]);

  const std::size_t last = nh == 0 ? input_dim_ : hidden_.back();
  std::vector<double>& dh = cache.grad_a;
  std::vector<double>& dh2 = cache.grad_b;
  std::vector<double> dr, tmp;
  const bool need_input = nh > 0 || grad_input != nullptr;
  dh.resize(rows * last);
  dh2.resize(rows * last);
  affine_reverse(k, mean_head(), nh, params, cache.acts[nh].data(), grad_mu, rows,
                 need_input ? dh.data() : nullptr, grad_params, cache, flipout, grad_delta, dr,
                 tmp);
  affine_reverse(k, variance_head(), nh + 1, params, cache.acts[nh].data(), d_var.data(), rows,
                 need_input ? dh2.data() : nullptr, grad_params, cache, flipout, grad_delta, dr,
                 tmp);
  if (!need_input) return;
  for (std::size_t i = 0; i < rows * last; ++i) dh[i] += dh2[i];

  for (std::size_t l = nh; l-- > 0;) {
    const AffineLayout& lay = layers_[l];
    k.leaky_relu_backward(cache.pre[l].data(), dh.data(), rows * lay.out, kLeakySlope, dh.data());
    double* dx = nullptr;
    if (l > 0 || grad_input) {
      dh2.resize(rows * lay.in);
      dx = l > 0 ? dh2.data() : grad_input;
    }
    affine_reverse(k, lay, l, params, cache.acts[l].data(), dh.data(), rows, dx, grad_params,
                   cache, flipout, grad_delta, dr, tmp);
    if (l > 0) std::swap(dh, dh2);
  }
  if (nh == 0 && grad_input) std::copy(dh.begin(), dh.end(), grad_input);
}

NetOutput net_forward(std::span<const double> z, std::span<const double> params,
                      const DenseNet& net) {
  if (z.size() != net.input_dim()) throw ConfigError("net_forward: latent dimension mismatch");
  NetCache cache;
  net.forward(params, z.data(), 1, cache);
  const auto p = static_cast<Eigen::Index>(net.output_dim());
  return {Eigen::Map<const Vector>(cache.mu.data(), p), Eigen::Map<const Vector>(cache.sigma2.data(), p)};
}

NetGradients net_backward(std::span<const double> z, std::span<const double> params,
                          const DenseNet& net, std::span<const double> grad_mu,
                          std::span<const double> grad_sigma2) {
  if (z.size() != net.input_dim()) throw ConfigError("net_backward: latent dimension mismatch");
  if (grad_mu.size() != net.output_dim() || grad_sigma2.size() != net.output_dim())
    throw ConfigError("net_backward: cotangent dimension mismatch");
  NetCache cache;
  net.forward(params, z.data(), 1, cache);
  NetGradients g;
  g.grad_z = Vector::Zero(static_cast<Eigen::Index>(net.input_dim()));
  g.grad_params.assign(net.num_params(), 0.0);
  net.backward(params, cache, grad_mu.data(), grad_sigma2.data(), g.grad_z.data(), g.grad_params);
  return g;
}

}  // namespace bgm
