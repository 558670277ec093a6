#include "bgm/decoder.hpp"

#include "bgm/kernels.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace bgm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;
}

std::vector<double> VariationalParams::sigma() const {
  std::vector<double> s(rho.size());
  for (std::size_t i = 0; i < rho.size(); ++i) s[i] = softplus(rho[i]);
  return s;
}

VariationalParams make_variational(std::vector<double> mean, double initial_sigma) {
  if (!(initial_sigma > 0.0)) throw ConfigError("initial posterior scale must be positive");
  VariationalParams vp;
  vp.rho.assign(mean.size(), softplus_inverse(initial_sigma));
  vp.mu = std::move(mean);
  return vp;
}

double log_likelihood_diag(std::span<const double> x, std::span<const double> mu,
                           std::span<const double> sigma2) {
  if (x.size() != mu.size() || x.size() != sigma2.size())
    throw ConfigError("log_likelihood_diag: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(sigma2[i] > 0.0))
      throw NumericError("log_likelihood_diag: non-positive variance at coordinate " +
                         std::to_string(i));
    const double r = x[i] - mu[i];
    acc += kLog2Pi + std::log(sigma2[i]) + r * r / sigma2[i];
  }
  return -0.5 * acc;
}

double batch_log_likelihood(const double* x, const NetCache& cache, std::size_t p, double floor,
                            double weight, std::span<const std::size_t> coords, double* dmu,
                            double* dsigma2) {
  const std::size_t rows = cache.rows;
  const bool all = coords.empty();
  if (dmu) std::fill(dmu, dmu + rows * p, 0.0);
  if (dsigma2) std::fill(dsigma2, dsigma2 + rows * p, 0.0);
  double total = 0.0;
  const std::size_t n = all ? p : coords.size();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = x + r * p;
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t c = all ? j : coords[j];
      const std::size_t i = r * p + c;
      const double s2 = cache.sigma2[i] + floor;
      const double res = xr[c] - cache.mu[i];
      const double inv = 1.0 / s2;
      total += -0.5 * (kLog2Pi + std::log(s2) + res * res * inv);
      if (dmu) dmu[i] = weight * res * inv;
      if (dsigma2) dsigma2[i] = weight * 0.5 * (res * res * inv - 1.0) * inv;
    }
  }
  return total;
}

std::vector<double> sample_theta(const VariationalParams& vp, std::span<const double> noise,
                                 bool map_mode) {
  if (map_mode) return vp.mu;
  if (noise.size() != vp.size() || vp.rho.size() != vp.size())
    throw ConfigError("sample_theta: noise length does not match the parameter count");
  std::vector<double> theta(vp.size());
  const std::vector<double> s = vp.sigma();
  kernels::active().scaled_add(vp.mu.data(), s.data(), noise.data(), vp.size(), theta.data());
  return theta;
}

double kl_to_prior(const VariationalParams& vp, const PriorSpec& prior) {
  if (!(prior.theta_scale > 0.0)) throw ConfigError("prior scale must be positive");
  const double inv_s2 = 1.0 / (prior.theta_scale * prior.theta_scale);
  double kl = 0.0;
  for (std::size_t i = 0; i < vp.size(); ++i) {
    const double sigma = softplus(vp.rho[i]);
    const double ratio = sigma * sigma * inv_s2;
    kl += ratio + vp.mu[i] * vp.mu[i] * inv_s2 - 1.0 - std::log(ratio);
  }
  return 0.5 * kl;
}

FlipoutSigns draw_flipout_signs(const DenseNet& net, std::size_t rows, Rng& rng) {
  FlipoutSigns s;
  std::bernoulli_distribution coin(0.5);
  for (const AffineLayout& l : net.layers()) {
    RowMatrix in(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(l.in));
    RowMatrix out(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(l.out));
    for (Eigen::Index i = 0; i < in.size(); ++i) in.data()[i] = coin(rng) ? 1.0 : -1.0;
    for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] = coin(rng) ? 1.0 : -1.0;
    s.in_signs.push_back(std::move(in));
    s.out_signs.push_back(std::move(out));
  }
  return s;
}

ThetaNoise draw_theta_noise(const DenseNet& net, const DecoderConfig& cfg, std::size_t rows,
                            Rng& rng) {
  ThetaNoise n;
  if (cfg.map_mode) return n;
  n.eps.resize(cfg.n_theta_samples * net.num_params());
  fill_normal(rng, n.eps);
  if (cfg.flipout)
    for (std::size_t s = 0; s < cfg.n_theta_samples; ++s)
      n.signs.push_back(draw_flipout_signs(net, rows, rng));
  return n;
}

RowMatrix flipout_perturbation(const RowMatrix& input, const RowMatrix& weight_delta,
                               const RowMatrix& in_signs, const RowMatrix& out_signs) {
  if (input.rows() != in_signs.rows() || input.cols() != in_signs.cols() ||
      weight_delta.cols() != input.cols() || out_signs.rows() != input.rows() ||
      out_signs.cols() != weight_delta.rows())
    throw ConfigError("flipout_perturbation: shape mismatch");
  RowMatrix signed_input = input.cwiseProduct(in_signs);
  RowMatrix pert = signed_input * weight_delta.transpose();
  return pert.cwiseProduct(out_signs);
}

ElboResult elbo_minibatch(const RowMatrix& x_batch, const RowMatrix& z_batch,
                          const VariationalParams& vp, const DenseNet& net,
                          const DecoderConfig& cfg, std::size_t n_total, const ThetaNoise& noise,
                          ElboWorkspace* workspace) {
  const std::size_t m = static_cast<std::size_t>(x_batch.rows());
  const std::size_t p = net.output_dim();
  const std::size_t d = net.num_params();
  if (m == 0) throw ConfigError("elbo_minibatch: empty batch");
  if (static_cast<std::size_t>(z_batch.rows()) != m ||
      static_cast<std::size_t>(z_batch.cols()) != net.input_dim() ||
      static_cast<std::size_t>(x_batch.cols()) != p)
    throw ConfigError("elbo_minibatch: batch shapes do not match the network");
  if (vp.size() != d || vp.rho.size() != d)
    throw ConfigError("elbo_minibatch: variational parameters do not match the network");
  if (cfg.n_theta_samples == 0) throw ConfigError("elbo_minibatch: need at least one theta sample");
  const std::size_t samples = cfg.map_mode ? 1 : cfg.n_theta_samples;
  if (!cfg.map_mode && noise.eps.size() != samples * d)
    throw ConfigError("elbo_minibatch: noise length does not match theta samples");
  if (!cfg.map_mode && cfg.flipout && noise.signs.size() != samples)
    throw ConfigError("elbo_minibatch: missing Flipout signs");

  ElboWorkspace local;
  ElboWorkspace& ws = workspace ? *workspace : local;
  const kernels::KernelTable& k = kernels::active();

  ElboResult res;
  res.grad_mu.assign(d, 0.0);
  res.grad_rho.assign(d, 0.0);
  const double weight = static_cast<double>(n_total) / static_cast<double>(m) /
                        static_cast<double>(samples);
  ws.dmu.resize(m * p);
  ws.dsigma2.resize(m * p);

  if (!cfg.map_mode) {
    ws.sigma.resize(d);
    for (std::size_t i = 0; i < d; ++i) ws.sigma[i] = softplus(vp.rho[i]);
  }

  double ll = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    std::span<const double> params;
    const double* eps = cfg.map_mode ? nullptr : noise.eps.data() + s * d;
    Flipout flip;
    const Flipout* flip_ptr = nullptr;
    if (cfg.map_mode) {
      params = vp.mu;
    } else if (cfg.flipout) {
      ws.delta.resize(d);
      for (std::size_t i = 0; i < d; ++i) ws.delta[i] = ws.sigma[i] * eps[i];
      flip.delta = ws.delta;
      flip.in_signs = noise.signs[s].in_signs;
      flip.out_signs = noise.signs[s].out_signs;
      flip_ptr = &flip;
      params = vp.mu;
    } else {
      ws.theta.resize(d);
      k.scaled_add(vp.mu.data(), ws.sigma.data(), eps, d, ws.theta.data());
      params = ws.theta;
    }

    net.forward(params, z_batch.data(), m, ws.cache, flip_ptr);
    ll += batch_log_likelihood(x_batch.data(), ws.cache, p, cfg.variance_floor, weight, {},
                               ws.dmu.data(), ws.dsigma2.data());
    if (cfg.map_mode) {
      net.backward(params, ws.cache, ws.dmu.data(), ws.dsigma2.data(), nullptr, res.grad_mu);
      continue;
    }
    ws.grad_sample.assign(d, 0.0);
    if (flip_ptr) {
      ws.grad_delta.assign(d, 0.0);
      net.backward(params, ws.cache, ws.dmu.data(), ws.dsigma2.data(), nullptr, res.grad_mu,
                   flip_ptr, ws.grad_delta);
      for (std::size_t i = 0; i < d; ++i) res.grad_rho[i] += ws.grad_delta[i] * eps[i];
    } else {
      net.backward(params, ws.cache, ws.dmu.data(), ws.dsigma2.data(), nullptr, ws.grad_sample);
      for (std::size_t i = 0; i < d; ++i) {
        res.grad_mu[i] += ws.grad_sample[i];
        res.grad_rho[i] += ws.grad_sample[i] * eps[i];
      }
    }
  }
  res.log_likelihood = ll * static_cast<double>(n_total) / static_cast<double>(m) /
                       static_cast<double>(samples);

  if (cfg.map_mode) {
    res.value = res.log_likelihood;
    return res;
  }
  const double s2 = cfg.prior.theta_scale * cfg.prior.theta_scale;
  res.kl = kl_to_prior(vp, cfg.prior);
  for (std::size_t i = 0; i < d; ++i) {
    const double sig = ws.sigma[i];
    res.grad_mu[i] -= vp.mu[i] / s2;
    const double dkl_dsigma = sig / s2 - 1.0 / sig;
    res.grad_rho[i] = (res.grad_rho[i] - dkl_dsigma) * sigmoid(vp.rho[i]);
  }
  res.value = res.log_likelihood - res.kl;
  return res;
}

}  // namespace bgm
