#include "bgm/hmc.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace bgm {

void HMCConfig::validate() const {
  if (!(step_size > 0.0)) throw ConfigError("HMC step_size must be positive");
  if (!(step_jitter >= 0.0 && step_jitter < 1.0)) throw ConfigError("HMC step_jitter must lie in [0, 1)");
  if (n_leapfrog == 0) throw ConfigError("HMC n_leapfrog must be at least 1");
  if (!(target_accept > 0.0 && target_accept < 1.0))
    throw ConfigError("HMC target_accept must lie in (0, 1)");
  if (n_samples == 0) throw ConfigError("HMC n_samples must be at least 1");
}

DualAveraging::DualAveraging(double initial_step, double target, double gamma, double t0,
                             double kappa)
    : mu_(std::log(10.0 * initial_step)),
      target_(target),
      gamma_(gamma),
      t0_(t0),
      kappa_(kappa),
      log_step_(std::log(initial_step)),
      log_step_bar_(std::log(initial_step)) {}

void DualAveraging::update(double accept_stat) {
  m_ += 1.0;
  const double w = 1.0 / (m_ + t0_);
  h_bar_ = (1.0 - w) * h_bar_ + w * (target_ - accept_stat);
  log_step_ = mu_ - std::sqrt(m_) / gamma_ * h_bar_;
  const double eta = std::pow(m_, -kappa_);
  log_step_bar_ = eta * log_step_ + (1.0 - eta) * log_step_bar_;
}

void standard_normal_target(const double* z, std::size_t rows, std::size_t dim, double* logp,
                            double* grad) {
  const double c = -0.5 * static_cast<double>(dim) * std::log(2.0 * 3.14159265358979323846);
  for (std::size_t r = 0; r < rows; ++r) {
    double sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) {
      const double v = z[r * dim + j];
      sq += v * v;
      grad[r * dim + j] = -v;
    }
    logp[r] = c - 0.5 * sq;
  }
}

std::vector<ChainResult> hmc_sample_batch(const BatchLogDensity& target, const RowMatrix& init,
                                          std::span<const std::uint64_t> seeds,
                                          const HMCConfig& cfg) {
  cfg.validate();
  const auto chains = static_cast<std::size_t>(init.rows());
  const auto dim = static_cast<std::size_t>(init.cols());
  if (seeds.size() != chains) throw ConfigError("hmc_sample_batch: one seed per chain required");
  if (chains == 0) return {};

  std::vector<ChainResult> out(chains);
  std::vector<std::normal_distribution<double>> normals(chains);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::vector<DualAveraging> adapt;
  std::vector<double> step(chains, cfg.step_size);
  std::vector<double> eps(chains, cfg.step_size);  // this transition's jittered step
  std::vector<std::size_t> accepted(chains, 0);
  for (std::size_t c = 0; c < chains; ++c) {
    out[c].rng.seed(seeds[c]);
    out[c].draws.resize(static_cast<Eigen::Index>(cfg.n_samples), static_cast<Eigen::Index>(dim));
    adapt.emplace_back(cfg.step_size, cfg.target_accept, cfg.gamma, cfg.t0, cfg.kappa);
  }

  RowMatrix z = init;
  Vector logp(static_cast<Eigen::Index>(chains));
  RowMatrix grad(static_cast<Eigen::Index>(chains), static_cast<Eigen::Index>(dim));
  target(z.data(), chains, logp.data(), grad.data());
  for (std::size_t c = 0; c < chains; ++c)
    if (!std::isfinite(logp[static_cast<Eigen::Index>(c)]))
      throw NumericError("HMC: log density is not finite at the initial point of chain " +
                         std::to_string(c));

  RowMatrix zp(z.rows(), z.cols()), gp(grad.rows(), grad.cols()), mom(z.rows(), z.cols());
  Vector lp(logp.size()), h0(logp.size());
  const std::size_t total = cfg.burn_in + cfg.n_samples;

  for (std::size_t it = 0; it < total; ++it) {
    for (std::size_t c = 0; c < chains; ++c) {
      const auto r = static_cast<Eigen::Index>(c);
      double kinetic = 0.0;
      for (std::size_t j = 0; j < dim; ++j) {
        const double v = normals[c](out[c].rng);
        mom(r, static_cast<Eigen::Index>(j)) = v;
        kinetic += v * v;
      }
      h0[r] = -logp[r] + 0.5 * kinetic;
      eps[c] = cfg.step_jitter > 0.0 ? step[c] * (1.0 + cfg.step_jitter * (2.0 * unif(out[c].rng) - 1.0))
                                     : step[c];
    }
    zp = z;
    gp = grad;
    for (std::size_t l = 0; l < cfg.n_leapfrog; ++l) {
      for (std::size_t c = 0; c < chains; ++c) {
        const auto r = static_cast<Eigen::Index>(c);
        mom.row(r) += (0.5 * eps[c]) * gp.row(r);
        zp.row(r) += eps[c] * mom.row(r);
      }
      target(zp.data(), chains, lp.data(), gp.data());
      for (std::size_t c = 0; c < chains; ++c) {
        const auto r = static_cast<Eigen::Index>(c);
        mom.row(r) += (0.5 * eps[c]) * gp.row(r);
      }
    }

    const bool sampling = it >= cfg.burn_in;
    for (std::size_t c = 0; c < chains; ++c) {
      const auto r = static_cast<Eigen::Index>(c);
      const double h1 = -lp[r] + 0.5 * mom.row(r).squaredNorm();
      double accept_prob = 0.0;
      if (std::isfinite(h1) && gp.row(r).allFinite() && zp.row(r).allFinite()) {
        accept_prob = std::min(1.0, std::exp(h0[r] - h1));
      } else {
        ++out[c].divergent;
      }
      const double u = unif(out[c].rng);
      if (u < accept_prob) {
        z.row(r) = zp.row(r);
        grad.row(r) = gp.row(r);
        logp[r] = lp[r];
        if (sampling) ++accepted[c];
      }
      if (!sampling && cfg.adapt) {
        adapt[c].update(accept_prob);
        step[c] = it + 1 == cfg.burn_in ? adapt[c].final_step() : adapt[c].step();
      }
      if (sampling) out[c].draws.row(static_cast<Eigen::Index>(it - cfg.burn_in)) = z.row(r);
    }
  }

  for (std::size_t c = 0; c < chains; ++c) {
    out[c].acceptance_rate = static_cast<double>(accepted[c]) / static_cast<double>(cfg.n_samples);
    out[c].step_size = step[c];
    if (static_cast<double>(out[c].divergent) >
        cfg.max_divergent_fraction * static_cast<double>(total))
      throw NumericError("HMC: chain " + std::to_string(c) + " diverged on " +
                         std::to_string(out[c].divergent) + " of " + std::to_string(total) +
                         " transitions (final step size " + std::to_string(step[c]) + ")");
  }
  return out;
}

ChainResult hmc_sample(const BatchLogDensity& target, std::span<const double> init,
                       std::uint64_t seed, const HMCConfig& cfg) {
  RowMatrix z0(1, static_cast<Eigen::Index>(init.size()));
  for (std::size_t j = 0; j < init.size(); ++j) z0(0, static_cast<Eigen::Index>(j)) = init[j];
  const std::uint64_t seeds[1] = {seed};
  return std::move(hmc_sample_batch(target, z0, seeds, cfg).front());
}

}  // namespace bgm
