#include "bgm/trainer.hpp"

#include "bgm/kernels.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <string>

namespace bgm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454835606594728112;

void gather_rows(const RowMatrix& src, std::span<const std::size_t> idx, RowMatrix& dst) {
  dst.resize(static_cast<Eigen::Index>(idx.size()), src.cols());
  for (std::size_t i = 0; i < idx.size(); ++i)
    dst.row(static_cast<Eigen::Index>(i)) = src.row(static_cast<Eigen::Index>(idx[i]));
}

void check_indices(std::span<const std::size_t> batch, std::size_t n) {
  for (std::size_t i : batch)
    if (i >= n)
      throw ConfigError("batch index " + std::to_string(i) + " out of range for " +
                        std::to_string(n) + " rows");
}
}  // namespace

void TrainConfig::validate() const {
  if (batch_size == 0) throw ConfigError("batch_size must be at least 1");
  if (!(lr_z >= 0.0) || !(lr_phi >= 0.0)) throw ConfigError("learning rates must be non-negative");
  if (!(decoder.variance_floor > 0.0)) throw ConfigError("variance_floor must be positive");
  if (!(decoder.prior.theta_scale > 0.0)) throw ConfigError("theta prior scale must be positive");
  if (decoder.n_theta_samples == 0) throw ConfigError("n_theta_samples must be at least 1");
  if (!(initial_sigma > 0.0)) throw ConfigError("initial_sigma must be positive");
  if (lr_schedule != "constant" && lr_schedule != "inv_sqrt")
    throw ConfigError("lr_schedule must be 'constant' or 'inv_sqrt'");
}

LatentTable LatentTable::from(RowMatrix z) {
  LatentTable t;
  t.m = RowMatrix::Zero(z.rows(), z.cols());
  t.v = RowMatrix::Zero(z.rows(), z.cols());
  t.t.assign(static_cast<std::size_t>(z.rows()), 0);
  t.z = std::move(z);
  return t;
}

double standard_normal_log_density(std::span<const double> z) {
  double sq = 0.0;
  for (double v : z) sq += v * v;
  return -0.5 * (static_cast<double>(z.size()) * kLog2Pi + sq);
}

LatentPosterior latent_log_posterior(std::span<const double> x, std::span<const double> z,
                                     std::span<const double> theta, const DenseNet& net,
                                     double variance_floor) {
  if (x.size() != net.output_dim() || z.size() != net.input_dim())
    throw ConfigError("latent_log_posterior: dimension mismatch");
  NetCache cache;
  net.forward(theta, z.data(), 1, cache);
  const std::size_t p = net.output_dim();
  std::vector<double> dmu(p), dsig(p);
  LatentPosterior out;
  out.value = standard_normal_log_density(z) +
              batch_log_likelihood(x.data(), cache, p, variance_floor, 1.0, {}, dmu.data(),
                                   dsig.data());
  out.grad_z = Vector::Zero(static_cast<Eigen::Index>(z.size()));
  net.backward(theta, cache, dmu.data(), dsig.data(), out.grad_z.data(), {});
  for (std::size_t j = 0; j < z.size(); ++j) out.grad_z[static_cast<Eigen::Index>(j)] -= z[j];
  return out;
}

double update_latent_batch(std::span<const std::size_t> batch, const RowMatrix& data,
                           LatentTable& latents, std::span<const double> theta,
                           const DenseNet& net, double variance_floor, double lr_z,
                           const Flipout* flipout, LatentStepWorkspace* workspace) {
  if (batch.empty()) return 0.0;
  check_indices(batch, latents.rows());
  check_indices(batch, static_cast<std::size_t>(data.rows()));
  LatentStepWorkspace local;
  LatentStepWorkspace& ws = workspace ? *workspace : local;
  const std::size_t m = batch.size();
  const std::size_t p = net.output_dim();
  const std::size_t dz = net.input_dim();
  gather_rows(data, batch, ws.x);
  gather_rows(latents.z, batch, ws.z);
  ws.grad_z.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(dz));
  ws.dmu.resize(m * p);
  ws.dsigma2.resize(m * p);

  net.forward(theta, ws.z.data(), m, ws.cache, flipout);
  batch_log_likelihood(ws.x.data(), ws.cache, p, variance_floor, 1.0, {}, ws.dmu.data(),
                       ws.dsigma2.data());
  net.backward(theta, ws.cache, ws.dmu.data(), ws.dsigma2.data(), ws.grad_z.data(), {}, flipout);
  ws.grad_z -= ws.z;

  double sq = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const auto r = static_cast<Eigen::Index>(batch[i]);
    const auto gi = static_cast<Eigen::Index>(i);
    sq += ws.grad_z.row(gi).squaredNorm();
    adam_step(std::span<double>(latents.m.row(r).data(), dz),
              std::span<double>(latents.v.row(r).data(), dz), latents.t[batch[i]], lr_z,
              std::span<double>(latents.z.row(r).data(), dz),
              std::span<const double>(ws.grad_z.row(gi).data(), dz), true);
  }
  return sq / static_cast<double>(m);
}

ElboResult update_phi_batch(std::span<const std::size_t> batch, const RowMatrix& data,
                            const LatentTable& latents, VariationalParams& vp,
                            PhiOptimizer& optimizer, const DenseNet& net,
                            const DecoderConfig& decoder, const ThetaNoise& noise,
                            ElboWorkspace* workspace) {
  check_indices(batch, latents.rows());
  check_indices(batch, static_cast<std::size_t>(data.rows()));
  RowMatrix xb, zb;
  gather_rows(data, batch, xb);
  gather_rows(latents.z, batch, zb);
  ElboResult e = elbo_minibatch(xb, zb, vp, net, decoder, static_cast<std::size_t>(data.rows()),
                                noise, workspace);
  adam_step(optimizer.mu, vp.mu, e.grad_mu, true);
  if (!decoder.map_mode) adam_step(optimizer.rho, vp.rho, e.grad_rho, true);
  return e;
}

WarmStart warm_start(const RowMatrix& data, const TrainConfig& cfg) {
  const auto n = static_cast<std::size_t>(data.rows());
  const auto p = static_cast<std::size_t>(data.cols());
  const std::size_t dz = cfg.resolved_latent_dim(p);
  if (n < dz || n < 2) throw ConfigError("warm_start: need at least latent_dim (and 2) rows");

  WarmStart out;
  RowMatrix z = RowMatrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(dz));
  if (cfg.warm_start) {
    Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
    Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinU);
    const Vector& s = svd.singularValues();
    const double tol = s.size() > 0 ? s[0] * static_cast<double>(std::max(n, p)) * 1e-12 : 0.0;
    std::size_t rank = 0;
    for (Eigen::Index k = 0; k < s.size() && static_cast<std::size_t>(k) < dz; ++k) {
      if (!(s[k] > tol)) break;
      Vector col = svd.matrixU().col(k) * s[k];
      col.array() -= col.mean();
      const double sd = std::sqrt(col.squaredNorm() / static_cast<double>(n - 1));
      // Fix the sign so the largest-magnitude entry is positive.
      Eigen::Index arg = 0;
      col.cwiseAbs().maxCoeff(&arg);
      const double sign = col[arg] < 0.0 ? -1.0 : 1.0;
      z.col(k) = col * (sign / sd);
      ++rank;
    }
    if (rank < dz)
      out.warnings.push_back("warm_start: data has rank " + std::to_string(rank) + " < latent_dim " +
                             std::to_string(dz) + "; padding latent dimensions with zeros");
  } else {
    Rng rng(mix_seed(cfg.seed, 5));
    fill_normal(rng, std::span<double>(z.data(), static_cast<std::size_t>(z.size())));
  }
  out.latents = LatentTable::from(std::move(z));

  DenseNet net(dz, cfg.hidden, p);
  Rng init_rng(mix_seed(cfg.seed, 1));
  out.vp = make_variational(net.initial_params(init_rng), cfg.initial_sigma);
  return out;
}

namespace {

struct Diagnostic {
  std::vector<std::size_t> subset;
  std::vector<double> eps;
  RowMatrix x;
  ElboWorkspace elbo_ws;
  LatentStepWorkspace latent_ws;
};

TraceRow evaluate_diagnostic(Diagnostic& diag, const RowMatrix& data, const LatentTable& latents,
                             const GenerativeModel& model) {
  const std::size_t n = static_cast<std::size_t>(data.rows());
  const DenseNet& net = model.net;
  const std::size_t p = net.output_dim();
  RowMatrix zs;
  gather_rows(latents.z, diag.subset, zs);
  DecoderConfig dcfg = model.decoder;
  dcfg.flipout = false;
  dcfg.n_theta_samples = 1;
  ThetaNoise noise;
  noise.eps = diag.eps;
  const ElboResult e = elbo_minibatch(diag.x, zs, model.vp, net, dcfg, n, noise, &diag.elbo_ws);

  TraceRow row;
  const double nd = static_cast<double>(n);
  double prior = 0.0;
  for (Eigen::Index i = 0; i < zs.rows(); ++i)
    prior += standard_normal_log_density(std::span<const double>(zs.row(i).data(), net.input_dim()));
  prior /= static_cast<double>(zs.rows());
  row.objective = e.value / nd + prior;
  double gphi = 0.0;
  for (double g : e.grad_mu) gphi += g * g;
  for (double g : e.grad_rho) gphi += g * g;
  row.grad_sq_phi = gphi / (nd * nd);

  const std::vector<double> theta = sample_theta(model.vp, diag.eps, dcfg.map_mode);
  LatentStepWorkspace& ws = diag.latent_ws;
  const std::size_t m = diag.subset.size();
  ws.grad_z.resize(zs.rows(), zs.cols());
  ws.dmu.resize(m * p);
  ws.dsigma2.resize(m * p);
  net.forward(theta, zs.data(), m, ws.cache);
  batch_log_likelihood(diag.x.data(), ws.cache, p, dcfg.variance_floor, 1.0, {}, ws.dmu.data(),
                       ws.dsigma2.data());
  net.backward(theta, ws.cache, ws.dmu.data(), ws.dsigma2.data(), ws.grad_z.data(), {});
  ws.grad_z -= zs;
  row.grad_sq_z = ws.grad_z.rowwise().squaredNorm().mean();
  return row;
}

bool all_finite(const RowMatrix& m) { return m.allFinite(); }

}  // namespace

TrainResult train(const RowMatrix& data, const TrainConfig& cfg, const EpochCallback& on_checkpoint) {
  cfg.validate();
  const auto n = static_cast<std::size_t>(data.rows());
  const auto p = static_cast<std::size_t>(data.cols());
  if (n == 0 || p == 0) throw ConfigError("train: empty data");
  if (!data.allFinite()) throw InputError("train: data contains non-finite values");
  const std::size_t dz = cfg.resolved_latent_dim(p);

  WarmStart init = warm_start(data, cfg);
  for (const std::string& w : init.warnings) std::cerr << "warning: " << w << '\n';

  TrainResult state{GenerativeModel{DenseNet(dz, cfg.hidden, p), std::move(init.vp), cfg.decoder},
                    std::move(init.latents), {}};
  const DenseNet& net = state.model.net;
  const std::size_t d = net.num_params();
  const DecoderConfig& dec = state.model.decoder;
  PhiOptimizer opt(d, cfg.lr_phi);

  Rng shuffle_rng(mix_seed(cfg.seed, 2));
  Rng noise_rng(mix_seed(cfg.seed, 3));
  Rng diag_rng(mix_seed(cfg.seed, 4));

  Diagnostic diag;
  diag.subset.resize(n);
  std::iota(diag.subset.begin(), diag.subset.end(), std::size_t{0});
  if (n > cfg.diagnostic_rows && cfg.diagnostic_rows > 0) {
    std::shuffle(diag.subset.begin(), diag.subset.end(), diag_rng);
    diag.subset.resize(cfg.diagnostic_rows);
    std::sort(diag.subset.begin(), diag.subset.end());
  }
  if (!dec.map_mode) {
    diag.eps.resize(d);
    fill_normal(diag_rng, diag.eps);
  }
  gather_rows(data, diag.subset, diag.x);


  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  LatentStepWorkspace latent_ws;
  ElboWorkspace elbo_ws;
  std::vector<double> sigma(d), theta(d), delta(d);
  const kernels::KernelTable& k = kernels::active();

  // One pass over shuffled minibatches under decoder settings dc.
  const auto sweep = [&](const DecoderConfig& dc, double lr_z) {
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const std::size_t m = std::min(cfg.batch_size, n - start);
      std::span<const std::size_t> batch(perm.data() + start, m);
      const ThetaNoise noise = draw_theta_noise(net, dc, m, noise_rng);

      // theta for the latent step is drawn from the current q before phi moves.
      std::span<const double> params;
      Flipout flip;
      const Flipout* flip_ptr = nullptr;
      if (dc.map_mode) {
        params = state.model.vp.mu;
      } else {
        for (std::size_t i = 0; i < d; ++i) sigma[i] = softplus(state.model.vp.rho[i]);
        if (dc.flipout) {
          for (std::size_t i = 0; i < d; ++i) delta[i] = sigma[i] * noise.eps[i];
          flip.delta = delta;
          flip.in_signs = noise.signs[0].in_signs;
          flip.out_signs = noise.signs[0].out_signs;
          flip_ptr = &flip;
          params = state.model.vp.mu;
        } else {
          k.scaled_add(state.model.vp.mu.data(), sigma.data(), noise.eps.data(), d, theta.data());
          params = theta;
        }
      }
      update_latent_batch(batch, data, state.latents, params, net, dec.variance_floor, lr_z,
                          flip_ptr, &latent_ws);
      const ElboResult e = update_phi_batch(batch, data, state.latents, state.model.vp, opt, net,
                                            dc, noise, &elbo_ws);
      if (!std::isfinite(e.value)) throw NumericError("non-finite minibatch objective");
    }
  };

  // Deterministic-decoder epochs that initialize mu_phi and Z before the
  // variational phase.
  if (cfg.pretrain_epochs > 0) {
    DecoderConfig pre = dec;
    pre.map_mode = true;
    for (std::size_t epoch = 0; epoch < cfg.pretrain_epochs; ++epoch) {
      std::shuffle(perm.begin(), perm.end(), shuffle_rng);
      try {
        sweep(pre, cfg.lr_z);
      } catch (const NumericError& e) {
        throw TrainingAborted("pretraining epoch " + std::to_string(epoch + 1) + ": " + e.what(), state);
      }
    }
  }

  state.trace.initial = evaluate_diagnostic(diag, data, state.latents, state.model);
  TrainResult last_good = state;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double factor = cfg.lr_schedule == "inv_sqrt" ? 1.0 / std::sqrt(static_cast<double>(epoch + 1)) : 1.0;
    opt.mu.lr = opt.rho.lr = cfg.lr_phi * factor;
    const double lr_z = cfg.lr_z * factor;
    std::shuffle(perm.begin(), perm.end(), shuffle_rng);

    try {
      sweep(dec, lr_z);
    } catch (const NumericError& e) {
      throw TrainingAborted("epoch " + std::to_string(epoch + 1) + ": " + e.what(), std::move(last_good));
    }
    if (!all_finite(state.latents.z))
      throw TrainingAborted("non-finite latent values at epoch " + std::to_string(epoch + 1),
                            std::move(last_good));

    TraceRow row = evaluate_diagnostic(diag, data, state.latents, state.model);
    row.epoch = epoch + 1;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!std::isfinite(row.objective) || !std::isfinite(row.grad_sq_phi) ||
        !std::isfinite(row.grad_sq_z))
      throw TrainingAborted("non-finite diagnostic objective at epoch " + std::to_string(epoch + 1),
                            std::move(last_good));
    state.trace.epochs.push_back(row);
    last_good = state;
    if (on_checkpoint && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
      on_checkpoint(state, epoch + 1);
  }
  return state;
}

}  // namespace bgm
