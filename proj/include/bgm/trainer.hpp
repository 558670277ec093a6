#pragma once

#include "bgm/adam.hpp"
#include "bgm/common.hpp"
#include "bgm/decoder.hpp"
#include "bgm/dense_net.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace bgm {

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t epochs = 500;
  double lr_z = 0.005;
  double lr_phi = 0.005;
  std::size_t latent_dim = 0;  // 0 picks 5 for p <= 100, else 10
  std::vector<std::size_t> hidden{128, 128, 128};
  DecoderConfig decoder;
  double initial_sigma = 1e-3;
  std::uint64_t seed = 0;
  std::size_t checkpoint_every = 0;  // epochs; 0 disables the callback
  std::string lr_schedule = "constant";  // or "inv_sqrt": lr / sqrt(epoch + 1)
  std::size_t diagnostic_rows = 512;
  bool warm_start = true;  // PCA latents; otherwise latents are prior draws
  std::size_t pretrain_epochs = 0;  // MAP epochs on (mu, Z) before the variational phase

  std::size_t resolved_latent_dim(std::size_t p) const {
    return latent_dim != 0 ? latent_dim : (p <= 100 ? 5 : 10);
  }
  void validate() const;
};

// Per-sample latent vectors with their persistent Adam moments.
struct LatentTable {
  RowMatrix z;
  RowMatrix m;
  RowMatrix v;
  std::vector<std::uint64_t> t;

  static LatentTable from(RowMatrix z);
  std::size_t rows() const { return static_cast<std::size_t>(z.rows()); }
};

struct GenerativeModel {
  DenseNet net;
  VariationalParams vp;
  DecoderConfig decoder;
};

struct TraceRow {
  std::size_t epoch = 0;
  double objective = 0.0;    // per-sample objective on the diagnostic subset
  double grad_sq_z = 0.0;    // mean per-sample squared latent gradient
  double grad_sq_phi = 0.0;  // squared gradient of the objective w.r.t. (mu, rho)
  double seconds = 0.0;
  double grad_sq_total(std::size_t n) const { return grad_sq_phi + grad_sq_z / static_cast<double>(n); }
};

struct TrainingTrace {
  TraceRow initial;  // evaluated on the warm-start state, before any update
  std::vector<TraceRow> epochs;
};

struct TrainResult {
  GenerativeModel model;
  LatentTable latents;
  TrainingTrace trace;
};

// Raised when training hits a non-finite objective. Carries the state at the
// end of the last completed epoch.
class TrainingAborted : public std::runtime_error {
 public:
  TrainingAborted(const std::string& what, TrainResult last_good)
      : std::runtime_error(what), last_good_(std::move(last_good)) {}
  const TrainResult& last_good() const { return last_good_; }

 private:
  TrainResult last_good_;
};

struct LatentPosterior {
  double value = 0.0;
  Vector grad_z;
};

// log N(z; 0, I) + log p(x | z, theta) with the floored diagonal decoder,
// and its gradient in z.
LatentPosterior latent_log_posterior(std::span<const double> x, std::span<const double> z,
                                     std::span<const double> theta, const DenseNet& net,
                                     double variance_floor);

double standard_normal_log_density(std::span<const double> z);

struct LatentStepWorkspace {
  NetCache cache;
  RowMatrix x;
  RowMatrix z;
  RowMatrix grad_z;
  std::vector<double> dmu;
  std::vector<double> dsigma2;
};

// One Adam ascent step on the latent log-posterior for each selected row,
// with theta held fixed. Rows outside `batch` are not touched. Returns the
// mean squared gradient norm over the batch.
double update_latent_batch(std::span<const std::size_t> batch, const RowMatrix& data,
                           LatentTable& latents, std::span<const double> theta,
                           const DenseNet& net, double variance_floor, double lr_z,
                           const Flipout* flipout = nullptr,
                           LatentStepWorkspace* workspace = nullptr);

struct PhiOptimizer {
  AdamState mu;
  AdamState rho;
  PhiOptimizer() = default;
  PhiOptimizer(std::size_t d, double lr) : mu(d, lr), rho(d, lr) {}
};

// One Adam ascent step of (mu, rho) on the minibatch ELBO.
ElboResult update_phi_batch(std::span<const std::size_t> batch, const RowMatrix& data,
                            const LatentTable& latents, VariationalParams& vp,
                            PhiOptimizer& optimizer, const DenseNet& net,
                            const DecoderConfig& decoder, const ThetaNoise& noise,
                            ElboWorkspace* workspace = nullptr);

struct WarmStart {
  LatentTable latents;
  VariationalParams vp;
  std::vector<std::string> warnings;
};

// PCA scores of the (centered) data, rescaled to unit sample variance, plus
// Glorot-initialized posterior means with sigma = cfg.initial_sigma.
WarmStart warm_start(const RowMatrix& data, const TrainConfig& cfg);

using EpochCallback = std::function<void(const TrainResult& state, std::size_t epoch)>;

// Alternating updates: per minibatch draw theta from q, ascend the batch
// latents, then ascend (mu, rho). Deterministic for a fixed seed and kernel
// table. Calls on_checkpoint every cfg.checkpoint_every epochs.
TrainResult train(const RowMatrix& data, const TrainConfig& cfg,
                  const EpochCallback& on_checkpoint = {});

}  // namespace bgm
