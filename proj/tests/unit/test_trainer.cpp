#include "bgm/checkpoint.hpp"
#include "bgm/trainer.hpp"
#include "checks.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace bgm;

namespace {

RowMatrix random_matrix(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
  RowMatrix m(rows, cols);
  fill_normal(rng, std::span<double>(m.data(), static_cast<std::size_t>(m.size())));
  return m;
}

// Low-rank data with noise: rows = latent * loadings + 0.1 noise.
RowMatrix low_rank_data(std::uint64_t seed, Eigen::Index n, Eigen::Index p, Eigen::Index k) {
  Rng rng(seed);
  const RowMatrix z = random_matrix(rng, n, k), a = random_matrix(rng, k, p);
  return z * a + 0.1 * random_matrix(rng, n, p);
}

TrainConfig small_config(std::uint64_t seed) {
  TrainConfig cfg;
  cfg.hidden = {8, 8};
  cfg.latent_dim = 2;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("latent log-posterior of the zero network") {
  const DenseNet net(1, {4}, 1);
  const std::vector<double> theta(net.num_params(), 0.0);
  const LatentPosterior lp =
      latent_log_posterior(std::vector<double>{0.0}, std::vector<double>{0.0}, theta, net, 1e-4);
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  // Decoder variance is softplus(0) plus the floor.
  const double expect = -half_log_2pi - half_log_2pi - 0.5 * std::log(std::log(2.0) + 1e-4);
  CHECK(lp.value == doctest::Approx(expect).epsilon(1e-12));
  CHECK(lp.value == doctest::Approx(-1.6546928).epsilon(1e-7));
  CHECK(lp.grad_z[0] == 0.0);
}

TEST_CASE("latent log-posterior gradient matches finite differences") {
  for (std::uint64_t s = 1; s <= 20; ++s) {
    CAPTURE(s);
    CHECK(checks::check_latent_log_posterior(s) <= 1e-4);
  }
}

TEST_CASE("latent step touches only the batch rows") {
  const DenseNet net(2, {5}, 3);
  Rng rng(1);
  std::vector<double> theta(net.num_params());
  fill_normal(rng, theta);
  const RowMatrix data = random_matrix(rng, 6, 3);
  LatentTable table = LatentTable::from(random_matrix(rng, 6, 2));
  const RowMatrix before = table.z;

  update_latent_batch({}, data, table, theta, net, 1e-4, 0.1);
  CHECK(table.z == before);

  const std::vector<std::size_t> batch{1, 4};
  update_latent_batch(batch, data, table, theta, net, 1e-4, 0.1);
  for (Eigen::Index i = 0; i < 6; ++i) {
    if (i == 1 || i == 4) {
      CHECK(table.z.row(i) != before.row(i));
      CHECK(table.t[static_cast<std::size_t>(i)] == 1);
    } else {
      CHECK(table.z.row(i) == before.row(i));
      CHECK(table.t[static_cast<std::size_t>(i)] == 0);
    }
  }
  const std::vector<std::size_t> bad{7};
  CHECK_THROWS(update_latent_batch(bad, data, table, theta, net, 1e-4, 0.1));
}

TEST_CASE("phi step with zero learning rate leaves the posterior unchanged") {
  const DenseNet net(2, {5}, 3);
  Rng rng(2);
  std::vector<double> mu(net.num_params());
  fill_normal(rng, mu);
  VariationalParams vp = make_variational(mu, 0.01);
  const VariationalParams before = vp;
  const RowMatrix data = random_matrix(rng, 6, 3);
  const LatentTable table = LatentTable::from(random_matrix(rng, 6, 2));
  PhiOptimizer opt(net.num_params(), 0.0);
  DecoderConfig dec;
  const ThetaNoise noise = draw_theta_noise(net, dec, 3, rng);
  const std::vector<std::size_t> batch{0, 2, 5};
  update_phi_batch(batch, data, table, vp, opt, net, dec, noise);
  CHECK(vp.mu == before.mu);
  CHECK(vp.rho == before.rho);
}

TEST_CASE("warm start recovers an orthogonal map") {
  Rng rng(4);
  const Eigen::Index n = 200, p = 4;
  // Independent scores with distinct scales, rotated by a random orthogonal matrix.
  RowMatrix scores = random_matrix(rng, n, p);
  for (Eigen::Index j = 0; j < p; ++j) scores.col(j) *= 4.0 - static_cast<double>(j);
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd(random_matrix(rng, p, p)));
  const Eigen::MatrixXd q = qr.householderQ();
  const RowMatrix data = scores * q.transpose();

  TrainConfig cfg;
  cfg.latent_dim = static_cast<std::size_t>(p);
  const WarmStart ws = warm_start(data, cfg);
  CHECK(ws.warnings.empty());
  const RowMatrix& z = ws.latents.z;
  for (Eigen::Index j = 0; j < p; ++j) {
    const Vector c = z.col(j).array() - z.col(j).mean();
    CHECK(c.squaredNorm() / static_cast<double>(n - 1) == doctest::Approx(1.0).epsilon(1e-6));
  }
  // Every data column lies in the span of the latents.
  const RowMatrix centered = data.rowwise() - data.colwise().mean();
  const Eigen::MatrixXd zc = z.rowwise() - z.colwise().mean();
  const Eigen::MatrixXd fit = zc * zc.colPivHouseholderQr().solve(Eigen::MatrixXd(centered));
  CHECK((fit - centered).norm() / centered.norm() < 1e-10);
}

TEST_CASE("warm start ignores constant columns and pads a rank-deficient basis") {
  Rng rng(5);
  RowMatrix base = random_matrix(rng, 50, 3);
  RowMatrix with_const(50, 4);
  with_const << base, RowMatrix::Constant(50, 1, 7.0);
  TrainConfig cfg;
  cfg.latent_dim = 3;
  const WarmStart a = warm_start(base, cfg), b = warm_start(with_const, cfg);
  CHECK((a.latents.z - b.latents.z).cwiseAbs().maxCoeff() < 1e-9);

  RowMatrix rank_two(50, 3);
  rank_two << base.leftCols(2), base.col(0) + base.col(1);
  const WarmStart c = warm_start(rank_two, cfg);
  REQUIRE(c.warnings.size() == 1);
  CHECK(c.latents.z.col(2).isZero(0.0));
}

TEST_CASE("epochs = 0 returns the warm-start state") {
  const RowMatrix data = low_rank_data(1, 64, 5, 2);
  TrainConfig cfg = small_config(3);
  cfg.epochs = 0;
  const TrainResult r = train(data, cfg);
  const WarmStart ws = warm_start(data, cfg);
  CHECK(r.latents.z == ws.latents.z);
  CHECK(r.model.vp.mu == ws.vp.mu);
  CHECK(r.model.vp.rho == ws.vp.rho);
  CHECK(r.trace.epochs.empty());
  CHECK(std::isfinite(r.trace.initial.objective));
}

TEST_CASE("training is deterministic for a fixed seed") {
  const RowMatrix data = low_rank_data(2, 80, 5, 2);
  for (bool flipout : {false, true}) {
    TrainConfig cfg = small_config(11);
    cfg.decoder.flipout = flipout;
    const TrainResult a = train(data, cfg), b = train(data, cfg);
    CHECK(a.model.vp.mu == b.model.vp.mu);
    CHECK(a.model.vp.rho == b.model.vp.rho);
    CHECK(a.latents.z == b.latents.z);
    REQUIRE(a.trace.epochs.size() == 3);
    for (std::size_t e = 0; e < 3; ++e) CHECK(a.trace.epochs[e].objective == b.trace.epochs[e].objective);
    cfg.seed = 12;
    CHECK(train(data, cfg).model.vp.mu != a.model.vp.mu);
  }
}

TEST_CASE("training raises the objective on low-rank data") {
  const RowMatrix data = low_rank_data(3, 400, 6, 2);
  TrainConfig cfg = small_config(1);
  cfg.hidden = {32, 32};
  cfg.epochs = 40;
  const TrainResult r = train(data, cfg);
  CHECK(r.trace.epochs.back().objective > r.trace.initial.objective);
}

TEST_CASE("map mode trains without touching rho") {
  const RowMatrix data = low_rank_data(4, 64, 4, 2);
  TrainConfig cfg = small_config(2);
  cfg.decoder.map_mode = true;
  const TrainResult r = train(data, cfg);
  CHECK(r.model.vp.rho == warm_start(data, cfg).vp.rho);
}

TEST_CASE("pretraining moves mu and z before the variational phase") {
  const RowMatrix data = low_rank_data(4, 64, 4, 2);
  TrainConfig cfg = small_config(2);
  cfg.epochs = 0;
  cfg.pretrain_epochs = 2;
  const TrainResult r = train(data, cfg);
  const WarmStart ws = warm_start(data, cfg);
  CHECK(r.model.vp.rho == ws.vp.rho);
  CHECK(r.model.vp.mu != ws.vp.mu);
  CHECK(r.latents.z != ws.latents.z);
  CHECK(r.trace.epochs.empty());
  CHECK(r.model.vp.mu == train(data, cfg).model.vp.mu);

  cfg.epochs = 2;
  const TrainResult full = train(data, cfg);
  CHECK(full.trace.epochs.size() == 2);
  CHECK(full.model.vp.rho != ws.vp.rho);
}

TEST_CASE("a diverging run aborts with the last completed state") {
  const RowMatrix data = low_rank_data(5, 64, 4, 2);
  TrainConfig cfg = small_config(3);
  cfg.lr_z = 1e200;
  try {
    train(data, cfg);
    FAIL("expected TrainingAborted");
  } catch (const TrainingAborted& e) {
    CHECK(e.last_good().trace.epochs.empty());
    CHECK(e.last_good().latents.z == warm_start(data, cfg).latents.z);
  }
}

TEST_CASE("invalid configuration is rejected") {
  const RowMatrix data = low_rank_data(6, 20, 3, 1);
  TrainConfig cfg = small_config(1);
  cfg.batch_size = 0;
  CHECK_THROWS_AS(train(data, cfg), ConfigError);
  cfg = small_config(1);
  cfg.lr_schedule = "cosine";
  CHECK_THROWS_AS(train(data, cfg), ConfigError);
  RowMatrix bad = data;
  bad(3, 1) = std::nan("");
  CHECK_THROWS_AS(train(bad, small_config(1)), InputError);
}

TEST_CASE("checkpoint round trip is exact") {
  const RowMatrix data = low_rank_data(7, 40, 4, 2);
  TrainConfig cfg = small_config(5);
  cfg.epochs = 1;
  const TrainResult r = train(data, cfg);
  Checkpoint ck{r.model, r.latents.z, fit_column_stats(data, {"a", "b", "c", "d"}), {{"seed", 5}}, "now"};
  const std::string bytes = encode_checkpoint(ck);
  const Checkpoint back = decode_checkpoint(bytes);
  CHECK(back.model.vp.mu == r.model.vp.mu);
  CHECK(back.model.vp.rho == r.model.vp.rho);
  CHECK(back.latents == r.latents.z);
  CHECK(back.stats.means == ck.stats.means);
  CHECK(back.stats.stds == ck.stats.stds);
  CHECK(back.stats.names == ck.stats.names);
  CHECK(back.model.net.layer_dims() == r.model.net.layer_dims());
  CHECK(back.model.decoder.variance_floor == r.model.decoder.variance_floor);
  CHECK(checkpoint_payload(encode_checkpoint(back)) == checkpoint_payload(bytes));

  ck.created = "later";
  CHECK(checkpoint_payload(encode_checkpoint(ck)) == checkpoint_payload(bytes));
  CHECK_THROWS(decode_checkpoint("not a checkpoint"));
  CHECK_THROWS(decode_checkpoint(bytes.substr(0, bytes.size() - 8)));
}
