#include "bgm/baselines.hpp"
#include "bgm/benchmark.hpp"
#include "bgm/conformal.hpp"
#include "bgm/kernel_score.hpp"
#include "bgm/metrics.hpp"
#include "bgm/simulation.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

using namespace bgm;

TEST_CASE("simulation is deterministic") {
  const SimulationSpec spec{3, 6, 50, 9};
  const SimulationData a = simulate(spec), b = simulate(spec);
  CHECK(a.v == b.v);
  CHECK(a.r == b.r);
  CHECK(a.truth.a == b.truth.a);
  CHECK(a.truth.w == b.truth.w);
  CHECK(a.truth.u == b.truth.u);
  CHECK(a.joint().cols() == 7);
  CHECK(a.joint().col(6) == a.r);
  CHECK(simulate(SimulationSpec{3, 6, 50, 10}).v != a.v);
}

TEST_CASE("simulated moments") {
  const SimulationData s = simulate(SimulationSpec{4, 5, 40000, 2});
  const RowMatrix& a = s.truth.a;
  const Eigen::MatrixXd expect = 0.04 * Eigen::MatrixXd(a * a.transpose()) + 0.01 * Eigen::MatrixXd::Identity(5, 5);
  const RowMatrix c = s.v.rowwise() - s.v.colwise().mean();
  const Eigen::MatrixXd cov = Eigen::MatrixXd(c.transpose() * c) / (s.v.rows() - 1.0);
  CHECK((cov - expect).cwiseAbs().maxCoeff() < 0.01);
  CHECK(std::abs(s.r.mean()) < 0.03);
  const RowMatrix zc = s.z.rowwise() - s.z.colwise().mean();
  const Eigen::MatrixXd zcov = Eigen::MatrixXd(zc.transpose() * zc) / (s.z.rows() - 1.0);
  CHECK((zcov - Eigen::MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() < 0.03);
}

TEST_CASE("response noise limits") {
  const Vector u = Vector::Constant(2, -1000.0);
  CHECK(response_sd(std::vector<double>{1.0, 1.0}, u) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(response_sd(std::vector<double>{0.0, 0.0}, u) == doctest::Approx(0.35).epsilon(1e-12));
  CHECK(response_sd(std::vector<double>{-1.0, -1.0}, u) == doctest::Approx(0.6).epsilon(1e-12));
}

TEST_CASE("oracle posterior with orthonormal loadings") {
  Rng rng(1);
  RowMatrix g(6, 3);
  fill_normal(rng, std::span<double>(g.data(), 18));
  const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(Eigen::MatrixXd(g)).householderQ();
  const RowMatrix a = q.leftCols(3);
  const OracleModel o = OracleModel::from(a);
  CHECK((o.posterior_cov - 0.2 * Eigen::MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() < 1e-12);
  const std::vector<double> v{0.3, -1.0, 0.2, 0.0, 0.5, 1.5};
  const ConditionalGaussian post = oracle_posterior_z(v, o);
  const Vector expect = 4.0 * a.transpose() * Eigen::Map<const Vector>(v.data(), 6);
  CHECK((post.mean - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(oracle_posterior_z(std::vector<double>(6, 0.0), o).mean.isZero(0.0));
}

TEST_CASE("oracle interval in the homoscedastic case") {
  SimulationTruth t;
  t.a = RowMatrix::Identity(2, 2);
  t.w = Vector::Zero(2);
  t.u = Vector::Zero(2);
  const OracleModel o = OracleModel::from(t.a);
  const OracleInterval iv = oracle_interval(std::vector<double>{0.4, -0.1}, o, t, 0.05, 40000, 3);
  // R = N(0, 0.35^2) whatever Z is.
  CHECK(iv.lower == doctest::Approx(-1.959964 * 0.35).epsilon(0.02));
  CHECK(iv.upper == doctest::Approx(1.959964 * 0.35).epsilon(0.02));
  CHECK(iv.length == doctest::Approx(iv.upper - iv.lower).epsilon(1e-14));
}

TEST_CASE("oracle intervals cover fresh draws") {
  const SimulationTruth truth = draw_truth(SimulationSpec{10, 49, 10, 4});
  const SimulationData fresh = simulate_from(truth, 1000, 77);
  const OracleModel o = OracleModel::from(truth.a);
  std::size_t hit = 0;
  for (Eigen::Index i = 0; i < 1000; ++i) {
    const OracleInterval iv =
        oracle_interval(std::span<const double>(fresh.v.row(i).data(), 49), o, truth, 0.05, 4000, mix_seed(5, i));
    hit += fresh.r[i] >= iv.lower && fresh.r[i] <= iv.upper;
  }
  CHECK(std::abs(hit / 1000.0 - 0.95) < 0.025);
}

TEST_CASE("correlations") {
  const std::vector<double> x{1, 2, 3, 4, 5}, y{2, 4, 6, 8, 10}, cube{1, 8, 27, 64, 125};
  CHECK(pearson(x, y) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(pearson(x, std::vector<double>{5, 4, 3, 2, 1}) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(pearson(x, cube) < 1.0);
  CHECK(spearman(x, cube) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(std::isnan(pearson(x, std::vector<double>(5, 3.0))));
  CHECK(std::isnan(spearman(std::vector<double>(5, 1.0), x)));
  // Widths that differ only by rounding count as constant.
  const std::vector<double> w{1.3 + 1e-16, 1.3, 1.3 - 2e-16, 1.3, 1.3};
  CHECK(std::isnan(pearson(x, w)));
  CHECK(midranks(std::vector<double>{3.0, 1.0, 3.0, 2.0}) == std::vector<double>{3.5, 1.0, 3.5, 2.0});
  // Hand value: x = (1,2,3), y = (1,3,2) -> r = 0.5.
  CHECK(pearson(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}) == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("metric report") {
  const std::vector<double> t{0.1, -0.4, 1.0, 2.0}, lo{-1, -1, 0, 1}, hi{1, 1, 2, 3}, orc{2, 2.2, 1.9, 2.5};
  MetricsReport m = compute_metrics(t, lo, hi, t, orc);
  CHECK(m.mse == 0.0);
  CHECK(m.pcc == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(m.coverage == 1.0);
  CHECK(m.avg_pi_length == 2.0);
  CHECK(std::isnan(m.pcc_len));
  CHECK(std::isnan(m.scc_len));

  const std::vector<double> pt{0, 0, 0, 0}, hi2{0.2, 1.0, 2.0, 3.5};
  m = compute_metrics(pt, std::vector<double>(4, 0.0), hi2, t, orc);
  CHECK(m.mse == doctest::Approx((0.01 + 0.16 + 1.0 + 4.0) / 4).epsilon(1e-14));
  CHECK(m.coverage == 0.75);
  CHECK(m.avg_pi_length == doctest::Approx(6.7 / 4).epsilon(1e-14));
  CHECK(m.pcc_len == doctest::Approx(pearson(hi2, orc)).epsilon(1e-14));

  const MetricsReport pm = point_metrics(pt, t);
  CHECK(std::isnan(pm.pcc));
  CHECK(std::isnan(pm.coverage));
}

TEST_CASE("conformal quantile") {
  std::vector<double> r(100);
  std::iota(r.begin(), r.end(), 1.0);
  std::reverse(r.begin(), r.end());
  CHECK(conformal_quantile(r, 0.05) == 96.0);
  CHECK(std::isinf(conformal_quantile(r, 0.005)));
  CHECK(conformal_quantile(r, 0.5) == 51.0);
  CHECK_THROWS_AS(conformal_quantile(std::vector<double>{}, 0.1), ConfigError);
}

TEST_CASE("split and locally weighted CP") {
  Rng rng(4);
  std::vector<double> cp(200), ct(200), tp(50), cs(200, 2.5), ts(50, 2.5);
  fill_normal(rng, cp);
  fill_normal(rng, ct);
  fill_normal(rng, tp);
  const ConformalIntervals s = split_cp(cp, ct, tp, 0.1);
  const ConformalIntervals l = lw_cp(cp, ct, cs, tp, ts, 0.1);
  for (std::size_t i = 0; i < 50; ++i) {
    CHECK(l.lower[i] == doctest::Approx(s.lower[i]).epsilon(1e-14));
    CHECK(l.upper[i] == doctest::Approx(s.upper[i]).epsilon(1e-14));
    CHECK(s.upper[i] - tp[i] == doctest::Approx(s.quantile).epsilon(1e-14));
  }
  cs[7] = 0.0;
  CHECK_THROWS_AS(lw_cp(cp, ct, cs, tp, ts, 0.1), ConfigError);
}

TEST_CASE("kNN local scale") {
  RowMatrix f(4, 1);
  f << 0.0, 1.0, 10.0, 11.0;
  const KnnScale one(f, std::vector<double>{1.0, 2.0, 3.0, 4.0}, 1);
  CHECK(one(std::vector<double>{10.2}) == 3.0);
  const KnnScale two(f, std::vector<double>{1.0, 2.0, 3.0, 4.0}, 2);
  CHECK(two(std::vector<double>{0.4}) == 1.5);
  const std::vector<double> all = two(f);
  CHECK(all == std::vector<double>{1.5, 1.5, 3.5, 3.5});
}

TEST_CASE("kernel score") {
  const std::vector<double> y{0.5, -1.0};
  RowMatrix at_y(10, 2);
  at_y.rowwise() = Eigen::RowVector2d(0.5, -1.0);
  CHECK(kernel_score(y, at_y, 1.0) == doctest::Approx(0.0).scale(1.0).epsilon(1e-14));
  RowMatrix far = RowMatrix::Constant(10, 2, 100.0);
  CHECK(kernel_score(y, far, 0.5) == doctest::Approx(2.0).epsilon(1e-14));

  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    RowMatrix d(15, 2);
    fill_normal(rng, std::span<double>(d.data(), 30));
    const double v = kernel_score(y, d, 0.3 + 0.2 * t);
    CHECK(v >= 0.0);
    CHECK(v <= 4.0);
  }
  CHECK_THROWS(kernel_score(y, RowMatrix(0, 2), 1.0));

  // V - U = (1 - mean off-diagonal kernel) / N, so N * gap stays flat.
  std::vector<double> scaled;
  for (Eigen::Index n : {10, 100, 1000}) {
    RowMatrix d(n, 2);
    fill_normal(rng, std::span<double>(d.data(), static_cast<std::size_t>(2 * n)));
    scaled.push_back((kernel_score(y, d, 1.0) - kernel_score_u(y, d, 1.0)) * static_cast<double>(n));
  }
  CHECK(scaled[1] == doctest::Approx(scaled[0]).epsilon(0.3));
  CHECK(scaled[2] == doctest::Approx(scaled[1]).epsilon(0.1));

  RowMatrix two(3, 1);
  two << 0.0, 3.0, 4.0;
  CHECK(median_heuristic_bandwidth(two) == 3.0);
}

TEST_CASE("baselines") {
  Rng rng(6);
  RowMatrix x(300, 3);
  fill_normal(rng, std::span<double>(x.data(), 900));
  std::vector<double> y(300);
  for (Eigen::Index i = 0; i < 300; ++i) y[static_cast<std::size_t>(i)] = 1.5 + 2.0 * x(i, 0) - x(i, 2);
  const LinearRegression lr(x, y);
  CHECK(lr.coefficients()[0] == doctest::Approx(1.5).epsilon(1e-10));
  CHECK(lr.coefficients()[1] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(std::abs(lr.coefficients()[2]) < 1e-10);
  CHECK(lr.predict(x.topRows(1))[0] == doctest::Approx(y[0]).epsilon(1e-10));

  CHECK(column_mean_predict(std::vector<double>{1.0, 2.0, 6.0}, 2) == std::vector<double>{3.0, 3.0});

  std::vector<double> yq(300);
  for (Eigen::Index i = 0; i < 300; ++i) yq[static_cast<std::size_t>(i)] = x(i, 0) * x(i, 0);
  RegressorConfig cfg;
  cfg.hidden = {16, 16};
  cfg.epochs = 60;
  const MlpRegressor mlp(x, yq, cfg);
  CHECK(mlp.final_train_mse() < 0.5);  // variance of x^2 is 2
  const MlpRegressor again(x, yq, cfg);
  CHECK(mlp.predict(x) == again.predict(x));
}

TEST_CASE("benchmark smoke run") {
  BenchmarkConfig cfg;
  cfg.dims = {20};
  cfg.seeds = {1};
  cfg.n = 400;
  cfg.oracle_draws = 1000;
  cfg.max_test_points = 20;
  cfg.train.epochs = 2;
  cfg.train.hidden = {16, 16};
  cfg.inference.hmc.burn_in = 50;
  cfg.inference.hmc.n_samples = 50;
  cfg.regressor.epochs = 2;
  const auto cells = run_benchmark(cfg);
  REQUIRE(cells.size() == 1);
  REQUIRE(cells[0].rows.size() == kBenchmarkMethods.size());
  for (std::size_t i = 0; i < kBenchmarkMethods.size(); ++i) {
    CHECK(cells[0].rows[i].method == kBenchmarkMethods[i]);
    CHECK(cells[0].rows[i].status == "ok");
  }
  CHECK(cells[0].oracle_lengths.size() == 20);
  CHECK(cells[0].trace.epochs.size() == 2);

  const auto dir = std::filesystem::temp_directory_path() / "bgm_bench_test";
  std::filesystem::create_directories(dir);
  const std::string path = (dir / "report.csv").string();
  write_report_csv(path, cells);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "method,p,seed,status,mse,pcc,scc,coverage,avg_pi_length,pcc_len,scc_len,message");
  std::size_t lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == 5);

  const nlohmann::json j = summarize_benchmark(cfg, cells);
  const nlohmann::json round = nlohmann::json::parse(j.dump());
  CHECK(round["methods"].size() == 5);
  CHECK(round["cells"][0]["p"] == 20);
  std::filesystem::remove_all(dir);
}
