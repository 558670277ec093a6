#include "bgm/benchmark.hpp"

#include "bgm/conformal.hpp"
#include "bgm/data.hpp"
#include "bgm/simulation.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <memory>
#include <numeric>
#include <sstream>

namespace bgm {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RowMatrix take_rows(const RowMatrix& m, std::span<const std::size_t> idx) {
  RowMatrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(static_cast<Eigen::Index>(idx[i]));
  return out;
}

std::vector<double> take(const Vector& v, std::span<const std::size_t> idx) {
  std::vector<double> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = v[static_cast<Eigen::Index>(idx[i])];
  return out;
}

std::string csv_number(double v) { return std::isfinite(v) ? format_double(v) : (std::isinf(v) ? (v > 0 ? "inf" : "-inf") : ""); }

std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c == '\n' ? ' ' : c;
  }
  return out + "\"";
}

nlohmann::json json_number(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); }

struct CellSplit {
  SimulationData sim;
  std::vector<std::size_t> test;
  std::vector<std::size_t> train;   // everything that is not test
  std::vector<std::size_t> cal;     // leading share of train, for CP
  std::vector<std::size_t> proper;  // rest of train, for the CP predictor
};

CellSplit split_cell(const BenchmarkConfig& cfg, std::size_t p, std::uint64_t seed) {
  CellSplit s{simulate(SimulationSpec{cfg.k, p - 1, cfg.n, seed}), {}, {}, {}, {}};
  std::vector<std::size_t> perm(cfg.n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng split_rng(mix_seed(seed, 21));
  std::shuffle(perm.begin(), perm.end(), split_rng);
  const auto n_test = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.test_fraction * static_cast<double>(cfg.n))));
  s.test.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  s.train.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  const auto n_cal = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(cfg.calibration_fraction * static_cast<double>(s.train.size()))));
  s.cal.assign(s.train.begin(), s.train.begin() + static_cast<std::ptrdiff_t>(n_cal));
  s.proper.assign(s.train.begin() + static_cast<std::ptrdiff_t>(n_cal), s.train.end());
  return s;
}

// The latent width defaults to the simulation's k so the decoder can represent
// every generating factor.
TrainConfig cell_train_config(const BenchmarkConfig& cfg, std::uint64_t seed) {
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  if (tc.latent_dim == 0) tc.latent_dim = cfg.k;
  return tc;
}

}  // namespace

void BenchmarkConfig::validate() const {
  if (dims.empty() || seeds.empty()) throw ConfigError("benchmark: dims and seeds must be nonempty");
  for (std::size_t p : dims)
    if (p < 2) throw ConfigError("benchmark: p must be at least 2");
  if (k == 0 || n < 10) throw ConfigError("benchmark: k must be positive and n at least 10");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("benchmark: alpha must lie in (0, 1)");
  if (!(test_fraction > 0.0 && test_fraction < 1.0) ||
      !(calibration_fraction > 0.0 && calibration_fraction < 1.0))
    throw ConfigError("benchmark: split fractions must lie in (0, 1)");
  if (oracle_draws < 1000) throw ConfigError("benchmark: oracle_draws must be at least 1000");
  train.validate();
  inference.hmc.validate();
}

TrainResult train_cell_model(const BenchmarkConfig& cfg, std::size_t p, std::uint64_t seed) {
  const CellSplit split = split_cell(cfg, p, seed);
  return bgm::train(DataMatrix::fit(take_rows(split.sim.joint(), split.train)).standardized(),
                    cell_train_config(cfg, seed));
}

CellResult run_benchmark_cell(const BenchmarkConfig& cfg, std::size_t p, std::uint64_t seed,
                              const ProgressLog& log) {
  const auto say = [&](const std::string& msg) {
    if (log) log("[p=" + std::to_string(p) + " seed=" + std::to_string(seed) + "] " + msg);
  };
  CellResult cell;
  cell.p = p;
  cell.seed = seed;
  const std::size_t d = p - 1;

  const CellSplit split = split_cell(cfg, p, seed);
  const SimulationData& sim = split.sim;
  const std::vector<std::size_t>& train = split.train;
  const std::vector<std::size_t>& cal = split.cal;
  const std::vector<std::size_t>& proper = split.proper;
  std::vector<std::size_t> test = split.test;
  if (cfg.max_test_points != 0 && test.size() > cfg.max_test_points) test.resize(cfg.max_test_points);

  const RowMatrix v_test = take_rows(sim.v, test);
  cell.truth = take(sim.r, test);
  const std::size_t nt = test.size();

  say("oracle intervals for " + std::to_string(nt) + " test rows");
  const OracleModel oracle = OracleModel::from(sim.truth.a);
  cell.oracle_lengths.resize(nt);
  std::size_t oracle_hits = 0;
  for (std::size_t i = 0; i < nt; ++i) {
    const OracleInterval oi = oracle_interval(
        std::span<const double>(v_test.row(static_cast<Eigen::Index>(i)).data(), d), oracle, sim.truth,
        cfg.alpha, cfg.oracle_draws, mix_seed(mix_seed(seed, 31), test[i]));
    cell.oracle_lengths[i] = oi.length;
    if (cell.truth[i] >= oi.lower && cell.truth[i] <= oi.upper) ++oracle_hits;
  }
  cell.oracle_avg_length = std::accumulate(cell.oracle_lengths.begin(), cell.oracle_lengths.end(), 0.0) / static_cast<double>(nt);
  cell.oracle_coverage = static_cast<double>(oracle_hits) / static_cast<double>(nt);

  const auto run_leg = [&](const std::string& method, const std::function<MetricsReport()>& fn) {
    MethodRow row{method, p, seed, "ok", {}, {}};
    try {
      row.metrics = fn();
    } catch (const std::exception& e) {
      row.status = "failed";
      row.message = e.what();
      say(method + " failed: " + row.message);
    }
    cell.rows.push_back(std::move(row));
  };

  run_leg("BGM", [&] {
    const RowMatrix joint_train = take_rows(sim.joint(), train);
    const DataMatrix data = DataMatrix::fit(joint_train);
    const TrainConfig tc = cell_train_config(cfg, seed);
    say("training BGM on " + std::to_string(train.size()) + " rows");
    auto t0 = std::chrono::steady_clock::now();
    const TrainResult trained = bgm::train(data.standardized(), tc);
    cell.train_seconds = seconds_since(t0);
    cell.trace = trained.trace;
    say("trained in " + std::to_string(cell.train_seconds) + " s");

    std::vector<std::size_t> a(d);
    std::iota(a.begin(), a.end(), 0);
    const PartitionSpec part = PartitionSpec::from_observed(a, p);
    RowMatrix xa(static_cast<Eigen::Index>(nt), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < nt; ++i)
      for (std::size_t j = 0; j < d; ++j)
        xa(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
            (v_test(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - data.stats.means[j]) / data.stats.stds[j];
    t0 = std::chrono::steady_clock::now();
    const auto preds = predict_rows(trained.model, part, xa, cfg.inference, cfg.alpha, mix_seed(seed, 41));
    cell.inference_seconds = seconds_since(t0);
    say("inference in " + std::to_string(cell.inference_seconds) + " s");
    std::vector<double> point(nt), lower(nt), upper(nt);
    for (std::size_t i = 0; i < nt; ++i) {
      point[i] = destandardize_value(preds[i].point[0], d, data.stats);
      lower[i] = destandardize_value(preds[i].lower[0], d, data.stats);
      upper[i] = destandardize_value(preds[i].upper[0], d, data.stats);
    }
    cell.bgm_lengths.resize(nt);
    for (std::size_t i = 0; i < nt; ++i) cell.bgm_lengths[i] = upper[i] - lower[i];
    return compute_metrics(point, lower, upper, cell.truth, cell.oracle_lengths);
  });

  std::vector<double> mlp_test, mlp_cal, cal_truth;
  std::unique_ptr<KnnScale> knn;
  RowMatrix v_cal;
  const auto fit_mlp = [&] {
    if (!mlp_test.empty()) return;
    say("fitting the CP point predictor");
    const RowMatrix v_proper = take_rows(sim.v, proper);
    const std::vector<double> r_proper = take(sim.r, proper);
    RegressorConfig rc = cfg.regressor;
    rc.seed = seed;
    const MlpRegressor mlp(v_proper, r_proper, rc);
    v_cal = take_rows(sim.v, cal);
    cal_truth = take(sim.r, cal);
    mlp_cal = mlp.predict(v_cal);
    mlp_test = mlp.predict(v_test);
    const std::vector<double> fit = mlp.predict(v_proper);
    std::vector<double> abs_res(fit.size());
    for (std::size_t i = 0; i < fit.size(); ++i) abs_res[i] = std::abs(r_proper[i] - fit[i]);
    knn = std::make_unique<KnnScale>(v_proper, abs_res, cfg.knn);
  };

  run_leg("split-CP", [&] {
    fit_mlp();
    const ConformalIntervals ci = split_cp(mlp_cal, cal_truth, mlp_test, cfg.alpha);
    return compute_metrics(mlp_test, ci.lower, ci.upper, cell.truth, cell.oracle_lengths);
  });
  run_leg("LW-CP", [&] {
    fit_mlp();
    const std::vector<double> cal_scale = (*knn)(v_cal);
    const std::vector<double> test_scale = (*knn)(v_test);
    const ConformalIntervals ci = lw_cp(mlp_cal, cal_truth, cal_scale, mlp_test, test_scale, cfg.alpha);
    return compute_metrics(mlp_test, ci.lower, ci.upper, cell.truth, cell.oracle_lengths);
  });
  run_leg("linear-regression", [&] {
    const LinearRegression lr(take_rows(sim.v, train), take(sim.r, train));
    return point_metrics(lr.predict(v_test), cell.truth);
  });
  run_leg("column-mean", [&] {
    return point_metrics(column_mean_predict(take(sim.r, train), nt), cell.truth);
  });
  return cell;
}

std::vector<CellResult> run_benchmark(const BenchmarkConfig& cfg, const ProgressLog& log) {
  cfg.validate();
  std::vector<CellResult> cells;
  for (std::size_t p : cfg.dims)
    for (std::uint64_t seed : cfg.seeds) cells.push_back(run_benchmark_cell(cfg, p, seed, log));
  return cells;
}

void write_report_csv(const std::string& path, const std::vector<CellResult>& cells) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write report '" + path + "'");
  out << "method,p,seed,status,mse,pcc,scc,coverage,avg_pi_length,pcc_len,scc_len,message\n";
  for (const CellResult& c : cells)
    for (const MethodRow& r : c.rows) {
      const MetricsReport& m = r.metrics;
      out << r.method << ',' << r.p << ',' << r.seed << ',' << r.status;
      for (double v : {m.mse, m.pcc, m.scc, m.coverage, m.avg_pi_length, m.pcc_len, m.scc_len})
        out << ',' << csv_number(v);
      out << ',' << csv_text(r.message) << '\n';
    }
  if (!out) throw InputError("failed writing report '" + path + "'");
}

nlohmann::json summarize_benchmark(const BenchmarkConfig& cfg, const std::vector<CellResult>& cells) {
  nlohmann::json j;
  j["alpha"] = cfg.alpha;
  j["n"] = cfg.n;
  j["k"] = cfg.k;
  j["hmc"] = {{"burn_in", cfg.inference.hmc.burn_in}, {"n_samples", cfg.inference.hmc.n_samples}};
  j["epochs"] = cfg.train.epochs;

  nlohmann::json methods = nlohmann::json::array();
  for (std::size_t p : cfg.dims)
    for (const std::string& method : kBenchmarkMethods) {
      nlohmann::json entry{{"method", method}, {"p", p}};
      std::vector<const MetricsReport*> ok;
      for (const CellResult& c : cells)
        for (const MethodRow& r : c.rows)
          if (r.p == p && r.method == method && r.status == "ok") ok.push_back(&r.metrics);
      entry["n_ok"] = ok.size();
      const std::pair<const char*, double MetricsReport::*> fields[] = {
          {"mse", &MetricsReport::mse}, {"pcc", &MetricsReport::pcc}, {"scc", &MetricsReport::scc},
          {"coverage", &MetricsReport::coverage}, {"avg_pi_length", &MetricsReport::avg_pi_length},
          {"pcc_len", &MetricsReport::pcc_len}, {"scc_len", &MetricsReport::scc_len}};
      for (const auto& [name, field] : fields) {
        std::vector<double> vals;
        for (const MetricsReport* m : ok)
          if (std::isfinite(m->*field)) vals.push_back(m->*field);
        double mean = std::numeric_limits<double>::quiet_NaN(), se = mean;
        if (!vals.empty()) {
          mean = std::accumulate(vals.begin(), vals.end(), 0.0) / static_cast<double>(vals.size());
          if (vals.size() > 1) {
            double ss = 0.0;
            for (double v : vals) ss += (v - mean) * (v - mean);
            se = std::sqrt(ss / static_cast<double>(vals.size() - 1) / static_cast<double>(vals.size()));
          }
        }
        entry[name] = {{"mean", json_number(mean)}, {"se", json_number(se)}, {"count", vals.size()}};
      }
      methods.push_back(entry);
    }
  j["methods"] = methods;

  nlohmann::json cj = nlohmann::json::array();
  for (const CellResult& c : cells) {
    nlohmann::json e{{"p", c.p},
                     {"seed", c.seed},
                     {"n_test", c.truth.size()},
                     {"oracle_avg_length", json_number(c.oracle_avg_length)},
                     {"oracle_coverage", json_number(c.oracle_coverage)},
                     {"train_seconds", c.train_seconds},
                     {"inference_seconds", c.inference_seconds}};
    if (!c.trace.epochs.empty()) {
      e["objective_initial"] = json_number(c.trace.initial.objective);
      e["objective_final"] = json_number(c.trace.epochs.back().objective);
    }
    cj.push_back(e);
  }
  j["cells"] = cj;
  return j;
}

}  // namespace bgm
