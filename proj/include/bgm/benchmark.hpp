#pragma once

#include "bgm/baselines.hpp"
#include "bgm/inference.hpp"
#include "bgm/metrics.hpp"
#include "bgm/trainer.hpp"

#include <json.hpp>

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace bgm {

struct BenchmarkConfig {
  std::vector<std::size_t> dims{50};  // p = d + 1
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::size_t n = 5000;
  std::size_t k = 10;
  double alpha = 0.05;
  double test_fraction = 0.2;
  double calibration_fraction = 0.2;  // of the training rows, for the CP baselines
  std::size_t oracle_draws = 20000;
  std::size_t knn = 50;
  std::size_t max_test_points = 0;  // 0 keeps every test row
  TrainConfig train;  // latent_dim 0 means k
  InferenceOptions inference;
  RegressorConfig regressor;

  void validate() const;
};

inline const std::vector<std::string> kBenchmarkMethods{"BGM", "split-CP", "LW-CP",
                                                        "linear-regression", "column-mean"};

struct MethodRow {
  std::string method;
  std::size_t p = 0;
  std::uint64_t seed = 0;
  std::string status = "ok";
  MetricsReport metrics;
  std::string message;
};

// Everything one (p, seed) cell produced, including per-point intervals for
// downstream checks.
struct CellResult {
  std::size_t p = 0;
  std::uint64_t seed = 0;
  std::vector<MethodRow> rows;
  TrainingTrace trace;
  std::vector<double> truth;
  std::vector<double> oracle_lengths;
  std::vector<double> bgm_lengths;
  double oracle_avg_length = 0.0;
  double oracle_coverage = 0.0;
  double train_seconds = 0.0;
  double inference_seconds = 0.0;
};

using ProgressLog = std::function<void(const std::string&)>;

// Simulate, split, fit every method and score it against the oracle. A
// failing method yields a row with status "failed"; the others still run.
CellResult run_benchmark_cell(const BenchmarkConfig& cfg, std::size_t p, std::uint64_t seed,
                              const ProgressLog& log = {});

// Only the BGM training step of a cell: same simulation, split and seed.
TrainResult train_cell_model(const BenchmarkConfig& cfg, std::size_t p, std::uint64_t seed);

std::vector<CellResult> run_benchmark(const BenchmarkConfig& cfg, const ProgressLog& log = {});

// Columns: method,p,seed,status,mse,pcc,scc,coverage,avg_pi_length,pcc_len,
// scc_len,message. Undefined values are empty fields.
void write_report_csv(const std::string& path, const std::vector<CellResult>& cells);

// Per-method, per-p means and standard errors over successful seeds, plus
// per-cell oracle lengths and timings.
nlohmann::json summarize_benchmark(const BenchmarkConfig& cfg, const std::vector<CellResult>& cells);

}  // namespace bgm
