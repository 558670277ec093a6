#pragma once

#include "bgm/benchmark.hpp"
#include "bgm/hmc.hpp"
#include "bgm/inference.hpp"
#include "bgm/trainer.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace bgm {

struct RunConfig {
  TrainConfig train;
  InferenceOptions inference;
  double alpha = 0.05;

  std::string data;
  std::string checkpoint;
  std::string out;
  std::string trace;           // default: <checkpoint>.trace.csv
  std::string uncertainty_out; // default: <out>.uncertainty.csv
  std::string draws_out;       // directory for per-point draw CSVs; empty disables
  std::string summary;         // default: <out>.summary.json
  std::string partition;
  std::string kernels;         // "scalar" or "avx2"; empty keeps the runtime choice

  BenchmarkConfig bench;
};

// Names of every flat configuration key, in documentation order.
const std::vector<std::string>& config_keys();

// Short description of a key, for --help.
std::string config_key_help(const std::string& key);

// Sets one key from a JSON value. Throws ConfigError for unknown keys and
// values of the wrong type.
void set_config(RunConfig& cfg, const std::string& key, const nlohmann::json& value);

// Same, from command-line text. Lists accept "1,2,3" or a JSON array.
void set_config_text(RunConfig& cfg, const std::string& key, const std::string& text);

// Applies every key of a flat JSON object.
void apply_config(RunConfig& cfg, const nlohmann::json& flat);

RunConfig load_config(const std::string& path);

nlohmann::json config_to_json(const RunConfig& cfg);

}  // namespace bgm
