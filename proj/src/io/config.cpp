#include "bgm/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <type_traits>

namespace bgm {

namespace {

using nlohmann::json;

template <class T>
T convert(const json& v, const std::string& key) {
  const auto bad = [&](const char* want) {
    return ConfigError("config key '" + key + "' expects " + want + ", got " + v.dump());
  };
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) throw bad("true or false");
    return v.get<bool>();
  } else if constexpr (std::is_same_v<T, std::string>) {
    if (!v.is_string()) throw bad("a string");
    return v.get<std::string>();
  } else if constexpr (std::is_same_v<T, double>) {
    if (!v.is_number()) throw bad("a number");
    return v.get<double>();
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0))
      throw bad("a non-negative integer");
    return v.get<T>();
  } else {
    using E = typename T::value_type;
    if (!v.is_array()) throw bad("a list");
    T out;
    for (const json& e : v) out.push_back(convert<E>(e, key));
    return out;
  }
}

template <class T>
json parse_text(const std::string& text, const std::string& key) {
  if constexpr (std::is_same_v<T, std::string>) {
    return text;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError("flag --" + key + " expects true or false, got '" + text + "'");
  } else if constexpr (std::is_arithmetic_v<T>) {
    try {
      return json::parse(text);
    } catch (const json::exception&) {
      throw ConfigError("flag --" + key + " expects a number, got '" + text + "'");
    }
  } else {
    if (!text.empty() && text.front() == '[') {
      try {
        return json::parse(text);
      } catch (const json::exception&) {
        throw ConfigError("flag --" + key + " has a malformed list '" + text + "'");
      }
    }
    json arr = json::array();
    std::size_t pos = 0;
    while (pos <= text.size() && !text.empty()) {
      std::size_t comma = text.find(',', pos);
      if (comma == std::string::npos) comma = text.size();
      arr.push_back(parse_text<typename T::value_type>(text.substr(pos, comma - pos), key));
      pos = comma + 1;
    }
    return arr;
  }
}

struct KeySpec {
  std::string help;
  std::function<void(RunConfig&, const json&)> set;
  std::function<void(RunConfig&, const std::string&)> set_text;
  std::function<json(const RunConfig&)> get;
};

struct Registry {
  std::vector<std::string> order;
  std::map<std::string, KeySpec> keys;

  template <class Ref>
  void add(const std::string& name, std::string help, Ref ref) {
    using T = std::remove_cvref_t<decltype(ref(std::declval<RunConfig&>()))>;
    order.push_back(name);
    keys[name] = KeySpec{
        std::move(help),
        [ref, name](RunConfig& c, const json& v) { ref(c) = convert<T>(v, name); },
        [ref, name](RunConfig& c, const std::string& t) { ref(c) = convert<T>(parse_text<T>(t, name), name); },
        [ref](const RunConfig& c) { return json(ref(const_cast<RunConfig&>(c))); }};
  }
};

const Registry& registry() {
  static const Registry reg = [] {
    Registry r;
    // Training.
    r.add("batch_size", "minibatch size", [](RunConfig& c) -> auto& { return c.train.batch_size; });
    r.add("epochs", "training epochs", [](RunConfig& c) -> auto& { return c.train.epochs; });
    r.add("lr_z", "latent Adam learning rate", [](RunConfig& c) -> auto& { return c.train.lr_z; });
    r.add("lr_phi", "network posterior Adam learning rate", [](RunConfig& c) -> auto& { return c.train.lr_phi; });
    r.add("lr_schedule", "constant or inv_sqrt", [](RunConfig& c) -> auto& { return c.train.lr_schedule; });
    r.add("latent_dim", "latent dimension (0: 5 if p <= 100, else 10)", [](RunConfig& c) -> auto& { return c.train.latent_dim; });
    r.add("hidden", "hidden layer widths", [](RunConfig& c) -> auto& { return c.train.hidden; });
    r.add("variance_floor", "constant added to decoder variances", [](RunConfig& c) -> auto& { return c.train.decoder.variance_floor; });
    r.add("map_mode", "point-estimate network (no KL)", [](RunConfig& c) -> auto& { return c.train.decoder.map_mode; });
    r.add("flipout", "Flipout gradient estimator", [](RunConfig& c) -> auto& { return c.train.decoder.flipout; });
    r.add("n_theta_samples", "network samples per ELBO estimate", [](RunConfig& c) -> auto& { return c.train.decoder.n_theta_samples; });
    r.add("theta_prior_scale", "prior standard deviation of network weights", [](RunConfig& c) -> auto& { return c.train.decoder.prior.theta_scale; });
    r.add("initial_sigma", "initial posterior standard deviation of weights", [](RunConfig& c) -> auto& { return c.train.initial_sigma; });
    r.add("warm_start", "PCA initialization of latents", [](RunConfig& c) -> auto& { return c.train.warm_start; });
    r.add("pretrain_epochs", "point-estimate epochs on (mu, Z) before the variational phase", [](RunConfig& c) -> auto& { return c.train.pretrain_epochs; });
    r.add("diagnostic_rows", "rows used for the per-epoch objective", [](RunConfig& c) -> auto& { return c.train.diagnostic_rows; });
    r.add("checkpoint_every", "write a checkpoint every N epochs (0: only at the end)", [](RunConfig& c) -> auto& { return c.train.checkpoint_every; });
    r.add("seed", "random seed", [](RunConfig& c) -> auto& { return c.train.seed; });
    // Inference.
    r.add("step_size", "initial HMC step size", [](RunConfig& c) -> auto& { return c.inference.hmc.step_size; });
    r.add("step_jitter", "relative half-width of the per-transition step-size jitter", [](RunConfig& c) -> auto& { return c.inference.hmc.step_jitter; });
    r.add("n_leapfrog", "leapfrog steps per HMC transition", [](RunConfig& c) -> auto& { return c.inference.hmc.n_leapfrog; });
    r.add("target_accept", "step-size adaptation target", [](RunConfig& c) -> auto& { return c.inference.hmc.target_accept; });
    r.add("burn_in", "HMC burn-in transitions", [](RunConfig& c) -> auto& { return c.inference.hmc.burn_in; });
    r.add("n_samples", "retained HMC draws per query", [](RunConfig& c) -> auto& { return c.inference.hmc.n_samples; });
    r.add("adapt", "dual-averaging step-size adaptation during burn-in", [](RunConfig& c) -> auto& { return c.inference.hmc.adapt; });
    r.add("posterior_networks", "average over N networks drawn from the posterior (0: posterior mean)", [](RunConfig& c) -> auto& { return c.inference.posterior_networks; });
    r.add("threads", "worker threads for inference (0: all cores)", [](RunConfig& c) -> auto& { return c.inference.threads; });
    r.add("alpha", "interval miscoverage level", [](RunConfig& c) -> auto& { return c.alpha; });
    // Paths.
    r.add("data", "input CSV", [](RunConfig& c) -> auto& { return c.data; });
    r.add("checkpoint", "checkpoint path", [](RunConfig& c) -> auto& { return c.checkpoint; });
    r.add("out", "output CSV", [](RunConfig& c) -> auto& { return c.out; });
    r.add("trace", "training trace CSV", [](RunConfig& c) -> auto& { return c.trace; });
    r.add("uncertainty_out", "imputation interval-length CSV", [](RunConfig& c) -> auto& { return c.uncertainty_out; });
    r.add("draws_out", "directory for per-point posterior draws", [](RunConfig& c) -> auto& { return c.draws_out; });
    r.add("summary", "benchmark summary JSON", [](RunConfig& c) -> auto& { return c.summary; });
    r.add("partition", "conditioning split, e.g. a=1-49;b=50", [](RunConfig& c) -> auto& { return c.partition; });
    r.add("kernels", "dense kernels: scalar or avx2", [](RunConfig& c) -> auto& { return c.kernels; });
    // Benchmark.
    r.add("bench_dims", "benchmark data dimensions p", [](RunConfig& c) -> auto& { return c.bench.dims; });
    r.add("bench_seeds", "benchmark seeds", [](RunConfig& c) -> auto& { return c.bench.seeds; });
    r.add("bench_n", "simulated rows per cell", [](RunConfig& c) -> auto& { return c.bench.n; });
    r.add("bench_k", "simulation latent dimension", [](RunConfig& c) -> auto& { return c.bench.k; });
    r.add("test_fraction", "held-out test share", [](RunConfig& c) -> auto& { return c.bench.test_fraction; });
    r.add("calibration_fraction", "calibration share of training rows for CP", [](RunConfig& c) -> auto& { return c.bench.calibration_fraction; });
    r.add("oracle_draws", "Monte Carlo draws per oracle interval", [](RunConfig& c) -> auto& { return c.bench.oracle_draws; });
    r.add("knn", "neighbours for the local scale of LW-CP", [](RunConfig& c) -> auto& { return c.bench.knn; });
    r.add("max_test_points", "cap on scored test rows (0: all)", [](RunConfig& c) -> auto& { return c.bench.max_test_points; });
    r.add("cp_epochs", "epochs for the CP point predictor", [](RunConfig& c) -> auto& { return c.bench.regressor.epochs; });
    r.add("cp_lr", "learning rate for the CP point predictor", [](RunConfig& c) -> auto& { return c.bench.regressor.lr; });
    r.add("cp_hidden", "hidden widths of the CP point predictor", [](RunConfig& c) -> auto& { return c.bench.regressor.hidden; });
    return r;
  }();
  return reg;
}

const KeySpec& lookup(const std::string& key) {
  const auto& keys = registry().keys;
  const auto it = keys.find(key);
  if (it == keys.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

}  // namespace

const std::vector<std::string>& config_keys() { return registry().order; }

std::string config_key_help(const std::string& key) { return lookup(key).help; }

void set_config(RunConfig& cfg, const std::string& key, const nlohmann::json& value) {
  lookup(key).set(cfg, value);
}

void set_config_text(RunConfig& cfg, const std::string& key, const std::string& text) {
  lookup(key).set_text(cfg, text);
}

void apply_config(RunConfig& cfg, const nlohmann::json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a flat JSON object");
  for (const auto& [key, value] : flat.items()) set_config(cfg, key, value);
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("config '" + path + "' is not valid JSON: " + e.what());
  }
  RunConfig cfg;
  apply_config(cfg, j);
  return cfg;
}

nlohmann::json config_to_json(const RunConfig& cfg) {
  nlohmann::json j = nlohmann::json::object();
  for (const std::string& key : config_keys()) j[key] = lookup(key).get(cfg);
  return j;
}

}  // namespace bgm
