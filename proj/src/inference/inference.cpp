#include "bgm/inference.hpp"

#include "bgm/data.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

namespace bgm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr std::size_t kChunkRows = 32;

std::size_t parse_index(std::string_view s, std::string_view text) {
  std::size_t v = 0;
  const auto* end = s.data() + s.size();
  const auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || v == 0)
    throw InputError("bad column index '" + std::string(s) + "' in partition '" + std::string(text) +
                     "' (indices are 1-based)");
  return v - 1;
}

std::vector<std::size_t> parse_index_list(std::string_view list, std::string_view text) {
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    std::size_t comma = list.find(',', pos);
    if (comma == std::string_view::npos) comma = list.size();
    const std::string_view item = list.substr(pos, comma - pos);
    if (item.empty()) throw InputError("empty item in partition '" + std::string(text) + "'");
    const std::size_t dash = item.find('-');
    if (dash == std::string_view::npos) {
      out.push_back(parse_index(item, text));
    } else {
      const std::size_t lo = parse_index(item.substr(0, dash), text);
      const std::size_t hi = parse_index(item.substr(dash + 1), text);
      if (hi < lo) throw InputError("descending range in partition '" + std::string(text) + "'");
      for (std::size_t i = lo; i <= hi; ++i) out.push_back(i);
    }
    pos = comma + 1;
  }
  return out;
}

std::vector<std::vector<double>> network_thetas(const GenerativeModel& model,
                                                const InferenceOptions& opts, std::uint64_t seed) {
  if (opts.posterior_networks == 0) return {model.vp.mu};
  std::vector<std::vector<double>> out;
  std::vector<double> noise(model.vp.size());
  for (std::size_t k = 0; k < opts.posterior_networks; ++k) {
    Rng rng(mix_seed(mix_seed(seed, ~std::uint64_t{0}), k));
    fill_normal(rng, noise);
    out.push_back(sample_theta(model.vp, noise, model.decoder.map_mode));
  }
  return out;
}

}  // namespace

void PartitionSpec::validate(std::size_t p) {
  std::sort(a_idx.begin(), a_idx.end());
  std::sort(b_idx.begin(), b_idx.end());
  if (a_idx.empty()) throw InputError("partition: A (conditioning set) is empty");
  if (b_idx.empty()) throw InputError("partition: B (target set) is empty");
  if (std::adjacent_find(a_idx.begin(), a_idx.end()) != a_idx.end() ||
      std::adjacent_find(b_idx.begin(), b_idx.end()) != b_idx.end())
    throw InputError("partition: duplicate column index");
  std::vector<unsigned char> seen(p, 0);
  for (const auto* list : {&a_idx, &b_idx})
    for (std::size_t i : *list) {
      if (i >= p)
        throw InputError("partition: column " + std::to_string(i + 1) + " is outside 1.." +
                         std::to_string(p));
      if (seen[i]) throw InputError("partition: column " + std::to_string(i + 1) + " is in both A and B");
      seen[i] = 1;
    }
  if (a_idx.size() + b_idx.size() != p)
    throw InputError("partition: A and B must cover all " + std::to_string(p) + " columns");
}

PartitionSpec PartitionSpec::parse(std::string_view text, std::size_t p) {
  PartitionSpec spec;
  bool has_a = false, has_b = false;
  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t semi = text.find(';', pos);
    if (semi == std::string_view::npos) semi = text.size();
    std::string_view part = text.substr(pos, semi - pos);
    while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
    while (!part.empty() && part.back() == ' ') part.remove_suffix(1);
    pos = semi + 1;
    if (part.empty()) continue;
    if (part.size() < 2 || part[1] != '=' || (part[0] != 'a' && part[0] != 'b' && part[0] != 'A' &&
                                              part[0] != 'B'))
      throw InputError("partition '" + std::string(text) + "' must look like a=1-49;b=50");
    auto idx = parse_index_list(part.substr(2), text);
    if (part[0] == 'a' || part[0] == 'A') {
      spec.a_idx.insert(spec.a_idx.end(), idx.begin(), idx.end());
      has_a = true;
    } else {
      spec.b_idx.insert(spec.b_idx.end(), idx.begin(), idx.end());
      has_b = true;
    }
  }
  if (has_a && !has_b) {
    return from_observed(spec.a_idx, p);
  }
  if (has_b && !has_a) {
    std::vector<unsigned char> in_b(p, 0);
    for (std::size_t i : spec.b_idx)
      if (i < p) in_b[i] = 1;
    for (std::size_t i = 0; i < p; ++i)
      if (!in_b[i]) spec.a_idx.push_back(i);
  }
  spec.validate(p);
  return spec;
}

PartitionSpec PartitionSpec::from_observed(std::vector<std::size_t> a_idx, std::size_t p) {
  PartitionSpec spec;
  spec.a_idx = std::move(a_idx);
  std::vector<unsigned char> in_a(p, 0);
  for (std::size_t i : spec.a_idx)
    if (i < p) in_a[i] = 1;
  for (std::size_t i = 0; i < p; ++i)
    if (!in_a[i]) spec.b_idx.push_back(i);
  spec.validate(p);
  return spec;
}

LatentConditionalTarget::LatentConditionalTarget(const DenseNet& net, std::span<const double> theta,
                                                 double floor, const RowMatrix& x)
    : net_(&net), theta_(theta.begin(), theta.end()), floor_(floor), x_(x) {
  if (static_cast<std::size_t>(x.cols()) != net.output_dim())
    throw ConfigError("conditional target: data width does not match the decoder");
  if (theta_.size() != net.num_params())
    throw ConfigError("conditional target: parameter vector has the wrong length");
  observed_.resize(static_cast<std::size_t>(x.size()));
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const bool obs = !std::isnan(x.data()[i]);
    observed_[static_cast<std::size_t>(i)] = obs ? 1 : 0;
    if (!obs) x_.data()[i] = 0.0;
    else if (!std::isfinite(x.data()[i]))
      throw InputError("conditional target: infinite observed value");
  }
}

void LatentConditionalTarget::operator()(const double* z, std::size_t rows, double* logp,
                                         double* grad) {
  if (rows != static_cast<std::size_t>(x_.rows()))
    throw ConfigError("conditional target: chain count does not match the query rows");
  const std::size_t dz = net_->input_dim();
  const std::size_t p = net_->output_dim();
  input_.assign(z, z + rows * dz);
  bad_.assign(rows, 0);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < dz; ++j)
      if (!std::isfinite(input_[r * dz + j])) {
        bad_[r] = 1;
        std::fill(input_.begin() + static_cast<std::ptrdiff_t>(r * dz),
                  input_.begin() + static_cast<std::ptrdiff_t>((r + 1) * dz), 0.0);
        break;
      }

  net_->forward(theta_, input_.data(), rows, cache_);
  dmu_.assign(rows * p, 0.0);
  dsigma2_.assign(rows * p, 0.0);
  const double c = -0.5 * static_cast<double>(dz) * kLog2Pi;
  for (std::size_t r = 0; r < rows; ++r) {
    double total = c;
    for (std::size_t j = 0; j < dz; ++j) total -= 0.5 * input_[r * dz + j] * input_[r * dz + j];
    for (std::size_t k = 0; k < p; ++k) {
      const std::size_t i = r * p + k;
      if (!observed_[i]) continue;
      const double s2 = cache_.sigma2[i] + floor_;
      const double res = x_.data()[i] - cache_.mu[i];
      const double inv = 1.0 / s2;
      total += -0.5 * (kLog2Pi + std::log(s2) + res * res * inv);
      dmu_[i] = res * inv;
      dsigma2_[i] = 0.5 * (res * res * inv - 1.0) * inv;
    }
    if (!std::isfinite(total)) bad_[r] = 1;
    if (bad_[r]) {
      std::fill(dmu_.begin() + static_cast<std::ptrdiff_t>(r * p),
                dmu_.begin() + static_cast<std::ptrdiff_t>((r + 1) * p), 0.0);
      std::fill(dsigma2_.begin() + static_cast<std::ptrdiff_t>(r * p),
                dsigma2_.begin() + static_cast<std::ptrdiff_t>((r + 1) * p), 0.0);
    }
    logp[r] = bad_[r] ? std::numeric_limits<double>::quiet_NaN() : total;
  }
  net_->backward(theta_, cache_, dmu_.data(), dsigma2_.data(), grad, {});
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t j = 0; j < dz; ++j) {
      double& g = grad[r * dz + j];
      g = bad_[r] ? std::numeric_limits<double>::quiet_NaN() : g - input_[r * dz + j];
    }
}

LatentPosterior latent_conditional_log_posterior(std::span<const double> x_a,
                                                 std::span<const double> z,
                                                 const GenerativeModel& model,
                                                 const PartitionSpec& partition) {
  const std::size_t p = model.net.output_dim();
  if (x_a.size() != partition.a_idx.size())
    throw ConfigError("latent_conditional_log_posterior: x_a length does not match A");
  if (z.size() != model.net.input_dim())
    throw ConfigError("latent_conditional_log_posterior: z has the wrong length");
  RowMatrix x = RowMatrix::Constant(1, static_cast<Eigen::Index>(p),
                                    std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < x_a.size(); ++i) {
    if (partition.a_idx[i] >= p) throw ConfigError("latent_conditional_log_posterior: A index out of range");
    x(0, static_cast<Eigen::Index>(partition.a_idx[i])) = x_a[i];
  }
  LatentConditionalTarget target(model.net, model.vp.mu, model.decoder.variance_floor, x);
  LatentPosterior out;
  out.grad_z.resize(static_cast<Eigen::Index>(z.size()));
  target(z.data(), 1, &out.value, out.grad_z.data());
  return out;
}

std::vector<PosteriorDraws> sample_conditional_rows(const GenerativeModel& model,
                                                    const RowMatrix& x,
                                                    const InferenceOptions& opts,
                                                    std::uint64_t seed, std::size_t first_index,
                                                    std::span<const std::size_t> point_indices) {
  opts.hmc.validate();
  const std::size_t rows = static_cast<std::size_t>(x.rows());
  const std::size_t dz = model.net.input_dim();
  const std::size_t p = model.net.output_dim();
  if (static_cast<std::size_t>(x.cols()) != p)
    throw InputError("query has " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(p));

  if (!point_indices.empty() && point_indices.size() != rows)
    throw ConfigError("sample_conditional_rows: one point index per row required");
  const auto index_of = [&](std::size_t r) {
    return point_indices.empty() ? first_index + r : point_indices[r];
  };
  std::vector<PosteriorDraws> out(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < p; ++k)
      if (std::isnan(x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k))))
        out[r].b_idx.push_back(k);
    if (out[r].b_idx.size() == p)
      throw InputError("row " + std::to_string(index_of(r) + 1) + " has no observed values");
    out[r].z_draws.resize(static_cast<Eigen::Index>(opts.hmc.n_samples), static_cast<Eigen::Index>(dz));
    out[r].xb_draws.resize(static_cast<Eigen::Index>(opts.hmc.n_samples),
                           static_cast<Eigen::Index>(out[r].b_idx.size()));
  }
  if (rows == 0) return out;

  const auto thetas = network_thetas(model, opts, seed);
  const std::size_t nets = thetas.size();
  std::size_t offset = 0;
  NetCache cache;
  for (std::size_t k = 0; k < nets; ++k) {
    HMCConfig cfg = opts.hmc;
    cfg.n_samples = opts.hmc.n_samples / nets + (k < opts.hmc.n_samples % nets ? 1 : 0);
    if (cfg.n_samples == 0) continue;
    std::vector<std::uint64_t> seeds(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      const std::uint64_t s = mix_seed(seed, index_of(r));
      seeds[r] = opts.posterior_networks == 0 ? s : mix_seed(s, k + 1);
    }
    LatentConditionalTarget target(model.net, thetas[k], model.decoder.variance_floor, x);
    BatchLogDensity fn = [&target](const double* z, std::size_t n, double* lp, double* g) {
      target(z, n, lp, g);
    };
    RowMatrix init = RowMatrix::Zero(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(dz));
    std::vector<ChainResult> chains;
    try {
      chains = hmc_sample_batch(fn, init, seeds, cfg);
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " [first query row " +
                         std::to_string(index_of(0) + 1) + "]");
    }

    const auto n = static_cast<Eigen::Index>(cfg.n_samples);
    for (std::size_t r = 0; r < rows; ++r) {
      ChainResult& ch = chains[r];
      PosteriorDraws& d = out[r];
      d.z_draws.middleRows(static_cast<Eigen::Index>(offset), n) = ch.draws;
      d.acceptance_rate += ch.acceptance_rate * static_cast<double>(cfg.n_samples) /
                           static_cast<double>(opts.hmc.n_samples);
      d.step_size += ch.step_size / static_cast<double>(nets);

      model.net.forward(thetas[k], ch.draws.data(), cfg.n_samples, cache);
      std::normal_distribution<double> normal;
      for (Eigen::Index m = 0; m < n; ++m)
        for (std::size_t j = 0; j < d.b_idx.size(); ++j) {
          const std::size_t i = static_cast<std::size_t>(m) * p + d.b_idx[j];
          const double sd = std::sqrt(cache.sigma2[i] + model.decoder.variance_floor);
          d.xb_draws(static_cast<Eigen::Index>(offset) + m, static_cast<Eigen::Index>(j)) =
              cache.mu[i] + sd * normal(ch.rng);
        }
    }
    offset += cfg.n_samples;
  }
  for (const PosteriorDraws& d : out)
    if (!d.xb_draws.allFinite()) throw NumericError("conditional sampler produced non-finite draws");
  return out;
}

PosteriorDraws sample_conditional(std::span<const double> x_a, const GenerativeModel& model,
                                  const PartitionSpec& partition, const InferenceOptions& opts,
                                  std::uint64_t seed, std::size_t point_index) {
  const std::size_t p = model.net.output_dim();
  PartitionSpec part = partition;
  part.validate(p);
  if (x_a.size() != part.a_idx.size())
    throw InputError("sample_conditional: x_a has " + std::to_string(x_a.size()) +
                     " values, partition has " + std::to_string(part.a_idx.size()));
  RowMatrix x = RowMatrix::Constant(1, static_cast<Eigen::Index>(p),
                                    std::numeric_limits<double>::quiet_NaN());
  for (std::size_t i = 0; i < x_a.size(); ++i) {
    if (std::isnan(x_a[i])) throw InputError("sample_conditional: x_a contains NaN");
    x(0, static_cast<Eigen::Index>(part.a_idx[i])) = x_a[i];
  }
  return std::move(sample_conditional_rows(model, x, opts, seed, point_index).front());
}

Vector point_estimate(const PosteriorDraws& draws) {
  if (draws.xb_draws.rows() == 0) throw ConfigError("point_estimate: no draws");
  return draws.xb_draws.colwise().mean().transpose();
}

double quantile_type7(std::span<const double> sorted, double q) {
  if (sorted.empty()) throw ConfigError("quantile of an empty sample");
  if (sorted.size() == 1) return sorted[0];
  const double h = static_cast<double>(sorted.size() - 1) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= sorted.size()) return sorted.back();
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[lo + 1] - sorted[lo]);
}

std::pair<Vector, Vector> interval_estimate(const PosteriorDraws& draws, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  const RowMatrix& xb = draws.xb_draws;
  if (xb.rows() < 2) throw ConfigError("interval_estimate needs at least two draws");
  Vector lower(xb.cols()), upper(xb.cols());
  std::vector<double> col(static_cast<std::size_t>(xb.rows()));
  for (Eigen::Index j = 0; j < xb.cols(); ++j) {
    for (Eigen::Index m = 0; m < xb.rows(); ++m) col[static_cast<std::size_t>(m)] = xb(m, j);
    std::sort(col.begin(), col.end());
    lower[j] = quantile_type7(col, alpha / 2.0);
    upper[j] = quantile_type7(col, 1.0 - alpha / 2.0);
  }
  return {lower, upper};
}

PredictionResult summarize(const PosteriorDraws& draws, double alpha) {
  PredictionResult res;
  res.point = point_estimate(draws);
  std::tie(res.lower, res.upper) = interval_estimate(draws, alpha);
  res.alpha = alpha;
  res.acceptance_rate = draws.acceptance_rate;
  return res;
}

void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = std::min(threads, n);
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t)
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n && !failed; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!error) error = std::current_exception();
          failed = true;
        }
      }
    });
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::vector<PredictionResult> predict_rows(const GenerativeModel& model,
                                           const PartitionSpec& partition, const RowMatrix& x_a,
                                           const InferenceOptions& opts, double alpha,
                                           std::uint64_t seed, const DrawsCallback& on_draws) {
  const std::size_t p = model.net.output_dim();
  PartitionSpec part = partition;
  part.validate(p);
  if (static_cast<std::size_t>(x_a.cols()) != part.a_idx.size())
    throw InputError("prediction input has " + std::to_string(x_a.cols()) +
                     " columns, partition A has " + std::to_string(part.a_idx.size()));
  const std::size_t n = static_cast<std::size_t>(x_a.rows());
  std::vector<PredictionResult> out(n);
  const std::size_t chunks = (n + kChunkRows - 1) / kChunkRows;
  parallel_for(chunks, opts.threads, [&](std::size_t c) {
    const std::size_t begin = c * kChunkRows;
    const std::size_t end = std::min(n, begin + kChunkRows);
    RowMatrix x = RowMatrix::Constant(static_cast<Eigen::Index>(end - begin),
                                      static_cast<Eigen::Index>(p),
                                      std::numeric_limits<double>::quiet_NaN());
    for (std::size_t r = begin; r < end; ++r)
      for (std::size_t j = 0; j < part.a_idx.size(); ++j) {
        const double v = x_a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j));
        if (!std::isfinite(v))
          throw InputError("prediction input row " + std::to_string(r + 1) + " column " +
                           std::to_string(j + 1) + " is not finite");
        x(static_cast<Eigen::Index>(r - begin), static_cast<Eigen::Index>(part.a_idx[j])) = v;
      }
    const auto draws = sample_conditional_rows(model, x, opts, seed, begin);
    for (std::size_t r = begin; r < end; ++r) {
      out[r] = summarize(draws[r - begin], alpha);
      if (on_draws) on_draws(r, draws[r - begin]);
    }
  });
  return out;
}

ImputeResult impute(std::span<const double> x_partial, const GenerativeModel& model,
                    const InferenceOptions& opts, double alpha, std::uint64_t seed,
                    std::size_t point_index) {
  const std::size_t p = model.net.output_dim();
  if (x_partial.size() != p)
    throw InputError("impute: row has " + std::to_string(x_partial.size()) + " values, model expects " +
                     std::to_string(p));
  ImputeResult out;
  RowMatrix x(1, static_cast<Eigen::Index>(p));
  for (std::size_t k = 0; k < p; ++k) {
    x(0, static_cast<Eigen::Index>(k)) = x_partial[k];
    if (std::isnan(x_partial[k])) out.missing.push_back(k);
  }
  if (out.missing.size() == p) throw InputError("impute: every coordinate is missing");
  if (out.missing.empty()) return out;
  const auto draws = sample_conditional_rows(model, x, opts, seed, point_index);
  out.prediction = summarize(draws.front(), alpha);
  return out;
}

std::vector<ImputeResult> impute_rows(const GenerativeModel& model, const RowMatrix& x,
                                      const InferenceOptions& opts, double alpha,
                                      std::uint64_t seed) {
  const std::size_t p = model.net.output_dim();
  if (static_cast<std::size_t>(x.cols()) != p)
    throw InputError("impute: data has " + std::to_string(x.cols()) + " columns, model expects " +
                     std::to_string(p));
  const std::size_t n = static_cast<std::size_t>(x.rows());
  std::vector<ImputeResult> out(n);
  std::vector<std::size_t> todo;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t k = 0; k < p; ++k)
      if (std::isnan(x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k))))
        out[r].missing.push_back(k);
    if (out[r].missing.size() == p)
      throw InputError("impute: row " + std::to_string(r + 1) + " has no observed values");
    if (!out[r].missing.empty()) todo.push_back(r);
  }

  // Rows with missing cells are batched by position in `todo`; each chain is
  // still seeded by its original row index.
  const std::size_t chunks = (todo.size() + kChunkRows - 1) / kChunkRows;
  parallel_for(chunks, opts.threads, [&](std::size_t c) {
    const std::size_t begin = c * kChunkRows;
    const std::size_t end = std::min(todo.size(), begin + kChunkRows);
    RowMatrix batch(static_cast<Eigen::Index>(end - begin), x.cols());
    for (std::size_t i = begin; i < end; ++i)
      batch.row(static_cast<Eigen::Index>(i - begin)) = x.row(static_cast<Eigen::Index>(todo[i]));
    const std::span<const std::size_t> idx(todo.data() + begin, end - begin);
    const auto draws = sample_conditional_rows(model, batch, opts, seed, 0, idx);
    for (std::size_t i = begin; i < end; ++i) out[todo[i]].prediction = summarize(draws[i - begin], alpha);
  });
  return out;
}

void write_draws_csv(const std::string& path, const PosteriorDraws& draws,
                     const std::vector<std::string>& b_names) {
  std::ofstream out(path);
  if (!out) throw InputError("cannot write draws file '" + path + "'");
  out << "m";
  for (Eigen::Index j = 0; j < draws.z_draws.cols(); ++j) out << ",z" << (j + 1);
  for (std::size_t j = 0; j < draws.b_idx.size(); ++j)
    out << ',' << (j < b_names.size() ? b_names[j] : "x" + std::to_string(draws.b_idx[j] + 1));
  out << '\n';
  for (Eigen::Index m = 0; m < draws.z_draws.rows(); ++m) {
    out << (m + 1);
    for (Eigen::Index j = 0; j < draws.z_draws.cols(); ++j) out << ',' << format_double(draws.z_draws(m, j));
    for (Eigen::Index j = 0; j < draws.xb_draws.cols(); ++j)
      out << ',' << format_double(draws.xb_draws(m, j));
    out << '\n';
  }
}

}  // namespace bgm
