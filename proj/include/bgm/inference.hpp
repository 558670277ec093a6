#pragma once

#include "bgm/common.hpp"
#include "bgm/hmc.hpp"
#include "bgm/trainer.hpp"

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace bgm {

// Conditioning set A and target set B over coordinates 0..p-1. The text form
// used on the command line is 1-based: "a=1-49;b=50" or "a=1,3,5-7;b=2,4".
struct PartitionSpec {
  std::vector<std::size_t> a_idx;
  std::vector<std::size_t> b_idx;

  // Sorts both lists, then requires them to be nonempty, disjoint and to
  // cover 0..p-1. Throws InputError.
  void validate(std::size_t p);

  static PartitionSpec parse(std::string_view text, std::size_t p);
  // B = all other coordinates.
  static PartitionSpec from_observed(std::vector<std::size_t> a_idx, std::size_t p);
};

struct InferenceOptions {
  HMCConfig hmc;
  // 0 conditions on theta = mu_phi; K > 0 splits the draws evenly across K
  // networks sampled from q_phi.
  std::size_t posterior_networks = 0;
  std::size_t threads = 1;  // 0 uses the hardware concurrency
};

struct PosteriorDraws {
  RowMatrix z_draws;   // n_samples x d_z
  RowMatrix xb_draws;  // n_samples x |B| (standardized units)
  std::vector<std::size_t> b_idx;
  double acceptance_rate = 0.0;
  double step_size = 0.0;
};

struct PredictionResult {
  Vector point;
  Vector lower;
  Vector upper;
  double alpha = 0.05;
  double acceptance_rate = 0.0;
};

// ln N(z; 0, I) + ln p(x_A | z, theta) with the floored diagonal decoder.
LatentPosterior latent_conditional_log_posterior(std::span<const double> x_a,
                                                 std::span<const double> z,
                                                 const GenerativeModel& model,
                                                 const PartitionSpec& partition);

// Batched conditional latent posterior. Row r of `x` (rows x p) is one query;
// its NaN cells are unobserved and excluded from the likelihood. Evaluation
// of one row never reads another row's data.
class LatentConditionalTarget {
 public:
  LatentConditionalTarget(const DenseNet& net, std::span<const double> theta, double floor,
                          const RowMatrix& x);
  void operator()(const double* z, std::size_t rows, double* logp, double* grad);

 private:
  const DenseNet* net_;
  std::vector<double> theta_;
  double floor_;
  RowMatrix x_;
  std::vector<unsigned char> observed_;
  NetCache cache_;
  std::vector<double> input_;
  std::vector<double> dmu_;
  std::vector<double> dsigma2_;
  std::vector<unsigned char> bad_;
};

// Two-step sampler for each row of `x`: HMC over z given the observed cells,
// then X_B ~ N(mu_B(z), sigma2_B(z) + floor) for the NaN cells. Row r uses
// seed mix_seed(seed, i) with i = point_indices[r], or first_index + r when
// no indices are given; results do not depend on how rows are batched.
// Model is read-only.
std::vector<PosteriorDraws> sample_conditional_rows(const GenerativeModel& model,
                                                    const RowMatrix& x,
                                                    const InferenceOptions& opts,
                                                    std::uint64_t seed,
                                                    std::size_t first_index = 0,
                                                    std::span<const std::size_t> point_indices = {});

// Single query; x_a in standardized units, ordered as partition.a_idx.
PosteriorDraws sample_conditional(std::span<const double> x_a, const GenerativeModel& model,
                                  const PartitionSpec& partition, const InferenceOptions& opts,
                                  std::uint64_t seed, std::size_t point_index = 0);

Vector point_estimate(const PosteriorDraws& draws);

// Linear interpolation at 1 + (n - 1) q between order statistics of `sorted`.
double quantile_type7(std::span<const double> sorted, double q);

// Per-coordinate alpha/2 and 1 - alpha/2 quantiles of xb_draws.
std::pair<Vector, Vector> interval_estimate(const PosteriorDraws& draws, double alpha);

PredictionResult summarize(const PosteriorDraws& draws, double alpha);

// Point and interval predictions for every row of x_a (rows x |A|,
// standardized), processed in lockstep chunks across `opts.threads` workers.
// on_draws, when set, sees every row's draws (possibly from several threads).
using DrawsCallback = std::function<void(std::size_t row, const PosteriorDraws& draws)>;
std::vector<PredictionResult> predict_rows(const GenerativeModel& model,
                                           const PartitionSpec& partition, const RowMatrix& x_a,
                                           const InferenceOptions& opts, double alpha,
                                           std::uint64_t seed, const DrawsCallback& on_draws = {});

struct ImputeResult {
  std::vector<std::size_t> missing;  // 0-based coordinates, ascending
  PredictionResult prediction;       // empty when nothing is missing
};

// x_partial has NaN at missing coordinates. Throws InputError when every
// coordinate is missing.
ImputeResult impute(std::span<const double> x_partial, const GenerativeModel& model,
                    const InferenceOptions& opts, double alpha, std::uint64_t seed,
                    std::size_t point_index = 0);

// Row-wise imputation; row r uses point index r. Errors name the 1-based row.
std::vector<ImputeResult> impute_rows(const GenerativeModel& model, const RowMatrix& x,
                                      const InferenceOptions& opts, double alpha,
                                      std::uint64_t seed);

// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
// is rethrown after all workers stop.
void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn);

// Audit export: columns m, z1..z{d_z}, then the B column names.
void write_draws_csv(const std::string& path, const PosteriorDraws& draws,
                     const std::vector<std::string>& b_names);

}  // namespace bgm
