#include "bgm/simulation.hpp"

#include "bgm/inference.hpp"

#include <algorithm>
#include <cmath>

namespace bgm {

void SimulationSpec::validate() const {
  if (k == 0 || d == 0 || n == 0) throw ConfigError("simulation: k, d and n must be positive");
}

RowMatrix SimulationData::joint() const {
  RowMatrix out(v.rows(), v.cols() + 1);
  out.leftCols(v.cols()) = v;
  out.col(v.cols()) = r;
  return out;
}

SimulationTruth draw_truth(const SimulationSpec& spec) {
  spec.validate();
  Rng rng(mix_seed(spec.seed, 0));
  std::normal_distribution<double> normal;
  SimulationTruth t;
  t.a.resize(static_cast<Eigen::Index>(spec.d), static_cast<Eigen::Index>(spec.k));
  for (Eigen::Index i = 0; i < t.a.size(); ++i) t.a.data()[i] = normal(rng);
  t.w.resize(static_cast<Eigen::Index>(spec.k));
  t.u.resize(static_cast<Eigen::Index>(spec.k));
  for (Eigen::Index i = 0; i < t.w.size(); ++i) t.w[i] = normal(rng);
  for (Eigen::Index i = 0; i < t.u.size(); ++i) t.u[i] = normal(rng);
  return t;
}

double response_sd(std::span<const double> z, const Vector& u) {
  double s = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) s += z[j] * u[static_cast<Eigen::Index>(j)];
  return 0.1 + 0.5 * sigmoid(s);
}

SimulationData simulate_from(const SimulationTruth& truth, std::size_t n, std::uint64_t seed) {
  const Eigen::Index k = truth.a.cols();
  Rng rng(seed);
  std::normal_distribution<double> normal;
  SimulationData out;
  out.truth = truth;
  out.z.resize(static_cast<Eigen::Index>(n), k);
  for (Eigen::Index i = 0; i < out.z.size(); ++i) out.z.data()[i] = normal(rng);
  out.v = kLoadingScale * out.z * truth.a.transpose();
  for (Eigen::Index i = 0; i < out.v.size(); ++i) out.v.data()[i] += kPredictorNoise * normal(rng);
  out.r.resize(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < out.r.size(); ++i) {
    const auto zi = out.z.row(i);
    const double mean = std::sin(zi.dot(truth.w.transpose()));
    const double sd = response_sd(std::span<const double>(zi.data(), static_cast<std::size_t>(k)), truth.u);
    out.r[i] = mean + sd * normal(rng);
  }
  return out;
}

SimulationData simulate(const SimulationSpec& spec) {
  return simulate_from(draw_truth(spec), spec.n, mix_seed(spec.seed, 1));
}

OracleModel OracleModel::from(const RowMatrix& a) {
  const Eigen::Index k = a.cols();
  const double ratio = kLoadingScale * kLoadingScale / (kPredictorNoise * kPredictorNoise);
  const Eigen::MatrixXd precision =
      Eigen::MatrixXd::Identity(k, k) + ratio * (a.transpose() * a);
  OracleModel o;
  o.posterior_cov = precision.llt().solve(Eigen::MatrixXd::Identity(k, k));
  o.posterior_cov = 0.5 * (o.posterior_cov + o.posterior_cov.transpose()).eval();
  o.posterior_gain =
      o.posterior_cov * (kLoadingScale / (kPredictorNoise * kPredictorNoise)) * a.transpose();
  o.cov_factor = o.posterior_cov.llt().matrixL();
  return o;
}

ConditionalGaussian oracle_posterior_z(std::span<const double> v, const OracleModel& oracle) {
  if (static_cast<Eigen::Index>(v.size()) != oracle.posterior_gain.cols())
    throw ConfigError("oracle_posterior_z: v has the wrong length");
  const Eigen::Map<const Vector> vv(v.data(), static_cast<Eigen::Index>(v.size()));
  return {oracle.posterior_gain * vv, oracle.posterior_cov};
}

OracleInterval oracle_interval(std::span<const double> v, const OracleModel& oracle,
                               const SimulationTruth& truth, double alpha, std::size_t m_draws,
                               std::uint64_t seed) {
  if (m_draws < 2) throw ConfigError("oracle_interval needs at least two draws");
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  const ConditionalGaussian post = oracle_posterior_z(v, oracle);
  const Eigen::Index k = post.mean.size();
  Rng rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> r(m_draws);
  Vector eps(k), z(k);
  for (std::size_t m = 0; m < m_draws; ++m) {
    for (Eigen::Index j = 0; j < k; ++j) eps[j] = normal(rng);
    z.noalias() = post.mean + oracle.cov_factor * eps;
    const double sd = response_sd(std::span<const double>(z.data(), static_cast<std::size_t>(k)), truth.u);
    r[m] = std::sin(z.dot(truth.w)) + sd * normal(rng);
  }
  std::sort(r.begin(), r.end());
  OracleInterval out;
  out.lower = quantile_type7(r, alpha / 2.0);
  out.upper = quantile_type7(r, 1.0 - alpha / 2.0);
  out.length = out.upper - out.lower;
  return out;
}

}  // namespace bgm
