#include "bgm/conformal.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace bgm {

double conformal_quantile(std::span<const double> scores, double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("alpha must lie in (0, 1)");
  const std::size_t n = scores.size();
  if (n == 0) throw ConfigError("conformal calibration set is empty");
  const double pos = std::ceil(static_cast<double>(n + 1) * (1.0 - alpha) - 1e-12);
  const auto index = static_cast<std::size_t>(pos);
  if (index > n) return std::numeric_limits<double>::infinity();
  std::vector<double> s(scores.begin(), scores.end());
  std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(index - 1), s.end());
  return s[index - 1];
}

ConformalIntervals split_cp(std::span<const double> cal_pred, std::span<const double> cal_truth,
                            std::span<const double> test_pred, double alpha) {
  if (cal_pred.size() != cal_truth.size()) throw ConfigError("split_cp: calibration size mismatch");
  std::vector<double> scores(cal_pred.size());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = std::abs(cal_truth[i] - cal_pred[i]);
  ConformalIntervals out;
  out.quantile = conformal_quantile(scores, alpha);
  for (double p : test_pred) {
    out.lower.push_back(p - out.quantile);
    out.upper.push_back(p + out.quantile);
  }
  return out;
}

ConformalIntervals lw_cp(std::span<const double> cal_pred, std::span<const double> cal_truth,
                         std::span<const double> cal_scale, std::span<const double> test_pred,
                         std::span<const double> test_scale, double alpha) {
  if (cal_pred.size() != cal_truth.size() || cal_pred.size() != cal_scale.size())
    throw ConfigError("lw_cp: calibration size mismatch");
  if (test_pred.size() != test_scale.size()) throw ConfigError("lw_cp: test size mismatch");
  for (const auto* s : {&cal_scale, &test_scale})
    for (double v : *s)
      if (!(v > 0.0) || !std::isfinite(v)) throw ConfigError("lw_cp: local scale must be positive");
  std::vector<double> scores(cal_pred.size());
  for (std::size_t i = 0; i < scores.size(); ++i)
    scores[i] = std::abs(cal_truth[i] - cal_pred[i]) / cal_scale[i];
  ConformalIntervals out;
  out.quantile = conformal_quantile(scores, alpha);
  for (std::size_t i = 0; i < test_pred.size(); ++i) {
    out.lower.push_back(test_pred[i] - out.quantile * test_scale[i]);
    out.upper.push_back(test_pred[i] + out.quantile * test_scale[i]);
  }
  return out;
}

KnnScale::KnnScale(const RowMatrix& features, std::span<const double> abs_residuals, std::size_t k)
    : residuals_(abs_residuals.begin(), abs_residuals.end()), k_(k) {
  const Eigen::Index n = features.rows();
  if (static_cast<std::size_t>(n) != residuals_.size())
    throw ConfigError("KnnScale: one residual per reference row required");
  if (n == 0 || k == 0) throw ConfigError("KnnScale: empty reference set or k = 0");
  k_ = std::min<std::size_t>(k, static_cast<std::size_t>(n));
  mean_ = features.colwise().mean().transpose();
  inv_sd_.resize(features.cols());
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    const double var = n > 1 ? (features.col(j).array() - mean_[j]).square().sum() / static_cast<double>(n - 1)
                             : 0.0;
    inv_sd_[j] = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  }
  ref_ = (features.rowwise() - mean_.transpose()).array().rowwise() * inv_sd_.transpose().array();
}

double KnnScale::operator()(std::span<const double> x) const {
  if (static_cast<Eigen::Index>(x.size()) != ref_.cols()) throw ConfigError("KnnScale: wrong feature count");
  const Eigen::Map<const Eigen::RowVectorXd> xv(x.data(), static_cast<Eigen::Index>(x.size()));
  const Eigen::RowVectorXd q = (xv - mean_.transpose()).array() * inv_sd_.transpose().array();
  std::vector<std::pair<double, std::size_t>> dist(static_cast<std::size_t>(ref_.rows()));
  for (Eigen::Index i = 0; i < ref_.rows(); ++i)
    dist[static_cast<std::size_t>(i)] = {(ref_.row(i) - q).squaredNorm(), static_cast<std::size_t>(i)};
  std::nth_element(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_ - 1), dist.end());
  double s = 0.0;
  for (std::size_t i = 0; i < k_; ++i) s += residuals_[dist[i].second];
  return s / static_cast<double>(k_);
}

std::vector<double> KnnScale::operator()(const RowMatrix& x) const {
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    out[static_cast<std::size_t>(i)] =
        (*this)(std::span<const double>(x.row(i).data(), static_cast<std::size_t>(x.cols())));
  return out;
}

}  // namespace bgm
