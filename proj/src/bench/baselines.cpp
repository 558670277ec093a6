#include "bgm/baselines.hpp"

#include "bgm/adam.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bgm {

MlpRegressor::MlpRegressor(const RowMatrix& x, std::span<const double> y, const RegressorConfig& cfg)
    : net_(static_cast<std::size_t>(x.cols()), cfg.hidden, 1) {
  const Eigen::Index n = x.rows();
  if (static_cast<std::size_t>(n) != y.size()) throw ConfigError("MlpRegressor: one response per row");
  if (n < 2 || cfg.batch_size == 0) throw ConfigError("MlpRegressor: too few rows or zero batch size");

  x_mean_ = x.colwise().mean().transpose();
  x_inv_sd_.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - x_mean_[j]).square().sum() / static_cast<double>(n - 1);
    x_inv_sd_[j] = var > 0.0 ? 1.0 / std::sqrt(var) : 1.0;
  }
  y_mean_ = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
  double yv = 0.0;
  for (double v : y) yv += (v - y_mean_) * (v - y_mean_);
  y_sd_ = yv > 0.0 ? std::sqrt(yv / static_cast<double>(n - 1)) : 1.0;

  const RowMatrix xs = (x.rowwise() - x_mean_.transpose()).array().rowwise() * x_inv_sd_.transpose().array();
  std::vector<double> ys(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) ys[i] = (y[i] - y_mean_) / y_sd_;

  Rng rng(mix_seed(cfg.seed, 11));
  params_ = net_.initial_params(rng);
  AdamState adam(params_.size(), cfg.lr);
  std::vector<std::size_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  const std::size_t d = static_cast<std::size_t>(x.cols());
  NetCache cache;
  std::vector<double> xb, dmu, dsig, grad(params_.size());
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double se = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t m = std::min(cfg.batch_size, order.size() - start);
      xb.resize(m * d);
      for (std::size_t i = 0; i < m; ++i)
        std::copy_n(xs.row(static_cast<Eigen::Index>(order[start + i])).data(), d, xb.data() + i * d);
      net_.forward(params_, xb.data(), m, cache);
      dmu.assign(m, 0.0);
      dsig.assign(m, 0.0);
      for (std::size_t i = 0; i < m; ++i) {
        const double r = cache.mu[i] - ys[order[start + i]];
        se += r * r;
        dmu[i] = 2.0 * r / static_cast<double>(m);
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      net_.backward(params_, cache, dmu.data(), dsig.data(), nullptr, grad);
      adam_step(adam, params_, grad, false);
    }
    final_mse_ = se / static_cast<double>(n) * y_sd_ * y_sd_;
  }
}

std::vector<double> MlpRegressor::predict(const RowMatrix& x) const {
  if (x.cols() != x_mean_.size()) throw ConfigError("MlpRegressor: wrong feature count");
  const RowMatrix xs = (x.rowwise() - x_mean_.transpose()).array().rowwise() * x_inv_sd_.transpose().array();
  NetCache cache;
  net_.forward(params_, xs.data(), static_cast<std::size_t>(xs.rows()), cache);
  std::vector<double> out(static_cast<std::size_t>(x.rows()));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = y_mean_ + y_sd_ * cache.mu[i];
  return out;
}

LinearRegression::LinearRegression(const RowMatrix& x, std::span<const double> y) {
  if (static_cast<std::size_t>(x.rows()) != y.size()) throw ConfigError("LinearRegression: one response per row");
  Eigen::MatrixXd design(x.rows(), x.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(x.cols()) = x;
  const Eigen::Map<const Vector> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  beta_ = design.colPivHouseholderQr().solve(yv);
}

std::vector<double> LinearRegression::predict(const RowMatrix& x) const {
  if (x.cols() + 1 != beta_.size()) throw ConfigError("LinearRegression: wrong feature count");
  const Vector pred = (x * beta_.tail(x.cols())).array() + beta_[0];
  return {pred.data(), pred.data() + pred.size()};
}

std::vector<double> column_mean_predict(std::span<const double> y_train, std::size_t n_test) {
  if (y_train.empty()) throw ConfigError("column mean of an empty training set");
  const double mean = std::accumulate(y_train.begin(), y_train.end(), 0.0) / static_cast<double>(y_train.size());
  return std::vector<double>(n_test, mean);
}

}  // namespace bgm
