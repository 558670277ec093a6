#pragma once

#include "bgm/common.hpp"
#include "bgm/dense_net.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace bgm {

struct RegressorConfig {
  std::vector<std::size_t> hidden{64, 64, 64};
  double lr = 1e-3;
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
};

// Squared-error MLP point predictor (LeakyReLU hidden layers) used behind
// the conformal baselines. Features and response are standardized
// internally with the training statistics.
class MlpRegressor {
 public:
  MlpRegressor(const RowMatrix& x, std::span<const double> y, const RegressorConfig& cfg);
  std::vector<double> predict(const RowMatrix& x) const;
  double final_train_mse() const { return final_mse_; }

 private:
  DenseNet net_;
  std::vector<double> params_;
  Vector x_mean_;
  Vector x_inv_sd_;
  double y_mean_ = 0.0;
  double y_sd_ = 1.0;
  double final_mse_ = 0.0;
};

// Ordinary least squares with an intercept.
class LinearRegression {
 public:
  LinearRegression(const RowMatrix& x, std::span<const double> y);
  std::vector<double> predict(const RowMatrix& x) const;
  const Vector& coefficients() const { return beta_; }  // intercept first

 private:
  Vector beta_;
};

// Training mean of the response for every row.
std::vector<double> column_mean_predict(std::span<const double> y_train, std::size_t n_test);

}  // namespace bgm
