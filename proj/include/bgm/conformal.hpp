#pragma once

#include "bgm/common.hpp"

#include <span>
#include <vector>

namespace bgm {

// The ceil((n + 1)(1 - alpha))-th smallest score, or +inf when that index
// exceeds n.
double conformal_quantile(std::span<const double> scores, double alpha);

struct ConformalIntervals {
  std::vector<double> lower;
  std::vector<double> upper;
  double quantile = 0.0;  // half-width (split) or score multiplier (locally weighted)
};

// Absolute-residual split conformal intervals: test_pred +/- q.
ConformalIntervals split_cp(std::span<const double> cal_pred, std::span<const double> cal_truth,
                            std::span<const double> test_pred, double alpha);

// Locally weighted intervals: scores |residual| / scale, intervals
// test_pred +/- q * test_scale. Scales must be strictly positive.
ConformalIntervals lw_cp(std::span<const double> cal_pred, std::span<const double> cal_truth,
                         std::span<const double> cal_scale, std::span<const double> test_pred,
                         std::span<const double> test_scale, double alpha);

// Local noise level: mean absolute residual of the k nearest reference
// points, in feature space standardized by the reference statistics.
class KnnScale {
 public:
  KnnScale(const RowMatrix& features, std::span<const double> abs_residuals, std::size_t k = 50);
  double operator()(std::span<const double> x) const;
  std::vector<double> operator()(const RowMatrix& x) const;

 private:
  RowMatrix ref_;
  Vector mean_;
  Vector inv_sd_;
  std::vector<double> residuals_;
  std::size_t k_;
};

}  // namespace bgm
