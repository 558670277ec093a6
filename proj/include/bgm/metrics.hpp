#pragma once

#include "bgm/common.hpp"

#include <limits>
#include <span>
#include <vector>

namespace bgm {

// Correlations of constant inputs are undefined and reported as NaN.
inline constexpr double kUndefined = std::numeric_limits<double>::quiet_NaN();

double pearson(std::span<const double> a, std::span<const double> b);

// Average ranks (1-based); tied values share the mean of their positions.
std::vector<double> midranks(std::span<const double> v);

double spearman(std::span<const double> a, std::span<const double> b);

struct MetricsReport {
  double mse = kUndefined;
  double pcc = kUndefined;
  double scc = kUndefined;
  double coverage = kUndefined;
  double avg_pi_length = kUndefined;
  double pcc_len = kUndefined;
  double scc_len = kUndefined;
};

// Point metrics only; interval fields stay undefined.
MetricsReport point_metrics(std::span<const double> point, std::span<const double> truth);

MetricsReport compute_metrics(std::span<const double> point, std::span<const double> lower,
                              std::span<const double> upper, std::span<const double> truth,
                              std::span<const double> oracle_lengths);

}  // namespace bgm
