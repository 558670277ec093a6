#include "bgm/kernel_score.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace bgm {

namespace {

struct KernelSums {
  double cross = 0.0;     // sum_m k(y, y_m)
  double diagonal = 0.0;  // sum_m k(y_m, y_m)
  double off = 0.0;       // sum_{m != l} k(y_m, y_l)
};

KernelSums kernel_sums(std::span<const double> y, const RowMatrix& draws, double bandwidth) {
  if (draws.rows() == 0) throw ConfigError("kernel_score: no draws");
  if (!(bandwidth > 0.0)) throw ConfigError("kernel_score: bandwidth must be positive");
  if (static_cast<Eigen::Index>(y.size()) != draws.cols())
    throw ConfigError("kernel_score: y and draws have different dimensions");
  const double scale = -0.5 / (bandwidth * bandwidth);
  const Eigen::Map<const Eigen::RowVectorXd> yv(y.data(), static_cast<Eigen::Index>(y.size()));
  KernelSums s;
  const Eigen::Index n = draws.rows();
  for (Eigen::Index m = 0; m < n; ++m) {
    s.cross += std::exp(scale * (draws.row(m) - yv).squaredNorm());
    s.diagonal += 1.0;
    for (Eigen::Index l = m + 1; l < n; ++l)
      s.off += 2.0 * std::exp(scale * (draws.row(m) - draws.row(l)).squaredNorm());
  }
  return s;
}

}  // namespace

double kernel_score(std::span<const double> y, const RowMatrix& draws, double bandwidth) {
  const KernelSums s = kernel_sums(y, draws, bandwidth);
  const auto n = static_cast<double>(draws.rows());
  const double v = 1.0 - 2.0 * s.cross / n + (s.diagonal + s.off) / (n * n);
  return std::clamp(v, 0.0, 4.0);
}

double kernel_score_u(std::span<const double> y, const RowMatrix& draws, double bandwidth) {
  if (draws.rows() < 2) throw ConfigError("kernel_score_u: needs at least two draws");
  const KernelSums s = kernel_sums(y, draws, bandwidth);
  const auto n = static_cast<double>(draws.rows());
  return 1.0 - 2.0 * s.cross / n + s.off / (n * (n - 1.0));
}

double median_heuristic_bandwidth(const RowMatrix& draws) {
  const Eigen::Index n = draws.rows();
  if (n < 2) return 1.0;
  std::vector<double> d;
  d.reserve(static_cast<std::size_t>(n * (n - 1) / 2));
  for (Eigen::Index m = 0; m < n; ++m)
    for (Eigen::Index l = m + 1; l < n; ++l) d.push_back((draws.row(m) - draws.row(l)).norm());
  const auto mid = d.begin() + static_cast<std::ptrdiff_t>(d.size() / 2);
  std::nth_element(d.begin(), mid, d.end());
  double med = *mid;
  if (d.size() % 2 == 0) med = 0.5 * (med + *std::max_element(d.begin(), mid));
  return med > 0.0 ? med : 1.0;
}

}  // namespace bgm
