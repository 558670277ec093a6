#include "bgm/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bgm {

namespace {

void require_same_length(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw ConfigError(std::string(what) + ": inputs have different lengths");
}

// Spread at rounding level counts as constant: p + q - (p - q) varies in the
// last bits even when every width is 2q.
bool nearly_constant(std::span<const double> v) {
  if (v.empty()) return true;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  const double scale = std::max(std::abs(*lo), std::abs(*hi));
  return *hi - *lo <= 1e-12 * scale;
}

}  // namespace

double pearson(std::span<const double> a, std::span<const double> b) {
  require_same_length(a.size(), b.size(), "pearson");
  const std::size_t n = a.size();
  if (n < 2 || nearly_constant(a) || nearly_constant(b)) return kUndefined;
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / static_cast<double>(n);
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / static_cast<double>(n);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0.0) || !(sbb > 0.0) || !std::isfinite(saa) || !std::isfinite(sbb)) return kUndefined;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::vector<double> midranks(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  require_same_length(a.size(), b.size(), "spearman");
  if (nearly_constant(a) || nearly_constant(b)) return kUndefined;
  const auto ra = midranks(a);
  const auto rb = midranks(b);
  return pearson(ra, rb);
}

MetricsReport point_metrics(std::span<const double> point, std::span<const double> truth) {
  require_same_length(point.size(), truth.size(), "metrics");
  if (point.empty()) throw ConfigError("metrics: no test points");
  MetricsReport m;
  double se = 0.0;
  for (std::size_t i = 0; i < point.size(); ++i) se += (point[i] - truth[i]) * (point[i] - truth[i]);
  m.mse = se / static_cast<double>(point.size());
  m.pcc = pearson(point, truth);
  m.scc = spearman(point, truth);
  return m;
}

MetricsReport compute_metrics(std::span<const double> point, std::span<const double> lower,
                              std::span<const double> upper, std::span<const double> truth,
                              std::span<const double> oracle_lengths) {
  MetricsReport m = point_metrics(point, truth);
  const std::size_t n = point.size();
  require_same_length(lower.size(), n, "metrics");
  require_same_length(upper.size(), n, "metrics");
  require_same_length(oracle_lengths.size(), n, "metrics");
  std::vector<double> len(n);
  std::size_t covered = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (lower[i] > upper[i]) throw ConfigError("metrics: interval with lower > upper");
    if (truth[i] >= lower[i] && truth[i] <= upper[i]) ++covered;
    len[i] = upper[i] - lower[i];
  }
  m.coverage = static_cast<double>(covered) / static_cast<double>(n);
  m.avg_pi_length = std::accumulate(len.begin(), len.end(), 0.0) / static_cast<double>(n);
  m.pcc_len = pearson(len, oracle_lengths);
  m.scc_len = spearman(len, oracle_lengths);
  return m;
}

}  // namespace bgm
