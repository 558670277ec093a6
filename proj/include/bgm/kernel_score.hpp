#pragma once

#include "bgm/common.hpp"

#include <span>

namespace bgm {

// RBF kernel score k(y,y) - 2 E[k(y,Y')] + E[k(Y',Y'')] against the empirical
// measure of the rows of `draws`. The double expectation is the V-statistic
// (diagonal included), so the value lies in [0, 4].
double kernel_score(std::span<const double> y, const RowMatrix& draws, double bandwidth);

// Same with the U-statistic (off-diagonal pairs only) for the double
// expectation. Needs at least two draws.
double kernel_score_u(std::span<const double> y, const RowMatrix& draws, double bandwidth);

// Median pairwise Euclidean distance among draws; 1 when that median is 0.
double median_heuristic_bandwidth(const RowMatrix& draws);

}  // namespace bgm
