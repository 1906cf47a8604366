#pragma once

#include <vector>

#include "asfda/tensor.hpp"

namespace asfda::bench {

/// 2|A n B| / (|A| + |B|) for class c; a class absent from both is 1.
double dice(const Tensor& pred, const Tensor& gt, int c);
/// Dice of classes 1..C-1.
std::vector<double> per_class_dice(const Tensor& pred, const Tensor& gt, int classes);
double mean_dice(const Tensor& pred, const Tensor& gt, int classes);

struct RankSumResult {
    double u = 0.0;  ///< U of group a
    double p = 1.0;  ///< two-sided
    bool exact = false;
};

/// Mann-Whitney U with midranks for ties. Exact permutation distribution when
/// the two groups hold at most 120 values together, otherwise the tie-corrected normal
/// approximation with continuity correction.
RankSumResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b);
RankSumResult mann_whitney_u_exact(const std::vector<double>& a, const std::vector<double>& b);
RankSumResult mann_whitney_u_normal(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace asfda::bench
