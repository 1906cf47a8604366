#pragma once

#include <span>
#include <vector>

#include "asfda/tensor.hpp"

namespace asfda::bench {

/// Separable box filter of half-width `radius`; border voxels average over
/// their in-bounds neighbourhood.
std::vector<double> box_smooth(std::span<const double> volume, const Extent& e, int radius);

}  // namespace asfda::bench
