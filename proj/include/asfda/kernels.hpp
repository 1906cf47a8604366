#pragma once

#include <span>

#include "asfda/tensor.hpp"

namespace asfda {

/// 1 - cos(a, b), in [0, 2].
double cosine_distance(std::span<const double> a, std::span<const double> b);
double cosine_distance(const EmbeddingVec& a, const EmbeddingVec& b);

/// Affine map of the column onto [0,1]. A constant column maps to 0.5.
ScoreVector minmax_normalize(const ScoreVector& s);

/// Uniform quantile transform: (average 1-based rank - 1) / (N - 1), ties share
/// the averaged rank; a single entry maps to 0.5.
ScoreVector quantile_transform(const ScoreVector& s);

/// Natural-log entropy of p restricted to the mask, summed over voxels and
/// classes, with 0 log 0 = 0.
double masked_entropy(const ProbVolume& p, const BinaryMask& m);

/// Unmasked full-volume entropy.
double volume_entropy(const ProbVolume& p);

/// H x W x D labels from the per-voxel argmax, ties toward the lower class.
Tensor argmax_labels(const ProbVolume& p);

}  // namespace asfda
