#pragma once

#include <optional>
#include <set>
#include <string>
#include <vector>

#include "asfda/tensor.hpp"

namespace asfda::reliability {

enum class ConfidenceVariant {
    Mean,  ///< mean foreground margin, bounded in [0,1]
    Sum,   ///< raw voxel sum of the foreground margin
};

ConfidenceVariant parse_confidence_variant(const std::string& name);
std::string to_string(ConfidenceVariant v);

struct SelectionConfig {
    int n_su = 1;
    double tau_c = 2.0;
    ConfidenceVariant variant = ConfidenceVariant::Mean;
};

/// argmax != 0 per voxel; ties resolve to the lowest class index.
BinaryMask predicted_foreground_mask(const ProbVolume& p);

/// Top-1 minus top-2 probability over predicted-foreground voxels. The mean
/// variant returns 0 when nothing is predicted foreground.
double confidence(const ProbVolume& p, ConfidenceVariant variant = ConfidenceVariant::Mean);

double mean_confidence(const std::vector<double>& confidences);

/// round(n_su * tau_c / c_bar) clamped to [n_su, n_unlabeled]; c_bar == 0
/// takes every unlabeled sample.
int candidate_count(const SelectionConfig& cfg, double c_bar, int n_unlabeled);

/// Minimum cosine distance from the candidate to any anchor.
double semantic_distance(const EmbeddingVec& candidate, const std::vector<EmbeddingVec>& anchors);

struct UnlabeledSample {
    std::string sample_id;
    double confidence;
    EmbeddingVec embedding;
};

struct ReliabilityRow {
    std::string sample_id;
    double confidence = 0.0;
    std::optional<double> semantic_distance;  ///< set for candidates only
    std::optional<double> reliability;        ///< set for candidates only
    bool candidate = false;
    bool selected = false;
    int round = 0;

    bool operator==(const ReliabilityRow&) const = default;
};

struct ReliabilityResult {
    std::vector<ReliabilityRow> rows;  ///< sorted by sample_id
    std::vector<std::string> selected;  ///< reliability descending
    std::set<std::string> exclusion_update;
    int candidate_count = 0;
    double mean_confidence = 0.0;
};

ReliabilityResult select_reliable(const std::vector<UnlabeledSample>& unlabeled, const SelectionConfig& cfg,
                                  const std::vector<EmbeddingVec>& anchors, int round = 0);

}  // namespace asfda::reliability
