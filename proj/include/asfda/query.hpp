#pragma once

#include <set>
#include <string>
#include <vector>

#include "asfda/tensor.hpp"

namespace asfda::query {

/// One row of the query score table.
struct QueryRow {
    std::string sample_id;
    double pakd = 0.0;
    double pd = 0.0;
    double dkd = 0.0;
    double asd = 0.0;
    double dkd_qt = 0.0;
    double asd_qt = 0.0;
    double q = 0.0;
    int round = 0;

    bool operator==(const QueryRow&) const = default;
};

/// Rows ordered by q descending, then sample_id ascending.
using QueryScores = std::vector<QueryRow>;

/// Cosine distance between a sample's round-0 and current-round embeddings.
double pakd(const EmbeddingVec& e0, const EmbeddingVec& ei);

/// Rank-weighted mean cosine distance of each sample to every sample ranked
/// above it by PAKD (descending, ties by id). The top-ranked sample gets 1.
ScoreVector pd_scores(const std::vector<EmbeddingVec>& embeddings_current, const ScoreVector& pakd);

ScoreVector dkd(const ScoreVector& pakd, const ScoreVector& pd);

/// Mask temperature for round r of R: 3 at r = 1 falling log-linearly to 1.5 at
/// r = R. R = 1 yields 3.
double temperature(int r, int max_round);

/// Voxels whose tempered background probability P0 / tau is strictly below
/// the largest foreground probability.
BinaryMask foreground_mask(const ProbVolume& p, double tau);

double asd_with_temperature(const ProbVolume& p, double tau);
double asd(const ProbVolume& p, int r, int max_round);

/// Min-max normalizes then quantile-transforms each column; q = sum.
QueryScores query_criterion(const ScoreVector& dkd, const ScoreVector& asd, int round = 0);

/// Full DKD + ASD pipeline for one round. `e0` holds the round-0 embeddings,
/// `current` the current encoder's embeddings, both covering every id in `probs`.
QueryScores score_round(const std::vector<EmbeddingVec>& e0, const std::vector<EmbeddingVec>& current,
                        const std::vector<ProbVolume>& probs, int r, int max_round);

struct BatchSelection {
    std::vector<std::string> ids;
    bool shortfall = false;
};

/// Top-n_b eligible samples by score descending, ties by id ascending.
BatchSelection select_top(const ScoreVector& scores, int n_b, const std::set<std::string>& excluded);
BatchSelection select_batch(const QueryScores& scores, int n_b, const std::set<std::string>& excluded);

ScoreVector q_column(const QueryScores& scores);

}  // namespace asfda::query
