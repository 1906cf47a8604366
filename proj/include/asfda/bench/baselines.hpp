#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "asfda/orchestrator.hpp"

namespace asfda::bench {

/// Unmasked full-volume entropy.
ScoreVector enpy_scores(const std::vector<ProbVolume>& probs);
/// Negative mean top-1 probability.
ScoreVector lcon_scores(const std::vector<ProbVolume>& probs);
/// Negative mean top-1 minus top-2 margin.
ScoreVector mmar_scores(const std::vector<ProbVolume>& probs);

/// Greedy k-center over cosine distance, seeded with the labeled embeddings.
/// Each candidate scores its distance to the nearest center at the moment it
/// is picked, so the greedy order is the descending score order.
ScoreVector coreset_scores(const std::vector<EmbeddingVec>& candidates, const std::vector<EmbeddingVec>& labeled);

/// Uniform draws in [0,1) from a generator seeded by (seed, round).
ScoreVector rand_scores(const std::vector<std::string>& ids, std::uint64_t seed, int round);

/// Registered names: rand, enpy, lcon, mmar, coreset, dkd+asd (alias asfda),
/// dkd-high, dkd-low, asd-high, asd-low, asd-high-tau1.
std::shared_ptr<const al::QueryStrategy> make_strategy(const std::string& name);
std::vector<std::string> strategy_names();

}  // namespace asfda::bench
