#include "asfda/bench/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "asfda/errors.hpp"
#include "asfda/kernels.hpp"
#include "asfda/query.hpp"

namespace asfda::bench {

namespace {

// Mean over voxels of the top-1 probability (or of top-1 minus top-2).
double mean_top(const ProbVolume& p, bool margin) {
    double acc = 0.0;
    for (std::size_t v = 0; v < p.voxels(); ++v) {
        double a = -1.0, b = -1.0;
        for (std::size_t c = 0; c < p.classes(); ++c) {
            const double x = p.at(c, v);
            if (x > a) {
                b = a;
                a = x;
            } else if (x > b) {
                b = x;
            }
        }
        acc += margin ? a - std::max(b, 0.0) : a;
    }
    return acc / static_cast<double>(p.voxels());
}

template <class F>
ScoreVector per_volume(const std::vector<ProbVolume>& probs, F f) {
    require(!probs.empty(), ErrorKind::Pairing, "baseline needs probability volumes");
    ScoreVector s;
    for (const auto& p : probs) s.add(p.sample_id(), f(p));
    return s;
}

void require_context(const al::QueryContext& ctx, bool needs_probs, bool needs_embeddings) {
    require(ctx.unlabeled != nullptr, ErrorKind::Pairing, "query context lacks the unlabeled ids");
    if (needs_probs)
        require(ctx.probs != nullptr && ctx.probs->size() == ctx.unlabeled->size(), ErrorKind::Pairing,
                "query context lacks probability volumes");
    if (needs_embeddings)
        require(ctx.current != nullptr && ctx.current->size() == ctx.unlabeled->size(), ErrorKind::Pairing,
                "query context lacks embeddings");
}

class BaselineStrategy final : public al::QueryStrategy {
public:
    explicit BaselineStrategy(std::string name) : name_(std::move(name)) {}
    std::string name() const override { return name_; }

    al::StrategyScores score(const al::QueryContext& ctx) const override {
        if (name_ == "rand") {
            require_context(ctx, false, false);
            return {rand_scores(*ctx.unlabeled, ctx.seed, ctx.round), std::nullopt};
        }
        if (name_ == "coreset") {
            require_context(ctx, false, true);
            require(ctx.labeled_embeddings != nullptr, ErrorKind::Pairing, "coreset needs labeled embeddings");
            return {coreset_scores(*ctx.current, *ctx.labeled_embeddings), std::nullopt};
        }
        require_context(ctx, true, false);
        if (name_ == "enpy") return {enpy_scores(*ctx.probs), std::nullopt};
        if (name_ == "lcon") return {lcon_scores(*ctx.probs), std::nullopt};
        return {mmar_scores(*ctx.probs), std::nullopt};
    }

private:
    std::string name_;
};

// Single-criterion ablations: rank by DKD or ASD alone, high or low first.
class AblationStrategy final : public al::QueryStrategy {
public:
    AblationStrategy(std::string name, bool use_dkd, bool high, bool fixed_tau_one)
        : name_(std::move(name)), use_dkd_(use_dkd), high_(high), tau_one_(fixed_tau_one) {}
    std::string name() const override { return name_; }

    al::StrategyScores score(const al::QueryContext& ctx) const override {
        ScoreVector col;
        if (use_dkd_) {
            require_context(ctx, false, true);
            require(ctx.e0 != nullptr && ctx.e0->size() == ctx.current->size(), ErrorKind::Pairing,
                    "query context lacks round-0 embeddings");
            ScoreVector pakd_col;
            for (std::size_t i = 0; i < ctx.current->size(); ++i)
                pakd_col.add((*ctx.current)[i].sample_id(), query::pakd((*ctx.e0)[i], (*ctx.current)[i]));
            col = query::dkd(pakd_col, query::pd_scores(*ctx.current, pakd_col));
        } else {
            require_context(ctx, true, false);
            double tau = tau_one_ ? 1.0 : query::temperature(ctx.round, ctx.max_round);
            if (ctx.fixed_temperature && !tau_one_) tau = *ctx.fixed_temperature;
            for (const auto& p : *ctx.probs) col.add(p.sample_id(), query::asd_with_temperature(p, tau));
        }
        if (!high_) {
            auto v = col.scores();
            for (auto& x : v) x = -x;
            col = col.with_scores(v);
        }
        return {col, std::nullopt};
    }

private:
    std::string name_;
    bool use_dkd_, high_, tau_one_;
};

}  // namespace

ScoreVector enpy_scores(const std::vector<ProbVolume>& probs) {
    return per_volume(probs, [](const ProbVolume& p) { return volume_entropy(p); });
}

ScoreVector lcon_scores(const std::vector<ProbVolume>& probs) {
    return per_volume(probs, [](const ProbVolume& p) { return -mean_top(p, false); });
}

ScoreVector mmar_scores(const std::vector<ProbVolume>& probs) {
    return per_volume(probs, [](const ProbVolume& p) { return -mean_top(p, true); });
}

ScoreVector coreset_scores(const std::vector<EmbeddingVec>& candidates, const std::vector<EmbeddingVec>& labeled) {
    require(!candidates.empty(), ErrorKind::Pairing, "coreset needs candidate embeddings");
    require(!labeled.empty(), ErrorKind::Pairing, "coreset needs at least one labeled embedding");
    const std::size_t n = candidates.size();
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < n; ++i)
        for (const auto& l : labeled) nearest[i] = std::min(nearest[i], cosine_distance(candidates[i], l));

    std::vector<bool> taken(n, false);
    std::vector<double> score(n, 0.0);
    for (std::size_t step = 0; step < n; ++step) {
        std::size_t best = n;
        for (std::size_t i = 0; i < n; ++i) {
            if (taken[i]) continue;
            if (best == n || nearest[i] > nearest[best] ||
                (nearest[i] == nearest[best] && candidates[i].sample_id() < candidates[best].sample_id()))
                best = i;
        }
        taken[best] = true;
        score[best] = nearest[best];
        for (std::size_t i = 0; i < n; ++i) {
            if (!taken[i]) nearest[i] = std::min(nearest[i], cosine_distance(candidates[i], candidates[best]));
        }
    }
    ScoreVector s;
    for (std::size_t i = 0; i < n; ++i) s.add(candidates[i].sample_id(), score[i]);
    return s;
}

ScoreVector rand_scores(const std::vector<std::string>& ids, std::uint64_t seed, int round) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(round)};
    std::mt19937_64 gen(seq);
    ScoreVector s;
    for (const auto& id : ids) s.add(id, static_cast<double>(gen() >> 11) * 0x1.0p-53);
    return s;
}

std::shared_ptr<const al::QueryStrategy> make_strategy(const std::string& name) {
    if (name == "dkd+asd" || name == "asfda") return std::make_shared<al::FusedQueryStrategy>();
    if (name == "rand" || name == "enpy" || name == "lcon" || name == "mmar" || name == "coreset")
        return std::make_shared<BaselineStrategy>(name);
    if (name == "dkd-high") return std::make_shared<AblationStrategy>(name, true, true, false);
    if (name == "dkd-low") return std::make_shared<AblationStrategy>(name, true, false, false);
    if (name == "asd-high") return std::make_shared<AblationStrategy>(name, false, true, false);
    if (name == "asd-low") return std::make_shared<AblationStrategy>(name, false, false, false);
    if (name == "asd-high-tau1") return std::make_shared<AblationStrategy>(name, false, true, true);
    fail(ErrorKind::Domain, "unknown strategy '" + name + "'");
}

std::vector<std::string> strategy_names() {
    return {"rand",     "enpy",    "lcon",     "mmar",    "coreset",      "dkd+asd",
            "asfda",    "dkd-high", "dkd-low", "asd-high", "asd-low", "asd-high-tau1"};
}

}  // namespace asfda::bench
