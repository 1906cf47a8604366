#include "asfda/query.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

#include "asfda/errors.hpp"
#include "asfda/kernels.hpp"

namespace asfda::query {

double pakd(const EmbeddingVec& e0, const EmbeddingVec& ei) {
    require(e0.sample_id() == ei.sample_id(), ErrorKind::Pairing,
            "PAKD pairs '" + e0.sample_id() + "' with '" + ei.sample_id() + "'");
    require(e0.encoder_round() == 0, ErrorKind::Domain, "PAKD reference embedding must come from encoder round 0");
    return cosine_distance(e0, ei);
}

ScoreVector pd_scores(const std::vector<EmbeddingVec>& embeddings_current, const ScoreVector& pakd) {
    std::unordered_map<std::string, const EmbeddingVec*> by_id;
    for (const auto& e : embeddings_current) by_id[e.sample_id()] = &e;

    std::vector<const ScoreEntry*> ranked;
    ranked.reserve(pakd.size());
    for (const auto& entry : pakd) {
        require(by_id.count(entry.sample_id) != 0, ErrorKind::Pairing,
                "no current embedding for '" + entry.sample_id + "'");
        ranked.push_back(&entry);
    }
    std::sort(ranked.begin(), ranked.end(), [](const ScoreEntry* a, const ScoreEntry* b) {
        if (a->score != b->score) return a->score > b->score;
        return a->sample_id < b->sample_id;
    });

    std::vector<const EmbeddingVec*> emb(ranked.size());
    for (std::size_t i = 0; i < ranked.size(); ++i) emb[i] = by_id.at(ranked[i]->sample_id);

    std::unordered_map<std::string, double> pd;
    for (std::size_t c = 0; c < ranked.size(); ++c) {
        if (c == 0) {
            pd[ranked[c]->sample_id] = 1.0;
            continue;
        }
        double weighted = 0.0;
        for (std::size_t k = 1; k <= c; ++k) {
            weighted += static_cast<double>(k) * cosine_distance(*emb[c], *emb[c - k]);
        }
        const double weight_sum = 0.5 * static_cast<double>(c) * static_cast<double>(c + 1);
        pd[ranked[c]->sample_id] = weighted / weight_sum;
    }

    ScoreVector out;
    for (const auto& entry : pakd) out.add(entry.sample_id, pd.at(entry.sample_id));
    return out;
}

ScoreVector dkd(const ScoreVector& pakd, const ScoreVector& pd) {
    pakd.require_same_ids(pd);
    ScoreVector out;
    for (const auto& e : pakd) out.add(e.sample_id, e.score * pd.at(e.sample_id));
    return out;
}

double temperature(int r, int max_round) {
    require(max_round >= 1, ErrorKind::Domain, "maximum round must be >= 1");
    require(r >= 1 && r <= max_round, ErrorKind::Domain,
            "round " + std::to_string(r) + " outside [1, " + std::to_string(max_round) + "]");
    if (max_round == 1) return 3.0;
    return -1.5 * (std::log(static_cast<double>(r)) / std::log(static_cast<double>(max_round))) + 3.0;
}

BinaryMask foreground_mask(const ProbVolume& p, double tau) {
    require(p.classes() >= 2, ErrorKind::Domain, "foreground mask needs at least one foreground class");
    require(tau >= 1.0, ErrorKind::Domain, "mask temperature must be >= 1");
    const std::size_t n = p.voxels();
    std::vector<unsigned char> m(n, 0);
    auto bg = p.channel(0);
    for (std::size_t v = 0; v < n; ++v) {
        double fg_max = 0.0;
        for (std::size_t c = 1; c < p.classes(); ++c) fg_max = std::max(fg_max, p.at(c, v));
        m[v] = (bg[v] / tau < fg_max) ? 1 : 0;
    }
    return BinaryMask(p.extent(), std::move(m));
}

double asd_with_temperature(const ProbVolume& p, double tau) { return masked_entropy(p, foreground_mask(p, tau)); }

double asd(const ProbVolume& p, int r, int max_round) { return asd_with_temperature(p, temperature(r, max_round)); }

namespace {

void sort_rows(QueryScores& rows) {
    std::sort(rows.begin(), rows.end(), [](const QueryRow& a, const QueryRow& b) {
        if (a.q != b.q) return a.q > b.q;
        return a.sample_id < b.sample_id;
    });
}

}  // namespace

QueryScores query_criterion(const ScoreVector& dkd, const ScoreVector& asd, int round) {
    require(!dkd.empty(), ErrorKind::EmptyInput, "query criterion over no samples");
    dkd.require_same_ids(asd);
    const auto dkd_qt = quantile_transform(minmax_normalize(dkd));
    const auto asd_qt = quantile_transform(minmax_normalize(asd));

    QueryScores rows;
    rows.reserve(dkd.size());
    for (const auto& e : dkd) {
        QueryRow row;
        row.sample_id = e.sample_id;
        row.dkd = e.score;
        row.asd = asd.at(e.sample_id);
        row.dkd_qt = dkd_qt.at(e.sample_id);
        row.asd_qt = asd_qt.at(e.sample_id);
        row.q = row.dkd_qt + row.asd_qt;
        row.round = round;
        rows.push_back(std::move(row));
    }
    sort_rows(rows);
    return rows;
}

QueryScores score_round(const std::vector<EmbeddingVec>& e0, const std::vector<EmbeddingVec>& current,
                        const std::vector<ProbVolume>& probs, int r, int max_round) {
    std::unordered_map<std::string, const EmbeddingVec*> e0_by_id, cur_by_id;
    for (const auto& e : e0) e0_by_id[e.sample_id()] = &e;
    for (const auto& e : current) cur_by_id[e.sample_id()] = &e;

    const double tau = temperature(r, max_round);
    ScoreVector pakd_col, asd_col;
    for (const auto& p : probs) {
        const auto& id = p.sample_id();
        require(e0_by_id.count(id) && cur_by_id.count(id), ErrorKind::Pairing, "missing embedding for '" + id + "'");
        pakd_col.add(id, pakd(*e0_by_id.at(id), *cur_by_id.at(id)));
        asd_col.add(id, asd_with_temperature(p, tau));
    }
    const auto pd_col = pd_scores(current, pakd_col);
    const auto dkd_col = dkd(pakd_col, pd_col);

    auto rows = query_criterion(dkd_col, asd_col, r);
    for (auto& row : rows) {
        row.pakd = pakd_col.at(row.sample_id);
        row.pd = pd_col.at(row.sample_id);
    }
    return rows;
}

BatchSelection select_top(const ScoreVector& scores, int n_b, const std::set<std::string>& excluded) {
    require(n_b >= 1, ErrorKind::Domain, "batch size must be >= 1");
    std::vector<const ScoreEntry*> eligible;
    for (const auto& e : scores) {
        if (!excluded.count(e.sample_id)) eligible.push_back(&e);
    }
    require(!eligible.empty(), ErrorKind::Exhaustion, "no eligible samples left to query");
    std::sort(eligible.begin(), eligible.end(), [](const ScoreEntry* a, const ScoreEntry* b) {
        if (a->score != b->score) return a->score > b->score;
        return a->sample_id < b->sample_id;
    });
    BatchSelection out;
    const auto take = std::min<std::size_t>(static_cast<std::size_t>(n_b), eligible.size());
    out.shortfall = take < static_cast<std::size_t>(n_b);
    for (std::size_t i = 0; i < take; ++i) out.ids.push_back(eligible[i]->sample_id);
    return out;
}

BatchSelection select_batch(const QueryScores& scores, int n_b, const std::set<std::string>& excluded) {
    return select_top(q_column(scores), n_b, excluded);
}

ScoreVector q_column(const QueryScores& scores) {
    ScoreVector out;
    for (const auto& row : scores) out.add(row.sample_id, row.q);
    return out;
}

}  // namespace asfda::query
