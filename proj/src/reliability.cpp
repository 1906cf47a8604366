#include "asfda/reliability.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "asfda/errors.hpp"
#include "asfda/kernels.hpp"

namespace asfda::reliability {

ConfidenceVariant parse_confidence_variant(const std::string& name) {
    if (name == "mean") return ConfidenceVariant::Mean;
    if (name == "sum") return ConfidenceVariant::Sum;
    fail(ErrorKind::Domain, "confidence variant must be 'mean' or 'sum', got '" + name + "'");
}

std::string to_string(ConfidenceVariant v) { return v == ConfidenceVariant::Mean ? "mean" : "sum"; }

BinaryMask predicted_foreground_mask(const ProbVolume& p) {
    require(p.classes() >= 2, ErrorKind::Domain, "predicted mask needs at least one foreground class");
    const std::size_t n = p.voxels();
    std::vector<unsigned char> m(n, 0);
    for (std::size_t v = 0; v < n; ++v) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < p.classes(); ++c) {
            if (p.at(c, v) > p.at(best, v)) best = c;
        }
        m[v] = best != 0 ? 1 : 0;
    }
    return BinaryMask(p.extent(), std::move(m));
}

double confidence(const ProbVolume& p, ConfidenceVariant variant) {
    const auto mask = predicted_foreground_mask(p);
    const std::size_t n = p.voxels();
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t v = 0; v < n; ++v) {
        if (!mask[v]) continue;
        double top1 = 0.0, top2 = 0.0;
        for (std::size_t c = 0; c < p.classes(); ++c) {
            const double x = p.at(c, v);
            if (x > top1) {
                top2 = top1;
                top1 = x;
            } else if (x > top2) {
                top2 = x;
            }
        }
        total += top1 - top2;
        ++count;
    }
    if (variant == ConfidenceVariant::Sum) return total;
    return count == 0 ? 0.0 : total / static_cast<double>(count);
}

double mean_confidence(const std::vector<double>& confidences) {
    require(!confidences.empty(), ErrorKind::EmptyInput, "mean confidence over no unlabeled samples");
    return std::accumulate(confidences.begin(), confidences.end(), 0.0) / static_cast<double>(confidences.size());
}

int candidate_count(const SelectionConfig& cfg, double c_bar, int n_unlabeled) {
    require(cfg.n_su >= 1, ErrorKind::Domain, "n_su must be >= 1");
    require(cfg.tau_c > 0.0, ErrorKind::Domain, "tau_c must be > 0");
    require(c_bar >= 0.0 && std::isfinite(c_bar), ErrorKind::Domain, "mean confidence must be finite and >= 0");
    require(cfg.n_su <= n_unlabeled, ErrorKind::Budget,
            "n_su = " + std::to_string(cfg.n_su) + " exceeds " + std::to_string(n_unlabeled) + " unlabeled samples");
    if (c_bar <= 0.0) return n_unlabeled;
    const double raw = static_cast<double>(cfg.n_su) * cfg.tau_c / c_bar;
    const double k = std::round(std::min(raw, static_cast<double>(n_unlabeled)));
    return std::clamp(static_cast<int>(k), cfg.n_su, n_unlabeled);
}

double semantic_distance(const EmbeddingVec& candidate, const std::vector<EmbeddingVec>& anchors) {
    require(!anchors.empty(), ErrorKind::Domain, "semantic distance needs at least one anchor");
    double best = cosine_distance(anchors.front(), candidate);
    for (std::size_t i = 1; i < anchors.size(); ++i) best = std::min(best, cosine_distance(anchors[i], candidate));
    return best;
}

ReliabilityResult select_reliable(const std::vector<UnlabeledSample>& unlabeled, const SelectionConfig& cfg,
                                  const std::vector<EmbeddingVec>& anchors, int round) {
    require(static_cast<int>(unlabeled.size()) >= cfg.n_su, ErrorKind::Budget,
            "fewer unlabeled samples than n_su = " + std::to_string(cfg.n_su));

    std::vector<double> conf;
    conf.reserve(unlabeled.size());
    for (const auto& u : unlabeled) {
        require(std::isfinite(u.confidence) && u.confidence >= 0.0, ErrorKind::Domain,
                "confidence of '" + u.sample_id + "' must be finite and >= 0");
        conf.push_back(u.confidence);
    }

    ReliabilityResult out;
    out.mean_confidence = mean_confidence(conf);
    out.candidate_count = candidate_count(cfg, out.mean_confidence, static_cast<int>(unlabeled.size()));

    std::vector<std::size_t> order(unlabeled.size());
    std::iota(order.begin(), order.end(), 0);
    auto by_confidence = [&](std::size_t a, std::size_t b) {
        if (unlabeled[a].confidence != unlabeled[b].confidence) return unlabeled[a].confidence > unlabeled[b].confidence;
        return unlabeled[a].sample_id < unlabeled[b].sample_id;
    };
    std::sort(order.begin(), order.end(), by_confidence);
    order.resize(static_cast<std::size_t>(out.candidate_count));

    std::vector<ReliabilityRow> rows(unlabeled.size());
    for (std::size_t i = 0; i < unlabeled.size(); ++i) {
        rows[i].sample_id = unlabeled[i].sample_id;
        rows[i].confidence = unlabeled[i].confidence;
        rows[i].round = round;
    }
    for (auto i : order) {
        const double d = semantic_distance(unlabeled[i].embedding, anchors);
        rows[i].candidate = true;
        rows[i].semantic_distance = d;
        rows[i].reliability = unlabeled[i].confidence * std::max(0.0, 1.0 - d);
    }

    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (*rows[a].reliability != *rows[b].reliability) return *rows[a].reliability > *rows[b].reliability;
        return rows[a].sample_id < rows[b].sample_id;
    });
    order.resize(static_cast<std::size_t>(cfg.n_su));
    for (auto i : order) {
        rows[i].selected = true;
        out.selected.push_back(rows[i].sample_id);
        out.exclusion_update.insert(rows[i].sample_id);
    }

    std::sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.sample_id < b.sample_id; });
    out.rows = std::move(rows);
    return out;
}

}  // namespace asfda::reliability
