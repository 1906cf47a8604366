#include "asfda/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "asfda/errors.hpp"

namespace asfda {

namespace {

double xlogx(double p) { return p > 0.0 ? p * std::log(p) : 0.0; }

}  // namespace

double cosine_distance(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), ErrorKind::Dimension,
            "cosine distance between vectors of length " + std::to_string(a.size()) + " and " +
                std::to_string(b.size()));
    require(!a.empty(), ErrorKind::Dimension, "cosine distance of empty vectors");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    require(na > 0.0 && nb > 0.0, ErrorKind::Domain, "cosine distance with a zero-norm vector");
    double cos = dot / (std::sqrt(na) * std::sqrt(nb));
    return 1.0 - std::clamp(cos, -1.0, 1.0);
}

double cosine_distance(const EmbeddingVec& a, const EmbeddingVec& b) {
    return cosine_distance(a.values(), b.values());
}

ScoreVector minmax_normalize(const ScoreVector& s) {
    require(!s.empty(), ErrorKind::EmptyInput, "min-max normalization of an empty column");
    auto values = s.scores();
    auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    const double min = *lo, max = *hi;
    std::vector<double> out(values.size(), 0.5);
    if (max > min) {
        for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - min) / (max - min);
    }
    return s.with_scores(out);
}

ScoreVector quantile_transform(const ScoreVector& s) {
    require(!s.empty(), ErrorKind::EmptyInput, "quantile transform of an empty column");
    const auto values = s.scores();
    const std::size_t n = values.size();
    if (n == 1) return s.with_scores(std::vector<double>{0.5});

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return values[i] < values[j]; });

    std::vector<double> out(n);
    for (std::size_t start = 0; start < n;) {
        std::size_t stop = start + 1;
        while (stop < n && values[order[stop]] == values[order[start]]) ++stop;
        // 1-based ranks start+1 .. stop share their average.
        const double avg_rank = 0.5 * static_cast<double>(start + 1 + stop);
        const double q = (avg_rank - 1.0) / static_cast<double>(n - 1);
        for (std::size_t k = start; k < stop; ++k) out[order[k]] = q;
        start = stop;
    }
    return s.with_scores(out);
}

double masked_entropy(const ProbVolume& p, const BinaryMask& m) {
    require(p.extent() == m.extent(), ErrorKind::Dimension, "mask shape differs from probability volume");
    double h = 0.0;
    const std::size_t n = p.voxels();
    for (std::size_t c = 0; c < p.classes(); ++c) {
        auto ch = p.channel(c);
        for (std::size_t v = 0; v < n; ++v) {
            if (m[v]) h -= xlogx(ch[v]);
        }
    }
    return h;
}

double volume_entropy(const ProbVolume& p) {
    double h = 0.0;
    for (double x : p.data()) h -= xlogx(x);
    return h;
}

Tensor argmax_labels(const ProbVolume& p) {
    const auto& e = p.extent();
    std::vector<double> labels(p.voxels());
    for (std::size_t v = 0; v < p.voxels(); ++v) {
        std::size_t best = 0;
        for (std::size_t c = 1; c < p.classes(); ++c) {
            if (p.at(c, v) > p.at(best, v)) best = c;
        }
        labels[v] = static_cast<double>(best);
    }
    return Tensor({e.h, e.w, e.d}, std::move(labels));
}

}  // namespace asfda
