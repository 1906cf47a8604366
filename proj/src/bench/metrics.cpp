#include "asfda/bench/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "asfda/errors.hpp"

namespace asfda::bench {

namespace {

struct Ranked {
    std::vector<double> ranks;  // midranks of the concatenation a ++ b
    double tie_term = 0.0;      // sum of t^3 - t over tie groups
};

Ranked midranks(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> all(a);
    all.insert(all.end(), b.begin(), b.end());
    const std::size_t n = all.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return all[i] < all[j]; });
    Ranked r;
    r.ranks.resize(n);
    for (std::size_t start = 0; start < n;) {
        std::size_t stop = start + 1;
        while (stop < n && all[order[stop]] == all[order[start]]) ++stop;
        const double t = static_cast<double>(stop - start);
        for (std::size_t k = start; k < stop; ++k) r.ranks[order[k]] = 0.5 * static_cast<double>(start + 1 + stop);
        r.tie_term += t * t * t - t;
        start = stop;
    }
    return r;
}

void check_groups(const std::vector<double>& a, const std::vector<double>& b) {
    require(!a.empty() && !b.empty(), ErrorKind::Domain, "Mann-Whitney U needs two nonempty groups");
    for (const auto* g : {&a, &b})
        for (double x : *g) require(std::isfinite(x), ErrorKind::Domain, "Mann-Whitney U input is not finite");
}

}  // namespace

double dice(const Tensor& pred, const Tensor& gt, int c) {
    require(pred.shape() == gt.shape(), ErrorKind::Dimension, "prediction and ground truth shapes differ");
    std::size_t inter = 0, na = 0, nb = 0;
    const double label = static_cast<double>(c);
    for (std::size_t v = 0; v < pred.size(); ++v) {
        const bool a = pred[v] == label, b = gt[v] == label;
        na += a;
        nb += b;
        inter += a && b;
    }
    if (na + nb == 0) return 1.0;
    return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

std::vector<double> per_class_dice(const Tensor& pred, const Tensor& gt, int classes) {
    require(classes >= 2, ErrorKind::Domain, "Dice needs at least one foreground class");
    std::vector<double> out;
    for (int c = 1; c < classes; ++c) out.push_back(dice(pred, gt, c));
    return out;
}

double mean_dice(const Tensor& pred, const Tensor& gt, int classes) {
    const auto d = per_class_dice(pred, gt, classes);
    return std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
}

RankSumResult mann_whitney_u_exact(const std::vector<double>& a, const std::vector<double>& b) {
    check_groups(a, b);
    const auto r = midranks(a, b);
    const std::size_t na = a.size(), n = r.ranks.size();
    // Doubled midranks are integers, so the rank-sum distribution is a DP over
    // (items chosen, doubled sum).
    std::vector<long> twice(n);
    for (std::size_t i = 0; i < n; ++i) twice[i] = std::lround(2.0 * r.ranks[i]);
    const long max_sum = std::accumulate(twice.begin(), twice.end(), 0L);
    std::vector<std::vector<double>> ways(na + 1, std::vector<double>(static_cast<std::size_t>(max_sum) + 1, 0.0));
    ways[0][0] = 1.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = std::min(i + 1, na); k >= 1; --k) {
            auto& dst = ways[k];
            const auto& src = ways[k - 1];
            for (long s = max_sum; s >= twice[i]; --s) dst[s] += src[s - twice[i]];
        }
    }
    long observed = 0;
    for (std::size_t i = 0; i < na; ++i) observed += twice[i];
    // E[2W] = na (N + 1)
    const long center2 = static_cast<long>(na) * static_cast<long>(n + 1);
    const long dev = std::labs(observed - center2);
    double total = 0.0, extreme = 0.0;
    for (long s = 0; s <= max_sum; ++s) {
        const double w = ways[na][s];
        if (w == 0.0) continue;
        total += w;
        if (std::labs(s - center2) >= dev) extreme += w;
    }
    RankSumResult res;
    res.u = 0.5 * static_cast<double>(observed) - static_cast<double>(na * (na + 1)) / 2.0;
    res.p = std::min(1.0, extreme / total);
    res.exact = true;
    return res;
}

RankSumResult mann_whitney_u_normal(const std::vector<double>& a, const std::vector<double>& b) {
    check_groups(a, b);
    const auto r = midranks(a, b);
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    const double n = na + nb;
    double ra = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) ra += r.ranks[i];
    RankSumResult res;
    res.u = ra - na * (na + 1.0) / 2.0;
    const double var = na * nb / 12.0 * ((n + 1.0) - r.tie_term / (n * (n - 1.0)));
    if (var <= 0.0) return res;
    const double z = std::max(0.0, std::abs(res.u - na * nb / 2.0) - 0.5) / std::sqrt(var);
    res.p = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
    return res;
}

// The exact DP costs about na * N^3 steps, cheap well past typical group sizes.
constexpr std::size_t kExactLimit = 120;

RankSumResult mann_whitney_u(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() + b.size() <= kExactLimit) return mann_whitney_u_exact(a, b);
    return mann_whitney_u_normal(a, b);
}

}  // namespace asfda::bench
