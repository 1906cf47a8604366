#include <doctest.h>

#include <cmath>
#include <random>

#include "asfda/errors.hpp"
#include "asfda/kernels.hpp"
#include "asfda/query.hpp"
#include "helpers.hpp"

using namespace asfda;

namespace {

struct Pool {
    std::vector<std::string> ids;
    std::vector<oracle::Vec> e0, cur;
    std::vector<EmbeddingVec> e0v, curv;
};

Pool random_pool(std::mt19937_64& rng, int n, std::size_t F) {
    Pool p;
    for (int i = 0; i < n; ++i) {
        p.ids.push_back(th::id(i));
        p.e0.push_back(oracle::random_vec(rng, F, 0, 1));
        auto c = p.e0.back();
        for (auto& x : c) x += std::normal_distribution<double>(0, 0.3)(rng);
        p.cur.push_back(c);
        p.e0v.push_back(th::emb(p.e0.back(), p.ids.back(), 0));
        p.curv.push_back(th::emb(c, p.ids.back(), 1));
    }
    return p;
}

}  // namespace

TEST_CASE("pakd examples") {
    CHECK(query::pakd(th::emb({1, 2}, "a", 0), th::emb({1, 2}, "a", 1)) == doctest::Approx(0.0));
    CHECK(query::pakd(th::emb({1, 0, 0}, "a", 0), th::emb({0, 1, 0}, "a", 1)) == doctest::Approx(1.0));
    CHECK_THROWS_AS(query::pakd(th::emb({1, 0}, "a", 0), th::emb({1, 0}, "b", 1)), Error);
    std::mt19937_64 rng(2);
    for (int t = 0; t < 16; ++t) {
        auto a = oracle::random_vec(rng, 32), b = oracle::random_vec(rng, 32);
        CHECK(std::abs(query::pakd(th::emb(a, "s", 0), th::emb(b, "s", 1)) -
                       cosine_distance(th::emb(a, "s"), th::emb(b, "s"))) < 1e-12);
    }
}

TEST_CASE("pd examples") {
    ScoreVector one;
    one.add("a", 0.3);
    CHECK(query::pd_scores({th::emb({1, 0}, "a")}, one).at("a") == 1.0);

    ScoreVector two;
    two.add("a", 0.9);
    two.add("b", 0.1);
    const auto pd = query::pd_scores({th::emb({1, 0}, "a"), th::emb({0, 1}, "b")}, two);
    CHECK(pd.at("a") == 1.0);
    CHECK(pd.at("b") == doctest::Approx(1.0));
    CHECK_THROWS_AS(query::pd_scores({th::emb({1, 0}, "a")}, two), Error);
}

TEST_CASE("pd and dkd match the pairwise oracle") {
    std::mt19937_64 rng(21);
    for (int n : {1, 2, 3, 10, 33, 64}) {
        auto p = random_pool(rng, n, 12);
        ScoreVector pakd;
        oracle::Vec pakd_raw;
        for (int i = 0; i < n; ++i) {
            // coarse values so ties in PAKD actually occur
            const double v = std::round(oracle::cos_dis(p.e0[i], p.cur[i]) * 20) / 20;
            pakd.add(p.ids[i], v);
            pakd_raw.push_back(v);
        }
        const auto pd = query::pd_scores(p.curv, pakd);
        const auto want = oracle::pd(p.ids, p.cur, pakd_raw);
        const auto d = query::dkd(pakd, pd);
        for (int i = 0; i < n; ++i) {
            CHECK(std::abs(pd.at(p.ids[i]) - want.at(p.ids[i])) < 1e-9);
            CHECK(std::abs(d.at(p.ids[i]) - pakd_raw[i] * want.at(p.ids[i])) < 1e-12);
        }
    }
}

TEST_CASE("dkd examples") {
    ScoreVector pakd, pd;
    pakd.add("a", 0.0);
    pakd.add("b", 0.4);
    pd.add("a", 0.7);
    pd.add("b", 1.0);
    const auto d = query::dkd(pakd, pd);
    CHECK(d.at("a") == 0.0);
    CHECK(d.at("b") == doctest::Approx(0.4));
    ScoreVector other;
    other.add("c", 1.0);
    other.add("a", 1.0);
    CHECK_THROWS_AS(query::dkd(pakd, other), Error);
}

TEST_CASE("embedding scale leaves DKD and the batch unchanged") {
    std::mt19937_64 rng(5);
    auto p = random_pool(rng, 30, 8);
    std::vector<ProbVolume> probs;
    const Extent e{2, 2, 2};
    for (const auto& id : p.ids) probs.push_back(th::volume(oracle::random_probs(rng, 3, e.voxels()), 3, e, id));
    const auto base = query::score_round(p.e0v, p.curv, probs, 2, 4);
    std::vector<EmbeddingVec> e0s, curs;
    for (std::size_t i = 0; i < p.ids.size(); ++i) {
        auto a = p.e0[i], b = p.cur[i];
        for (auto& x : a) x *= 17.5;
        for (auto& x : b) x *= 0.03;
        e0s.push_back(th::emb(a, p.ids[i], 0));
        curs.push_back(th::emb(b, p.ids[i], 1));
    }
    const auto scaled = query::score_round(e0s, curs, probs, 2, 4);
    REQUIRE(base.size() == scaled.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(std::abs(base[i].pakd - scaled[i].pakd) < 1e-9);
        CHECK(std::abs(base[i].pd - scaled[i].pd) < 1e-9);
        CHECK(std::abs(base[i].dkd - scaled[i].dkd) < 1e-9);
    }
    CHECK(query::select_batch(base, 5, {}).ids == query::select_batch(scaled, 5, {}).ids);
}

TEST_CASE("temperature schedule") {
    for (int R : {2, 3, 5, 6}) {
        CHECK(std::abs(query::temperature(1, R) - 3.0) < 1e-12);
        CHECK(std::abs(query::temperature(R, R) - 1.5) < 1e-12);
        for (int r = 1; r < R; ++r) CHECK(query::temperature(r + 1, R) < query::temperature(r, R));
    }
    CHECK(query::temperature(2, 4) == doctest::Approx(2.25).epsilon(1e-12));
    CHECK(query::temperature(1, 1) == 3.0);
    CHECK_THROWS_AS(query::temperature(0, 3), Error);
    CHECK_THROWS_AS(query::temperature(4, 3), Error);
}

TEST_CASE("foreground mask examples and oracle") {
    const Extent one{1, 1, 1};
    CHECK(query::foreground_mask(th::volume({0.6, 0.4}, 2, one), 3.0)[0]);
    CHECK_FALSE(query::foreground_mask(th::volume({0.9, 0.1}, 2, one), 1.5)[0]);
    CHECK_THROWS_AS(query::foreground_mask(th::volume({1.0}, 1, one), 2.0), Error);

    std::mt19937_64 rng(8);
    const Extent e{6, 6, 6};
    auto p = oracle::random_probs(rng, 4, e.voxels());
    const auto vol = th::volume(p, 4, e);
    for (double tau : {1.0, 1.5, 2.2, 3.0}) {
        const auto m = query::foreground_mask(vol, tau);
        for (std::size_t v = 0; v < e.voxels(); ++v) {
            const double pmax = std::max({p[1 * e.voxels() + v], p[2 * e.voxels() + v], p[3 * e.voxels() + v]});
            CHECK(m[v] == (p[v] / tau < pmax));
        }
    }
}

TEST_CASE("mask grows as the temperature relaxes") {
    std::mt19937_64 rng(9);
    const Extent e{5, 5, 5};
    const auto vol = th::volume(oracle::random_probs(rng, 3, e.voxels()), 3, e);
    for (double tau = 1.0; tau < 3.0; tau += 0.1) {
        const auto lo = query::foreground_mask(vol, tau), hi = query::foreground_mask(vol, tau + 0.1);
        for (std::size_t v = 0; v < e.voxels(); ++v) CHECK((!lo[v] || hi[v]));
    }
}

TEST_CASE("asd examples and oracle") {
    const Extent one{1, 1, 1};
    CHECK(query::asd(th::volume({1.0, 0.0, 0.0}, 3, one), 1, 3) == 0.0);
    const double want = -(0.2 * std::log(0.2) + 0.8 * std::log(0.4));
    CHECK(query::asd_with_temperature(th::volume({0.2, 0.4, 0.4}, 3, one), 3.0) == doctest::Approx(want));

    std::mt19937_64 rng(13);
    const Extent e{8, 8, 8};
    for (int r = 1; r <= 5; ++r) {
        auto p = oracle::random_probs(rng, 3, e.voxels());
        CHECK(std::abs(query::asd(th::volume(p, 3, e), r, 5) - oracle::asd(p, 3, e.voxels(), oracle::tau(r, 5))) < 1e-9);
    }
}

TEST_CASE("query criterion examples") {
    ScoreVector d, a;
    d.add("a", 0.3);
    a.add("a", 1.2);
    CHECK(query::query_criterion(d, a).front().q == 1.0);

    ScoreVector d2 = th::scores({0.1, 0.9, 0.5}), a2 = th::scores({3, 7, 1});
    const auto q = query::query_criterion(d2, a2);
    CHECK(q.front().sample_id == "x001");
    CHECK(q.front().q == 2.0);
}

TEST_CASE("query criterion recomposition and bounds") {
    std::mt19937_64 rng(17);
    for (int t = 0; t < 10; ++t) {
        auto d = oracle::random_vec(rng, 50, 0, 2), a = oracle::random_vec(rng, 50, 0, 30);
        const auto dq = quantile_transform(minmax_normalize(th::scores(d))), aq = quantile_transform(minmax_normalize(th::scores(a)));
        const auto rows = query::query_criterion(th::scores(d), th::scores(a));
        for (const auto& r : rows) {
            CHECK(std::abs(r.q - (dq.at(r.sample_id) + aq.at(r.sample_id))) < 1e-12);
            CHECK(r.q >= 0.0);
            CHECK(r.q <= 2.0);
        }
        for (std::size_t i = 1; i < rows.size(); ++i)
            CHECK((rows[i - 1].q > rows[i].q || (rows[i - 1].q == rows[i].q && rows[i - 1].sample_id < rows[i].sample_id)));
    }
}

TEST_CASE("monotone transforms of a column leave its normalized value and the batch unchanged") {
    std::mt19937_64 rng(19);
    auto d = oracle::random_vec(rng, 40, 0, 1), a = oracle::random_vec(rng, 40, 0, 5);
    auto d2 = d, a2 = a;
    for (auto& x : d2) x = std::exp(3 * x) + x * x * x;
    for (auto& x : a2) x = std::sqrt(x) - 4;
    const auto base = query::query_criterion(th::scores(d), th::scores(a));
    const auto moved = query::query_criterion(th::scores(d2), th::scores(a2));
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(base[i].sample_id == moved[i].sample_id);
        CHECK(base[i].dkd_qt == moved[i].dkd_qt);
        CHECK(base[i].asd_qt == moved[i].asd_qt);
    }
    CHECK(query::select_batch(base, 6, {}).ids == query::select_batch(moved, 6, {}).ids);
}

TEST_CASE("select batch examples") {
    ScoreVector q;
    q.add("a", 1.9);
    q.add("b", 1.2);
    q.add("c", 0.3);
    CHECK(query::select_top(q, 2, {}).ids == std::vector<std::string>{"a", "b"});
    CHECK(query::select_top(q, 2, {"a"}).ids == std::vector<std::string>{"b", "c"});
    const auto short_batch = query::select_top(q, 3, {"a"});
    CHECK(short_batch.shortfall);
    CHECK(short_batch.ids.size() == 2);
    CHECK_THROWS_AS(query::select_top(q, 1, {"a", "b", "c"}), Error);
    ScoreVector tie;
    tie.add("b", 1.0);
    tie.add("a", 1.0);
    CHECK(query::select_top(tie, 1, {}).ids == std::vector<std::string>{"a"});
}

TEST_CASE("select batch matches sort and slice") {
    std::mt19937_64 rng(23);
    for (int t = 0; t < 30; ++t) {
        const int n = 1 + static_cast<int>(rng() % 200);
        ScoreVector s;
        std::vector<std::pair<double, std::string>> all;
        std::set<std::string> excluded;
        for (int i = 0; i < n; ++i) {
            const double v = static_cast<double>(rng() % 17);
            s.add(th::id(i), v);
            if (rng() % 5 == 0) excluded.insert(th::id(i));
            else all.push_back({-v, th::id(i)});
        }
        if (all.empty()) continue;
        std::sort(all.begin(), all.end());
        const int n_b = 1 + static_cast<int>(rng() % 12);
        std::vector<std::string> want;
        for (int i = 0; i < n_b && i < static_cast<int>(all.size()); ++i) want.push_back(all[i].second);
        CHECK(query::select_top(s, n_b, excluded).ids == want);
    }
}
