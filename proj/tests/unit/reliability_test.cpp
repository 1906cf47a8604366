#include <doctest.h>

#include <algorithm>
#include <random>

#include "asfda/errors.hpp"
#include "asfda/reliability.hpp"
#include "helpers.hpp"

using namespace asfda;
using namespace asfda::reliability;

namespace {

std::vector<UnlabeledSample> random_unlabeled(std::mt19937_64& rng, int n, std::size_t F) {
    std::vector<UnlabeledSample> out;
    for (int i = 0; i < n; ++i) {
        const double c = static_cast<double>(rng() % 50) / 50.0;  // coarse, so ties happen
        out.push_back({th::id(i), c, th::emb(oracle::random_vec(rng, F, -0.3, 1), th::id(i), 2)});
    }
    return out;
}

std::vector<EmbeddingVec> anchors_of(const std::vector<oracle::Vec>& v) {
    std::vector<EmbeddingVec> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(th::emb(v[i], "a" + std::to_string(i), 2));
    return out;
}

oracle::Vec raw(const EmbeddingVec& e) { return {e.values().begin(), e.values().end()}; }

}  // namespace

TEST_CASE("predicted foreground mask") {
    const Extent e{1, 1, 3};
    // voxels: (0.2,0.7,0.1) (0.7,0.2,0.1) (0.5,0.5,0)
    const auto p = th::volume({0.2, 0.7, 0.5, 0.7, 0.2, 0.5, 0.1, 0.1, 0.0}, 3, e);
    const auto m = predicted_foreground_mask(p);
    CHECK(m[0]);
    CHECK_FALSE(m[1]);
    CHECK_FALSE(m[2]);
    CHECK_THROWS_AS(predicted_foreground_mask(th::volume({1.0}, 1, {1, 1, 1})), Error);
}

TEST_CASE("confidence examples and oracle") {
    const Extent one{1, 1, 1};
    CHECK(confidence(th::volume({0.2, 0.7, 0.1}, 3, one)) == doctest::Approx(0.5));
    CHECK(confidence(th::volume({0.9, 0.05, 0.05}, 3, one)) == 0.0);
    // repeated top value counts as the runner-up
    CHECK(confidence(th::volume({0.1, 0.45, 0.45}, 3, one)) == 0.0);

    std::mt19937_64 rng(31);
    const Extent e{6, 6, 6};
    for (int t = 0; t < 10; ++t) {
        auto p = oracle::random_probs(rng, 4, e.voxels());
        const auto vol = th::volume(p, 4, e);
        const double c = confidence(vol);
        CHECK(std::abs(c - oracle::confidence(p, 4, e.voxels())) < 1e-9);
        CHECK(std::abs(confidence(vol, ConfidenceVariant::Sum) - oracle::confidence(p, 4, e.voxels(), true)) < 1e-9);
        CHECK(c >= 0.0);
        CHECK(c <= 1.0);
    }
}

TEST_CASE("mean confidence") {
    CHECK(mean_confidence({0.4, 0.6}) == doctest::Approx(0.5));
    CHECK(mean_confidence({0.37}) == 0.37);
    CHECK_THROWS_AS(mean_confidence({}), Error);
    std::mt19937_64 rng(3);
    auto v = oracle::random_vec(rng, 100, 0, 1);
    double s = 0;
    for (double x : v) s += x;
    CHECK(std::abs(mean_confidence(v) - s / 100) < 1e-12);
}

TEST_CASE("candidate count") {
    CHECK(candidate_count({5, 2.0}, 0.5, 100) == 20);
    CHECK(candidate_count({5, 0.5}, 0.9, 100) == 5);
    CHECK(candidate_count({5, 2.0}, 0.01, 30) == 30);
    CHECK(candidate_count({5, 2.0}, 0.0, 30) == 30);
    CHECK_THROWS_AS(candidate_count({5, 2.0}, 0.5, 4), Error);
    try {
        candidate_count({5, 2.0}, 0.5, 4);
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::Budget);
    }
}

TEST_CASE("semantic distance examples and oracle") {
    CHECK(semantic_distance(th::emb({1, 2}, "c"), anchors_of({{3, 1}, {1, 2}})) == doctest::Approx(0.0));
    const double h = 1 / std::sqrt(2.0);
    CHECK(semantic_distance(th::emb({h, h}, "c"), anchors_of({{1, 0}, {0, 1}})) == doctest::Approx(1 - h));
    CHECK_THROWS_AS(semantic_distance(th::emb({1, 0}, "c"), {}), Error);

    std::mt19937_64 rng(37);
    std::vector<oracle::Vec> anchors;
    for (int a = 0; a < 20; ++a) anchors.push_back(oracle::random_vec(rng, 16));
    const auto av = anchors_of(anchors);
    for (int k = 0; k < 50; ++k) {
        auto c = oracle::random_vec(rng, 16);
        CHECK(std::abs(semantic_distance(th::emb(c, "c"), av) - oracle::semantic_distance(c, anchors)) < 1e-9);
    }
}

TEST_CASE("select reliable examples") {
    // Confidences 0.8 and 0.9; anchors placed so that D is 0.25 and 0.9.
    const double c1 = 0.75, c2 = 0.1;
    std::vector<UnlabeledSample> u{{"a", 0.8, th::emb({c1, std::sqrt(1 - c1 * c1)}, "a")},
                                   {"b", 0.9, th::emb({c2, std::sqrt(1 - c2 * c2)}, "b")}};
    const auto r = select_reliable(u, {1, 2.0}, anchors_of({{1, 0}}));
    CHECK(r.selected == std::vector<std::string>{"a"});
    CHECK(*r.rows[0].reliability == doctest::Approx(0.6));
    CHECK(*r.rows[1].reliability == doctest::Approx(0.09));
    CHECK(r.exclusion_update == std::set<std::string>{"a"});

    std::vector<UnlabeledSample> far{{"z", 0.7, th::emb({-1, 0.1}, "z")}};
    CHECK(*select_reliable(far, {1, 2.0}, anchors_of({{1, 0}})).rows[0].reliability == 0.0);
    CHECK_THROWS_AS(select_reliable(far, {2, 2.0}, anchors_of({{1, 0}})), Error);
}

TEST_CASE("select reliable matches the straight-line oracle") {
    std::mt19937_64 rng(41);
    for (int t = 0; t < 25; ++t) {
        const int n = 5 + static_cast<int>(rng() % 36);
        const int n_su = 1 + static_cast<int>(rng() % 4);
        const double tau_c = 0.5 + static_cast<double>(rng() % 4);
        auto u = random_unlabeled(rng, n, 10);
        std::vector<oracle::Vec> anchors;
        for (int a = 0; a < 1 + static_cast<int>(rng() % 6); ++a) anchors.push_back(oracle::random_vec(rng, 10, -0.3, 1));
        const auto got = select_reliable(u, {n_su, tau_c}, anchors_of(anchors), 3);

        std::vector<std::string> ids;
        oracle::Vec conf;
        std::vector<oracle::Vec> emb;
        for (const auto& s : u) {
            ids.push_back(s.sample_id);
            conf.push_back(s.confidence);
            emb.push_back(raw(s.embedding));
        }
        const auto want = oracle::select_reliable(ids, conf, emb, anchors, n_su, tau_c);
        CHECK(got.selected == want.selected);
        CHECK(got.candidate_count == want.k);
        for (const auto& row : got.rows) {
            CHECK(row.candidate == (want.candidates.count(row.sample_id) == 1));
            if (row.candidate) {
                CHECK(*row.reliability == want.reliability.at(row.sample_id));
                CHECK(*row.reliability <= row.confidence);
                CHECK(*row.reliability >= 0.0);
            }
            if (row.selected) CHECK(row.candidate);
        }
        CHECK(static_cast<int>(got.selected.size()) == n_su);

        // input order never matters
        auto shuffled = u;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        CHECK(select_reliable(shuffled, {n_su, tau_c}, anchors_of(anchors), 3).selected == got.selected);
    }
}

TEST_CASE("raising a selected sample's distance never adds it back") {
    std::mt19937_64 rng(43);
    for (int t = 0; t < 20; ++t) {
        auto u = random_unlabeled(rng, 20, 6);
        std::vector<oracle::Vec> anchors{oracle::random_vec(rng, 6, 0, 1)};
        const auto base = select_reliable(u, {3, 2.0}, anchors_of(anchors));
        // move one unselected candidate further from the anchor by flipping it
        for (auto& s : u) {
            if (std::find(base.selected.begin(), base.selected.end(), s.sample_id) != base.selected.end()) continue;
            auto v = raw(s.embedding);
            for (std::size_t k = 0; k < v.size(); ++k) v[k] = -anchors[0][k] + 0.01 * v[k];
            s.embedding = th::emb(v, s.sample_id, 2);
        }
        const auto moved = select_reliable(u, {3, 2.0}, anchors_of(anchors));
        CHECK(moved.selected == base.selected);
    }
}
