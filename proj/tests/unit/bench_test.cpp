#include <doctest.h>

#include <random>

#include "asfda/bench/baselines.hpp"
#include "asfda/bench/experiment.hpp"
#include "asfda/bench/metrics.hpp"
#include "asfda/bench/synth.hpp"
#include "asfda/bench/toy_model.hpp"
#include "asfda/errors.hpp"
#include "asfda/io.hpp"
#include "asfda/kernels.hpp"
#include "asfda/query.hpp"
#include "asfda/tables.hpp"
#include "helpers.hpp"
#include "run_checks.hpp"

using namespace asfda;
using namespace asfda::bench;

TEST_CASE("default synthetic dataset") {
    const auto dir = th::scratch("synth_default");
    SynthConfig cfg;
    const auto m = generate_dataset(cfg, dir);
    int targets = 0;
    for (const auto& s : m.samples) {
        if (s.domain != "target") continue;
        ++targets;
        const auto img = read_tensor(s.image), lab = read_tensor(*s.label);
        CHECK(img.shape() == Shape{24, 24, 24});
        std::set<double> present(lab.data().begin(), lab.data().end());
        CHECK(present == std::set<double>{0, 1, 2, 3});
    }
    CHECK(targets == 40);
    CHECK(m.samples.size() == 80);

    const auto again = th::scratch("synth_default_again");
    generate_dataset(cfg, again);
    CHECK(checks::diff_trees(dir, again).empty());
}

TEST_CASE("null shift makes target volumes equal to source volumes") {
    SynthConfig cfg;
    cfg.extent = {10, 10, 10};
    cfg.intensity_offset = 0;
    cfg.noise_sigma = 0;
    cfg.size_scale = 1;
    cfg.size_jitter = 0;
    cfg.protocol_offsets = {0, 0, 0};
    cfg.protocol_contrasts = {1, 1, 1};
    REQUIRE(cfg.null_shift());
    for (int i = 0; i < 4; ++i) {
        const auto s = generate_volume(cfg, false, i), t = generate_volume(cfg, true, i);
        CHECK(s.image == t.image);
        CHECK(s.label == t.label);
    }
    CHECK_FALSE(SynthConfig{}.null_shift());
}

TEST_CASE("synthetic config parsing") {
    SynthConfig cfg;
    cfg.classes = 3;
    cfg.noise_sigma = 0.4;
    const auto back = parse_synth_config(render_synth_config(cfg));
    CHECK(render_synth_config(back) == render_synth_config(cfg));
    CHECK_THROWS_AS(parse_synth_config("{\"classes\": 1}"), Error);
    CHECK_THROWS_AS(parse_synth_config("[1,"), Error);
}

namespace {

std::vector<TrainingVolume> one_volume(int index, const SynthConfig& cfg = {}) {
    const auto v = generate_volume(cfg, false, index);
    return {training_volume(v.image, v.label, 4, 0)};
}

}  // namespace

TEST_CASE("toy model serialization") {
    auto m = toy_fit(one_volume(0), 4, 2, nullptr).model;
    const auto t = m.to_tensor();
    CHECK(ToyModel::from_tensor(t) == m);
    auto bad = t;
    bad[0] = 7;
    CHECK_THROWS_AS(ToyModel::from_tensor(bad), Error);
    CHECK_THROWS_AS(ToyModel::from_tensor(Tensor({3}, 1.0)), Error);
}

TEST_CASE("toy fit with zero epochs is the closed form fit") {
    const auto data = one_volume(1);
    const auto rep = toy_fit(data, 4, 0, nullptr);
    CHECK(rep.model == closed_form_fit(data, 4));
    const auto v = generate_volume(SynthConfig{}, false, 1);
    const auto p = rep.model.predict(v.image, "s001");
    CHECK(p.classes() == 4);
    CHECK(rep.model.embed(v.image).size() == 16);
}

TEST_CASE("toy fit is deterministic and never increases the loss") {
    const auto data = one_volume(2);
    const auto a = toy_fit(data, 4, 15, nullptr), b = toy_fit(data, 4, 15, nullptr);
    CHECK(a.model == b.model);
    CHECK(a.model.to_tensor() == b.model.to_tensor());
    for (std::size_t i = 1; i < a.loss_history.size(); ++i) CHECK(a.loss_history[i] <= a.loss_history[i - 1]);
    CHECK(a.loss_history.back() < a.loss_history.front());
}

TEST_CASE("toy loss gradient matches finite differences") {
    SynthConfig cfg;
    cfg.extent = {6, 6, 6};
    const auto data = one_volume(3, cfg);
    const auto m = toy_fit(data, 4, 3, nullptr).model;
    std::vector<double> grad;
    toy_loss(m, data, &grad);
    auto params = m.params();
    REQUIRE(grad.size() == params.size());
    for (std::size_t i = 0; i < params.size(); i += 5) {
        const double h = 1e-6;
        auto up = m, down = m;
        auto pu = params, pd = params;
        pu[i] += h;
        pd[i] -= h;
        up.set_params(pu);
        down.set_params(pd);
        const double fd = (toy_loss(up, data, nullptr) - toy_loss(down, data, nullptr)) / (2 * h);
        CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-4).scale(1e-6));
    }
}

TEST_CASE("fit on one volume segments it") {
    const SynthConfig cfg;
    const auto v = generate_volume(cfg, false, 0);
    const auto m = toy_fit({training_volume(v.image, v.label, 4, 0)}, 4, 30, nullptr).model;
    const double d = mean_dice(argmax_labels(m.predict(v.image)), v.label, 4);
    MESSAGE("self Dice " << d);
    CHECK(d >= 0.8);
}

TEST_CASE("dice examples and oracle") {
    const Tensor a({2, 2, 1}, {0, 1, 2, 1});
    CHECK(per_class_dice(a, a, 3) == std::vector<double>{1.0, 1.0});
    const Tensor x({4}, {1, 1, 0, 0}), y({4}, {0, 0, 1, 1});
    CHECK(dice(x, y, 1) == 0.0);
    std::mt19937_64 rng(9);
    for (int t = 0; t < 10; ++t) {
        std::vector<double> p(512), g(512);
        std::vector<int> pi(512), gi(512);
        for (int i = 0; i < 512; ++i) {
            p[i] = pi[i] = static_cast<int>(rng() % 4);
            g[i] = gi[i] = static_cast<int>(rng() % 4);
        }
        const Tensor pt({8, 8, 8}, p), gt({8, 8, 8}, g);
        for (int c = 1; c < 4; ++c) CHECK(std::abs(dice(pt, gt, c) - oracle::dice(pi, gi, c)) < 1e-12);
    }
}

TEST_CASE("mann whitney examples") {
    const auto r = mann_whitney_u({1, 2, 3}, {4, 5, 6});
    CHECK(r.u == 0.0);
    CHECK(r.exact);
    CHECK(r.p == doctest::Approx(0.1));
    CHECK(mann_whitney_u_exact({1, 2, 2, 5}, {1, 2, 2, 5}).p == doctest::Approx(1.0));
}

TEST_CASE("mann whitney matches exhaustive enumeration") {
    std::mt19937_64 rng(15);
    std::normal_distribution<double> n01(0, 1);
    // small groups, with ties, against the exact method
    for (int t = 0; t < 10; ++t) {
        std::vector<double> a(5), b(6);
        for (auto& x : a) x = std::round(n01(rng) * 2);
        for (auto& x : b) x = std::round(n01(rng) * 2 + 0.8);
        CHECK(std::abs(mann_whitney_u_exact(a, b).p - oracle::mwu_exact_p(a, b)) < 1e-9);
    }
    for (int t = 0; t < 3; ++t) {
        std::vector<double> a(12), b(12);
        for (auto& x : a) x = n01(rng);
        for (auto& x : b) x = n01(rng) + 0.6 * t;
        const double want = oracle::mwu_exact_p(a, b);
        CHECK(std::abs(mann_whitney_u(a, b).p - want) < 0.005);
        // the large-sample path is only approximately right at this size
        CHECK(std::abs(mann_whitney_u_normal(a, b).p - want) < 0.02);
    }
    std::vector<double> big_a(70), big_b(70);
    for (auto& x : big_a) x = n01(rng);
    for (auto& x : big_b) x = n01(rng);
    CHECK_FALSE(mann_whitney_u(big_a, big_b).exact);
}

TEST_CASE("mann whitney is invariant under monotone transforms") {
    std::mt19937_64 rng(16);
    std::vector<double> a = oracle::random_vec(rng, 15, 0, 1), b = oracle::random_vec(rng, 11, 0.2, 1.2);
    auto fa = a, fb = b;
    for (auto& x : fa) x = std::exp(4 * x);
    for (auto& x : fb) x = std::exp(4 * x);
    CHECK(mann_whitney_u(a, b).p == mann_whitney_u(fa, fb).p);
    CHECK(mann_whitney_u(a, b).u == mann_whitney_u(fa, fb).u);
}

TEST_CASE("baseline extremes") {
    const Extent e{2, 2, 2};
    std::vector<ProbVolume> probs;
    probs.push_back(th::volume(std::vector<double>(24, 1.0 / 3), 3, e, "uniform"));
    std::vector<double> onehot(24, 0.0);
    for (int v = 0; v < 8; ++v) onehot[8 + v] = 1.0;
    probs.push_back(th::volume(onehot, 3, e, "onehot"));
    std::mt19937_64 rng(4);
    probs.push_back(th::volume(oracle::random_probs(rng, 3, 8), 3, e, "random"));
    const auto enpy = enpy_scores(probs), lcon = lcon_scores(probs);
    CHECK(enpy.at("uniform") > enpy.at("random"));
    CHECK(enpy.at("uniform") > enpy.at("onehot"));
    CHECK(lcon.at("onehot") == -1.0);
    CHECK(lcon.at("onehot") < lcon.at("random"));
}

TEST_CASE("coreset picks the far endpoint first") {
    // three points on a quarter circle arc, the labeled one at one end
    const double s = std::sqrt(0.5);
    std::vector<EmbeddingVec> cand{th::emb({s, s}, "mid"), th::emb({0, 1}, "far")};
    std::vector<EmbeddingVec> lab{th::emb({1, 0}, "start")};
    const auto sc = coreset_scores(cand, lab);
    CHECK(query::select_top(sc, 1, {}).ids == std::vector<std::string>{"far"});

    // brute-force k-center order on random points
    std::mt19937_64 rng(22);
    std::vector<oracle::Vec> pts;
    std::vector<EmbeddingVec> cv;
    for (int i = 0; i < 15; ++i) {
        pts.push_back(oracle::random_vec(rng, 5));
        cv.push_back(th::emb(pts.back(), th::id(i)));
    }
    const auto anchor = oracle::random_vec(rng, 5);
    const auto got = coreset_scores(cv, {th::emb(anchor, "l")});
    std::vector<oracle::Vec> centers{anchor};
    std::set<int> taken;
    for (int step = 0; step < 15; ++step) {
        int best = -1;
        double best_d = -1;
        for (int i = 0; i < 15; ++i) {
            if (taken.count(i)) continue;
            double d = 1e300;
            for (const auto& c : centers) d = std::min(d, oracle::cos_dis(pts[i], c));
            if (d > best_d) best = i, best_d = d;
        }
        taken.insert(best);
        centers.push_back(pts[best]);
        CHECK(std::abs(got.at(th::id(best)) - best_d) < 1e-12);
    }
}

TEST_CASE("rand scores are reproducible per seed and round") {
    std::vector<std::string> ids{"a", "b", "c", "d"};
    CHECK(rand_scores(ids, 3, 1) == rand_scores(ids, 3, 1));
    CHECK_FALSE(rand_scores(ids, 3, 1) == rand_scores(ids, 3, 2));
    CHECK_FALSE(rand_scores(ids, 4, 1) == rand_scores(ids, 3, 1));
    for (double x : rand_scores(ids, 3, 1).scores()) {
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
    }
    CHECK_THROWS_AS(make_strategy("nope"), Error);
}

TEST_CASE("experiment protocol cardinality") {
    const auto dir = th::scratch("experiment_small");
    ExperimentConfig cfg;
    cfg.synth.extent = {8, 8, 8};
    cfg.synth.samples_per_domain = 20;
    cfg.strategies = {"rand", "dkd+asd", "asfda"};
    cfg.seeds = {0, 1};
    cfg.budgets = {0.1, 0.2};
    cfg.epochs_pretrain = 3;
    cfg.epochs_init = 2;
    cfg.epochs_round = 2;
    cfg.upper_bound = true;
    const auto res = run_experiment(cfg, dir);
    CHECK(res.rows.size() == (3 + 1) * 2 * 2);
    CHECK(res.selection_tests.size() == 2);
    const auto csv = parse_csv(read_file(dir / "results.csv"));
    CHECK(csv.header == std::vector<std::string>{"strategy", "seed", "budget", "mean_dice", "dice_class_1",
                                                 "dice_class_2", "dice_class_3"});
    CHECK(csv.rows.size() == res.rows.size());
    CHECK(render_results_csv(res.rows, 4) == render_csv(csv));

    cfg.strategies = {"dkd+asd"};
    cfg.budgets = {0.1};
    cfg.upper_bound = false;
    cfg.seeds = {0};
    CHECK(run_experiment(cfg, th::scratch("experiment_one")).rows.size() == 1);

    CHECK(parse_experiment_config(render_experiment_config(cfg)).strategies == cfg.strategies);
    CHECK_THROWS_AS(parse_experiment_config("{\"strategies\": [\"bogus\"]}"), Error);
}
