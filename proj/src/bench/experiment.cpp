#include "asfda/bench/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "asfda/bench/baselines.hpp"
#include "asfda/bench/metrics.hpp"
#include "asfda/bench/toy_model.hpp"
#include "asfda/errors.hpp"
#include "asfda/kernels.hpp"
#include "asfda/tables.hpp"

namespace asfda::bench {

using nlohmann::json;

namespace {

std::string dir_name(const std::string& strategy) {
    std::string out;
    for (char ch : strategy) out += std::isalnum(static_cast<unsigned char>(ch)) || ch == '-' ? ch : '_';
    return out;
}

std::string budget_label(double b) { return format_real(b); }

// Rethrows with the (strategy, seed) pair in front of the message.
template <class F>
auto with_context(const std::string& strategy, std::uint64_t seed, F f) {
    try {
        return f();
    } catch (const Error& e) {
        throw Error(e.kind(), "strategy " + strategy + ", seed " + std::to_string(seed) + ": " + e.what());
    }
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("experiment config is not valid JSON: ") + e.what());
    }
    ExperimentConfig c;
    if (j.contains("synth")) c.synth = parse_synth_config(j["synth"].dump());
    try {
        c.strategies = j.value("strategies", c.strategies);
        c.seeds = j.value("seeds", c.seeds);
        c.budgets = j.value("budgets", c.budgets);
        c.epochs_pretrain = j.value("epochs_pretrain", c.epochs_pretrain);
        c.epochs_init = j.value("epochs_init", c.epochs_init);
        c.epochs_round = j.value("epochs_round", c.epochs_round);
        c.tau_c = j.value("tau_c", c.tau_c);
        c.confidence_variant =
            reliability::parse_confidence_variant(j.value("confidence_variant", std::string("mean")));
        c.upper_bound = j.value("upper_bound", c.upper_bound);
        c.no_semi = j.value("no_semi", c.no_semi);
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("experiment config: ") + e.what());
    }
    require(!c.strategies.empty() && !c.seeds.empty() && !c.budgets.empty(), ErrorKind::Domain,
            "experiment needs strategies, seeds and budgets");
    for (const auto& s : c.strategies) make_strategy(s);
    require(std::is_sorted(c.budgets.begin(), c.budgets.end()) && c.budgets.front() > 0.0, ErrorKind::Domain,
            "budgets must be positive and ascending");
    return c;
}

std::string render_experiment_config(const ExperimentConfig& c) {
    json j{{"synth", json::parse(render_synth_config(c.synth))},
           {"strategies", c.strategies},
           {"seeds", c.seeds},
           {"budgets", c.budgets},
           {"epochs_pretrain", c.epochs_pretrain},
           {"epochs_init", c.epochs_init},
           {"epochs_round", c.epochs_round},
           {"tau_c", c.tau_c},
           {"confidence_variant", reliability::to_string(c.confidence_variant)},
           {"upper_bound", c.upper_bound},
           {"no_semi", c.no_semi}};
    return j.dump(2) + "\n";
}

ResultRow evaluate_model(const fs::path& model_path, const al::DatasetManifest& dataset, int classes) {
    const auto model = load_toy_model(model_path);
    ResultRow row;
    row.per_class.assign(static_cast<std::size_t>(classes - 1), 0.0);
    int n = 0;
    for (const auto& s : dataset.samples) {
        if (s.split != "heldout" || !s.label) continue;
        const auto pred = argmax_labels(model.predict(read_tensor(s.image), s.id));
        const auto d = per_class_dice(pred, read_tensor(*s.label), classes);
        for (std::size_t c = 0; c < d.size(); ++c) row.per_class[c] += d[c];
        ++n;
    }
    require(n > 0, ErrorKind::EmptyInput, "dataset has no held-out target samples");
    for (auto& x : row.per_class) x /= n;
    row.mean_dice = std::accumulate(row.per_class.begin(), row.per_class.end(), 0.0) / (classes - 1);
    return row;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir) {
    const int classes = cfg.synth.classes;
    const int n_b = static_cast<int>(std::lround(cfg.budgets.front() * cfg.synth.samples_per_domain));
    const int rounds = static_cast<int>(cfg.budgets.size());
    require(n_b >= 1, ErrorKind::Budget, "first budget rounds to an empty batch");
    for (const auto& s : cfg.strategies) make_strategy(s);
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    require(!ec, ErrorKind::Io, "cannot create '" + out_dir.string() + "'");
    write_file_atomic(out_dir / "experiment.json", render_experiment_config(cfg));

    ExperimentResult result;
    ToyTrainer trainer(static_cast<std::size_t>(classes));
    for (const auto seed : cfg.seeds) {
        auto synth = cfg.synth;
        synth.seed = seed;
        const auto data_dir = out_dir / "data" / ("seed_" + std::to_string(seed));
        auto dataset = generate_dataset(synth, data_dir);
        const auto pretrained = data_dir / "pretrained.asft";
        save_toy_model(pretrain_source(dataset, static_cast<std::size_t>(classes), cfg.epochs_pretrain), pretrained);

        al::RunConfig rc;
        rc.n_b = n_b;
        rc.r_max = rounds;
        rc.tau_c = cfg.tau_c;
        rc.seed = seed;
        rc.confidence_variant = cfg.confidence_variant;
        rc.epochs_init = cfg.epochs_init;
        rc.epochs_round = cfg.epochs_round;
        rc.pretrained_model = pretrained;
        dataset.config = rc;
        const auto manifest = data_dir / "dataset.json";
        al::save_dataset_manifest(dataset, manifest);
        al::FileOracle oracle(dataset);

        for (const auto& name : cfg.strategies) {
            with_context(name, seed, [&] {
                auto run_cfg = rc;
                run_cfg.strategy = name;
                run_cfg.semi_supervised = name == "asfda" && !cfg.no_semi;
                const auto work = out_dir / "runs" / dir_name(name) / ("seed_" + std::to_string(seed));
                fs::remove_all(work);
                al::Orchestrator orch(work, trainer, oracle, make_strategy(name));
                auto state = orch.initialize(manifest, run_cfg);
                while (state.round < state.max_round && !state.unlabeled.empty()) {
                    state = orch.run_round(state);
                    auto row = evaluate_model(orch.resolve(state.model_ref), dataset, classes);
                    row.strategy = name;
                    row.seed = seed;
                    row.budget = cfg.budgets[static_cast<std::size_t>(state.round - 1)];
                    result.rows.push_back(std::move(row));
                }
                if (!state.reliability_table_path) return 0;

                // Dice of reliability-selected vs the other unlabeled samples,
                // both under the stage-1 model that produced the pseudo labels.
                SelectionTestRow t;
                t.strategy = name;
                t.seed = seed;
                t.round = state.round;
                const al::ModelHandle stage1{orch.resolve(state.stage1_model_ref)};
                for (const auto& r : read_reliability_table(orch.resolve(*state.reliability_table_path))) {
                    const auto& rec = orch.sample(r.sample_id);
                    const auto pred = argmax_labels(trainer.predict(stage1, r.sample_id, rec.image));
                    const double d = mean_dice(pred, read_tensor(*rec.label), classes);
                    (r.selected ? t.dice_selected : t.dice_unselected).push_back(d);
                }
                if (!t.dice_selected.empty() && !t.dice_unselected.empty()) {
                    const auto mw = mann_whitney_u(t.dice_selected, t.dice_unselected);
                    t.u = mw.u;
                    t.p = mw.p;
                }
                result.selection_tests.push_back(std::move(t));
                return 0;
            });
        }

        if (cfg.upper_bound) {
            with_context("upper", seed, [&] {
                al::FitJob job;
                for (const auto& s : dataset.samples) {
                    if (s.domain == "target" && s.split != "heldout" && s.label)
                        job.labeled.push_back({s.id, s.image, *s.label});
                }
                job.epochs = cfg.epochs_init + rounds * cfg.epochs_round;
                job.seed = seed;
                job.warm_start = pretrained;
                job.output = out_dir / "runs" / "upper" / ("seed_" + std::to_string(seed)) / "model.asft";
                trainer.fit(job);
                const auto base = evaluate_model(job.output, dataset, classes);
                for (double b : cfg.budgets) {
                    auto row = base;
                    row.strategy = "upper";
                    row.seed = seed;
                    row.budget = b;
                    result.rows.push_back(std::move(row));
                }
                return 0;
            });
        }
    }

    write_file_atomic(out_dir / "results.csv", render_results_csv(result.rows, classes));
    write_file_atomic(out_dir / "summary.csv", render_summary_csv(result.rows));
    write_file_atomic(out_dir / "selection_tests.csv", render_selection_csv(result.selection_tests));
    return result;
}

std::string render_results_csv(const std::vector<ResultRow>& rows, int classes) {
    CsvTable t;
    t.header = {"strategy", "seed", "budget", "mean_dice"};
    for (int c = 1; c < classes; ++c) t.header.push_back("dice_class_" + std::to_string(c));
    for (const auto& r : rows) {
        std::vector<std::string> line{r.strategy, std::to_string(r.seed), budget_label(r.budget), format_real(r.mean_dice)};
        for (double d : r.per_class) line.push_back(format_real(d));
        t.rows.push_back(std::move(line));
    }
    return render_csv(t);
}

std::string render_summary_csv(const std::vector<ResultRow>& rows) {
    // keyed by first appearance so the table keeps the run order
    std::vector<std::pair<std::string, double>> keys;
    std::map<std::pair<std::string, double>, std::vector<double>> groups;
    for (const auto& r : rows) {
        auto key = std::make_pair(r.strategy, r.budget);
        if (!groups.count(key)) keys.push_back(key);
        groups[key].push_back(r.mean_dice);
    }
    CsvTable t{{"strategy", "budget", "n", "mean_dice", "sd_dice"}, {}};
    for (const auto& key : keys) {
        const auto& v = groups[key];
        const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        double sq = 0.0;
        for (double x : v) sq += (x - mean) * (x - mean);
        const double sd = v.size() > 1 ? std::sqrt(sq / static_cast<double>(v.size() - 1)) : 0.0;
        t.rows.push_back({key.first, budget_label(key.second), std::to_string(v.size()), format_real(mean), format_real(sd)});
    }
    return render_csv(t);
}

std::string render_selection_csv(const std::vector<SelectionTestRow>& rows) {
    CsvTable t{{"strategy", "seed", "round", "n_selected", "n_unselected", "mean_dice_selected", "mean_dice_unselected",
                "u", "p"},
               {}};
    auto mean = [](const std::vector<double>& v) {
        return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    };
    for (const auto& r : rows) {
        t.rows.push_back({r.strategy, std::to_string(r.seed), std::to_string(r.round), std::to_string(r.dice_selected.size()),
                          std::to_string(r.dice_unselected.size()), format_real(mean(r.dice_selected)),
                          format_real(mean(r.dice_unselected)), format_real(r.u), format_real(r.p)});
    }
    return render_csv(t);
}

}  // namespace asfda::bench
