#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "asfda/bench/synth.hpp"
#include "asfda/io.hpp"
#include "asfda/reliability.hpp"

namespace asfda::bench {

struct ExperimentConfig {
    SynthConfig synth;
    std::vector<std::string> strategies{"rand", "dkd+asd", "asfda"};
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    /// Fractions of the target domain. Round r reaches budgets[r-1]; the per-round
    /// batch is round(budgets[0] * samples_per_domain).
    std::vector<double> budgets{0.05, 0.10, 0.15};
    int epochs_pretrain = 60;
    int epochs_init = 30;
    int epochs_round = 30;
    double tau_c = 2.0;
    reliability::ConfidenceVariant confidence_variant = reliability::ConfidenceVariant::Mean;
    /// Adds an "upper" row per seed: fit on every pool label.
    bool upper_bound = false;
    /// Strategies that run the semi-supervised stages; everything else runs
    /// query-only. "asfda" always does unless `no_semi` is set.
    bool no_semi = false;
};

ExperimentConfig parse_experiment_config(const std::string& json_text);
std::string render_experiment_config(const ExperimentConfig& c);

struct ResultRow {
    std::string strategy;
    std::uint64_t seed = 0;
    double budget = 0.0;
    double mean_dice = 0.0;
    std::vector<double> per_class;
};

struct SelectionTestRow {
    std::string strategy;
    std::uint64_t seed = 0;
    int round = 0;
    std::vector<double> dice_selected;
    std::vector<double> dice_unselected;
    double u = 0.0;
    double p = 1.0;
};

struct ExperimentResult {
    std::vector<ResultRow> rows;
    std::vector<SelectionTestRow> selection_tests;
};

/// Runs every (strategy, seed) pair under `out_dir`/runs, with one synthetic
/// dataset and pretrained source model per seed under `out_dir`/data. Writes
/// results.csv, summary.csv and selection_tests.csv into `out_dir`.
ExperimentResult run_experiment(const ExperimentConfig& cfg, const fs::path& out_dir);

std::string render_results_csv(const std::vector<ResultRow>& rows, int classes);
std::string render_summary_csv(const std::vector<ResultRow>& rows);
std::string render_selection_csv(const std::vector<SelectionTestRow>& rows);

/// Mean held-out Dice of a model file over the dataset's held-out target split.
ResultRow evaluate_model(const fs::path& model, const al::DatasetManifest& dataset, int classes);

}  // namespace asfda::bench
