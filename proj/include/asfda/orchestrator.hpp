#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "asfda/io.hpp"
#include "asfda/query.hpp"
#include "asfda/reliability.hpp"
#include "asfda/tensor.hpp"

namespace asfda::al {

enum class SampleStatus { Unlabeled, Queried, PseudoLabeled, ExcludedFromQuery };

std::string to_string(SampleStatus s);

struct SampleRecord {
    std::string id;
    std::string domain;
    fs::path image;
    std::optional<fs::path> label;
    std::string split;  ///< empty for pool samples, "heldout" for evaluation-only samples
};

struct RunConfig {
    int n_b = 1;
    int r_max = 1;
    double tau_c = 2.0;
    std::uint64_t seed = 0;
    bool semi_supervised = true;
    reliability::ConfidenceVariant confidence_variant = reliability::ConfidenceVariant::Mean;
    std::string strategy = "dkd+asd";
    std::optional<std::string> first_sample;
    std::optional<double> fixed_temperature;  ///< overrides the mask schedule (ablations)
    int epochs_init = 30;
    int epochs_round = 30;
    std::optional<fs::path> pretrained_model;
};

/// `{samples: [{id, domain, image, label?}], config: {...}}`; relative paths
/// resolve against the manifest's directory.
struct DatasetManifest {
    std::vector<SampleRecord> samples;
    RunConfig config;
};

DatasetManifest load_dataset_manifest(const fs::path& path);
std::string render_dataset_manifest(const DatasetManifest& m, const fs::path& relative_to);
void save_dataset_manifest(const DatasetManifest& m, const fs::path& path);

std::string render_config(const RunConfig& c, const fs::path& relative_to);
RunConfig parse_config(const std::string& json_text, const fs::path& base_dir);

struct RoundState {
    int round = 0;
    int max_round = 1;
    int n_b = 1;
    std::vector<std::string> labeled;    ///< in labeling order, x1 first
    std::vector<std::string> unlabeled;  ///< sorted
    std::vector<std::string> pseudo;     ///< this round's reliability-selected ids
    std::set<std::string> excluded;
    std::uint64_t rng_seed = 0;
    std::vector<std::string> query_batch;
    std::string model_ref;
    std::string stage1_model_ref;
    std::optional<std::string> score_table_path;
    std::optional<std::string> reliability_table_path;
    int n_su_used = 0;
    bool semi_supervised = true;
    std::map<std::string, std::string> checksums;

    int n_al() const { return n_b * max_round; }
    int n_su() const { return n_b * round; }
    SampleStatus status_of(const std::string& id) const;

    bool operator==(const RoundState&) const = default;
};

std::string render_round_manifest(const RoundState& s);
RoundState parse_round_manifest(const std::string& json_text);

struct ModelHandle {
    fs::path path;
};

struct TrainingPair {
    std::string id;
    fs::path image;
    fs::path label;
};

struct FitJob {
    std::vector<TrainingPair> labeled;
    std::vector<TrainingPair> pseudo;
    int epochs = 0;
    std::uint64_t seed = 0;
    std::optional<fs::path> warm_start;
    fs::path output;
};

/// Learner contract. Implementations must be deterministic given their
/// inputs and seed; embeddings are pooled vectors of fixed length.
class TrainerAdapter {
public:
    virtual ~TrainerAdapter() = default;
    virtual ModelHandle fit(const FitJob& job) = 0;
    virtual EmbeddingVec embed(const ModelHandle& model, const std::string& sample_id, const fs::path& image,
                               int encoder_round) = 0;
    virtual ProbVolume predict(const ModelHandle& model, const std::string& sample_id, const fs::path& image) = 0;
};

class OracleAdapter {
public:
    virtual ~OracleAdapter() = default;
    /// Label tensor paths, one per id, in order.
    virtual std::vector<fs::path> annotate(const std::vector<std::string>& sample_ids) = 0;
};

/// Reads ground-truth label files referenced by the dataset manifest.
class FileOracle final : public OracleAdapter {
public:
    explicit FileOracle(const DatasetManifest& dataset);
    std::vector<fs::path> annotate(const std::vector<std::string>& sample_ids) override;

private:
    std::map<std::string, fs::path> labels_;
};

/// Everything a query strategy may look at in one round. Embeddings and
/// probabilities cover exactly `unlabeled`.
struct QueryContext {
    int round = 1;
    int max_round = 1;
    std::uint64_t seed = 0;
    const std::vector<std::string>* unlabeled = nullptr;
    const std::vector<EmbeddingVec>* e0 = nullptr;
    const std::vector<EmbeddingVec>* current = nullptr;
    const std::vector<ProbVolume>* probs = nullptr;
    const std::vector<EmbeddingVec>* labeled_embeddings = nullptr;
    std::optional<double> fixed_temperature;
};

struct StrategyScores {
    ScoreVector scores;  ///< higher is queried first
    std::optional<query::QueryScores> table;
};

class QueryStrategy {
public:
    virtual ~QueryStrategy() = default;
    virtual std::string name() const = 0;
    virtual StrategyScores score(const QueryContext& ctx) const = 0;
};

/// The DKD + ASD fused criterion.
class FusedQueryStrategy final : public QueryStrategy {
public:
    std::string name() const override { return "dkd+asd"; }
    StrategyScores score(const QueryContext& ctx) const override;
};

enum class Stage {
    Embed = 1,
    Score,
    Select,
    Annotate,
    MoveLabeled,
    FitSupervised,
    SelectReliable,
    PseudoLabel,
    FitSemi,
    Exclude,
    Advance,
};

constexpr int kStageCount = 11;
std::string to_string(Stage s);

struct OrchestratorHooks {
    /// Runs after each completed stage; throwing aborts the round.
    std::function<void(int round, Stage stage)> after_stage;
};

class Orchestrator {
public:
    Orchestrator(fs::path work_dir, TrainerAdapter& trainer, OracleAdapter& oracle,
                 std::shared_ptr<const QueryStrategy> strategy, OrchestratorHooks hooks = {});

    /// Round 0: labels x1, fits on it, caches round-0 embeddings of every
    /// pool sample, persists manifests/round_000.json.
    RoundState initialize(const fs::path& dataset_manifest, const RunConfig& config);
    RoundState initialize(const fs::path& dataset_manifest);

    /// Latest persisted state in the work directory.
    RoundState resume();
    bool has_state() const;

    RoundState run_round(const RoundState& state);
    RoundState run_to_completion(RoundState state);

    const RunConfig& config() const { return config_; }
    const DatasetManifest& dataset() const { return dataset_; }
    const fs::path& work_dir() const { return work_dir_; }
    fs::path manifest_path(int round) const;
    fs::path resolve(const std::string& work_relative) const { return work_dir_ / work_relative; }
    const SampleRecord& sample(const std::string& id) const;

    EmbeddingVec load_e0(const std::string& id) const;

private:
    void load_run();
    std::vector<SampleRecord> pool() const;
    void persist(const RoundState& s);
    void stage_done(int round, Stage stage);

    fs::path work_dir_;
    TrainerAdapter& trainer_;
    OracleAdapter& oracle_;
    std::shared_ptr<const QueryStrategy> strategy_;
    OrchestratorHooks hooks_;
    RunConfig config_;
    DatasetManifest dataset_;
    std::map<std::string, std::size_t> index_;
    std::optional<fs::path> dataset_path_;
};

/// Adapter for an external learner invoked as `<command> <job.json>`. The job
/// file names an `op` ("fit", "embed", "predict"), its inputs and the output
/// tensor path the command must write; exit status 0 means success.
class ExternalTrainer final : public TrainerAdapter {
public:
    ExternalTrainer(std::string command, fs::path scratch_dir);

    ModelHandle fit(const FitJob& job) override;
    EmbeddingVec embed(const ModelHandle& model, const std::string& sample_id, const fs::path& image,
                       int encoder_round) override;
    ProbVolume predict(const ModelHandle& model, const std::string& sample_id, const fs::path& image) override;

private:
    void invoke(const std::string& job_json, const fs::path& expected_output);

    std::string command_;
    fs::path scratch_;
    std::uint64_t counter_ = 0;
};

std::string render_fit_job(const FitJob& job);
FitJob parse_fit_job(const std::string& json_text);

}  // namespace asfda::al
