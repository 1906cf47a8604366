#include "asfda/orchestrator.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>

#include <json.hpp>

#include "asfda/errors.hpp"
#include "asfda/kernels.hpp"
#include "asfda/tables.hpp"

namespace asfda::al {

using nlohmann::json;

namespace {

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, what + " is not valid JSON: " + e.what());
    }
}

template <class T>
T get_or(const json& j, const char* key, T fallback) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("field '") + key + "': " + e.what());
    }
}

template <class T>
T get_required(const json& j, const char* key) {
    require(j.contains(key), ErrorKind::Format, std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("field '") + key + "': " + e.what());
    }
}

fs::path resolve_against(const fs::path& base, const fs::path& p) {
    if (p.is_absolute() || base.empty()) return p.lexically_normal();
    return (base / p).lexically_normal();
}

std::string relative_string(const fs::path& p, const fs::path& base) {
    if (base.empty()) return p.generic_string();
    auto rel = p.lexically_relative(base);
    return rel.empty() ? p.generic_string() : rel.generic_string();
}

std::string round_tag(int r) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "round_%03d", r);
    return buf;
}

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'') out += "'\\''";
        else out += c;
    }
    return out + "'";
}

/// Runs an adapter call, tagging adapter failures with the round and stage.
template <class F>
auto adapter_call(int round, Stage stage, F&& f) -> decltype(f()) {
    const std::string where = "round " + std::to_string(round) + " stage " + to_string(stage) + ": ";
    try {
        return f();
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::Adapter) fail(ErrorKind::Adapter, where + e.what());
        throw;
    } catch (const std::exception& e) {
        fail(ErrorKind::Adapter, where + e.what());
    }
}

}  // namespace

std::string to_string(SampleStatus s) {
    switch (s) {
        case SampleStatus::Unlabeled: return "unlabeled";
        case SampleStatus::Queried: return "queried";
        case SampleStatus::PseudoLabeled: return "pseudo_labeled";
        case SampleStatus::ExcludedFromQuery: return "excluded_from_query";
    }
    return "unknown";
}

std::string to_string(Stage s) {
    switch (s) {
        case Stage::Embed: return "embed";
        case Stage::Score: return "score";
        case Stage::Select: return "select";
        case Stage::Annotate: return "annotate";
        case Stage::MoveLabeled: return "move-labeled";
        case Stage::FitSupervised: return "fit-supervised";
        case Stage::SelectReliable: return "select-reliable";
        case Stage::PseudoLabel: return "pseudo-label";
        case Stage::FitSemi: return "fit-semi";
        case Stage::Exclude: return "exclude";
        case Stage::Advance: return "advance";
    }
    return "unknown";
}

// ---------------------------------------------------------------------------
// manifests

std::string render_config(const RunConfig& c, const fs::path& relative_to) {
    return json{
        {"n_b", c.n_b},
        {"r_max", c.r_max},
        {"tau_c", c.tau_c},
        {"seed", c.seed},
        {"semi_supervised", c.semi_supervised},
        {"confidence_variant", reliability::to_string(c.confidence_variant)},
        {"strategy", c.strategy},
        {"first_sample", c.first_sample ? json(*c.first_sample) : json(nullptr)},
        {"fixed_temperature", c.fixed_temperature ? json(*c.fixed_temperature) : json(nullptr)},
        {"epochs_init", c.epochs_init},
        {"epochs_round", c.epochs_round},
        {"pretrained_model",
         c.pretrained_model ? json(relative_string(*c.pretrained_model, relative_to)) : json(nullptr)},
    }
        .dump(2);
}

namespace {

RunConfig config_from_json(const json& j, const fs::path& base_dir) {
    RunConfig c;
    c.n_b = get_or(j, "n_b", c.n_b);
    c.r_max = get_or(j, "r_max", c.r_max);
    c.tau_c = get_or(j, "tau_c", c.tau_c);
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.semi_supervised = get_or(j, "semi_supervised", c.semi_supervised);
    c.confidence_variant =
        reliability::parse_confidence_variant(get_or<std::string>(j, "confidence_variant", "mean"));
    c.strategy = get_or(j, "strategy", c.strategy);
    if (j.contains("first_sample") && !j["first_sample"].is_null()) c.first_sample = j["first_sample"].get<std::string>();
    if (j.contains("fixed_temperature") && !j["fixed_temperature"].is_null())
        c.fixed_temperature = j["fixed_temperature"].get<double>();
    c.epochs_init = get_or(j, "epochs_init", c.epochs_init);
    c.epochs_round = get_or(j, "epochs_round", c.epochs_round);
    if (j.contains("pretrained_model") && !j["pretrained_model"].is_null())
        c.pretrained_model = resolve_against(base_dir, j["pretrained_model"].get<std::string>());

    require(c.n_b >= 1, ErrorKind::Domain, "n_b must be >= 1");
    require(c.r_max >= 1, ErrorKind::Domain, "r_max must be >= 1");
    require(c.tau_c > 0.0, ErrorKind::Domain, "tau_c must be > 0");
    require(c.epochs_init >= 0 && c.epochs_round >= 0, ErrorKind::Domain, "epoch counts must be >= 0");
    return c;
}

}  // namespace

RunConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
    return config_from_json(parse_json(json_text, "config"), base_dir);
}

DatasetManifest load_dataset_manifest(const fs::path& path) {
    const auto j = parse_json(read_file(path), "dataset manifest '" + path.string() + "'");
    const fs::path base = path.parent_path();
    DatasetManifest m;
    require(j.contains("samples") && j["samples"].is_array(), ErrorKind::Format, "dataset manifest lacks 'samples'");
    std::set<std::string> seen;
    for (const auto& s : j["samples"]) {
        SampleRecord rec;
        rec.id = get_required<std::string>(s, "id");
        require(!rec.id.empty(), ErrorKind::Format, "empty sample id");
        require(seen.insert(rec.id).second, ErrorKind::Format, "duplicate sample id '" + rec.id + "'");
        rec.domain = get_or<std::string>(s, "domain", "target");
        rec.image = resolve_against(base, get_required<std::string>(s, "image"));
        if (s.contains("label") && !s["label"].is_null()) rec.label = resolve_against(base, s["label"].get<std::string>());
        rec.split = get_or<std::string>(s, "split", "");
        m.samples.push_back(std::move(rec));
    }
    m.config = config_from_json(j.value("config", json::object()), base);
    return m;
}

std::string render_dataset_manifest(const DatasetManifest& m, const fs::path& relative_to) {
    json samples = json::array();
    for (const auto& s : m.samples) {
        json e{{"id", s.id}, {"domain", s.domain}, {"image", relative_string(s.image, relative_to)}};
        if (s.label) e["label"] = relative_string(*s.label, relative_to);
        if (!s.split.empty()) e["split"] = s.split;
        samples.push_back(std::move(e));
    }
    json j{{"samples", samples}, {"config", json::parse(render_config(m.config, relative_to))}};
    return j.dump(2) + "\n";
}

void save_dataset_manifest(const DatasetManifest& m, const fs::path& path) {
    write_file_atomic(path, render_dataset_manifest(m, path.parent_path()));
}

SampleStatus RoundState::status_of(const std::string& id) const {
    if (std::find(labeled.begin(), labeled.end(), id) != labeled.end()) return SampleStatus::Queried;
    if (std::find(pseudo.begin(), pseudo.end(), id) != pseudo.end()) return SampleStatus::PseudoLabeled;
    if (excluded.count(id)) return SampleStatus::ExcludedFromQuery;
    return SampleStatus::Unlabeled;
}

std::string render_round_manifest(const RoundState& s) {
    json checksums = json::object();
    for (const auto& [k, v] : s.checksums) checksums[k] = v;
    json j{
        {"round", s.round},
        {"max_round", s.max_round},
        {"n_b", s.n_b},
        {"n_al", s.n_al()},
        {"n_su", s.n_su_used},
        {"seed", s.rng_seed},
        {"labeled", s.labeled},
        {"unlabeled", s.unlabeled},
        {"pseudo", s.pseudo},
        {"excluded", std::vector<std::string>(s.excluded.begin(), s.excluded.end())},
        {"query_batch", s.query_batch},
        {"score_table_path", s.score_table_path ? json(*s.score_table_path) : json(nullptr)},
        {"reliability_table_path", s.reliability_table_path ? json(*s.reliability_table_path) : json(nullptr)},
        {"model_ref", s.model_ref},
        {"stage1_model_ref", s.stage1_model_ref},
        {"semi_supervised", s.semi_supervised},
        {"stage3_init", "stage1"},
        {"checksums", checksums},
    };
    return j.dump(2) + "\n";
}

RoundState parse_round_manifest(const std::string& json_text) {
    const auto j = parse_json(json_text, "round manifest");
    RoundState s;
    s.round = get_required<int>(j, "round");
    s.max_round = get_required<int>(j, "max_round");
    s.n_b = get_required<int>(j, "n_b");
    s.n_su_used = get_or(j, "n_su", 0);
    s.rng_seed = get_or<std::uint64_t>(j, "seed", 0);
    s.labeled = get_required<std::vector<std::string>>(j, "labeled");
    s.unlabeled = get_required<std::vector<std::string>>(j, "unlabeled");
    s.pseudo = get_or<std::vector<std::string>>(j, "pseudo", {});
    auto excluded = get_or<std::vector<std::string>>(j, "excluded", {});
    s.excluded = std::set<std::string>(excluded.begin(), excluded.end());
    s.query_batch = get_or<std::vector<std::string>>(j, "query_batch", {});
    if (j.contains("score_table_path") && !j["score_table_path"].is_null())
        s.score_table_path = j["score_table_path"].get<std::string>();
    if (j.contains("reliability_table_path") && !j["reliability_table_path"].is_null())
        s.reliability_table_path = j["reliability_table_path"].get<std::string>();
    s.model_ref = get_required<std::string>(j, "model_ref");
    s.stage1_model_ref = get_or<std::string>(j, "stage1_model_ref", "");
    s.semi_supervised = get_or(j, "semi_supervised", true);
    s.checksums = get_or<std::map<std::string, std::string>>(j, "checksums", {});
    return s;
}

// ---------------------------------------------------------------------------
// adapters

FileOracle::FileOracle(const DatasetManifest& dataset) {
    for (const auto& s : dataset.samples) {
        if (s.label) labels_[s.id] = *s.label;
    }
}

std::vector<fs::path> FileOracle::annotate(const std::vector<std::string>& sample_ids) {
    std::vector<fs::path> out;
    out.reserve(sample_ids.size());
    for (const auto& id : sample_ids) {
        auto it = labels_.find(id);
        require(it != labels_.end(), ErrorKind::Adapter, "oracle has no label for '" + id + "'");
        require(fs::exists(it->second), ErrorKind::Adapter, "label file missing: " + it->second.string());
        out.push_back(it->second);
    }
    return out;
}

StrategyScores FusedQueryStrategy::score(const QueryContext& ctx) const {
    query::QueryScores table;
    if (ctx.fixed_temperature) {
        const double tau = *ctx.fixed_temperature;
        ScoreVector pakd_col, asd_col;
        for (std::size_t i = 0; i < ctx.probs->size(); ++i) {
            pakd_col.add((*ctx.probs)[i].sample_id(), query::pakd((*ctx.e0)[i], (*ctx.current)[i]));
            asd_col.add((*ctx.probs)[i].sample_id(), query::asd_with_temperature((*ctx.probs)[i], tau));
        }
        const auto pd_col = query::pd_scores(*ctx.current, pakd_col);
        table = query::query_criterion(query::dkd(pakd_col, pd_col), asd_col, ctx.round);
        for (auto& row : table) {
            row.pakd = pakd_col.at(row.sample_id);
            row.pd = pd_col.at(row.sample_id);
        }
    } else {
        table = query::score_round(*ctx.e0, *ctx.current, *ctx.probs, ctx.round, ctx.max_round);
    }
    return {query::q_column(table), std::move(table)};
}

ExternalTrainer::ExternalTrainer(std::string command, fs::path scratch_dir)
    : command_(std::move(command)), scratch_(std::move(scratch_dir)) {}

std::string render_fit_job(const FitJob& job) {
    auto pairs = [](const std::vector<TrainingPair>& v) {
        json a = json::array();
        for (const auto& p : v) a.push_back({{"id", p.id}, {"image", p.image.string()}, {"label", p.label.string()}});
        return a;
    };
    json j{{"op", "fit"},
           {"labeled", pairs(job.labeled)},
           {"pseudo", pairs(job.pseudo)},
           {"epochs", job.epochs},
           {"seed", job.seed},
           {"warm_start", job.warm_start ? json(job.warm_start->string()) : json(nullptr)},
           {"output", job.output.string()}};
    return j.dump(2);
}

FitJob parse_fit_job(const std::string& json_text) {
    const auto j = parse_json(json_text, "fit job");
    FitJob job;
    auto pairs = [&](const char* key) {
        std::vector<TrainingPair> v;
        for (const auto& p : j.value(key, json::array())) {
            v.push_back({get_required<std::string>(p, "id"), get_required<std::string>(p, "image"),
                         get_required<std::string>(p, "label")});
        }
        return v;
    };
    job.labeled = pairs("labeled");
    job.pseudo = pairs("pseudo");
    job.epochs = get_or(j, "epochs", 0);
    job.seed = get_or<std::uint64_t>(j, "seed", 0);
    if (j.contains("warm_start") && !j["warm_start"].is_null()) job.warm_start = j["warm_start"].get<std::string>();
    job.output = get_required<std::string>(j, "output");
    return job;
}

void ExternalTrainer::invoke(const std::string& job_json, const fs::path& expected_output) {
    fs::create_directories(scratch_);
    const auto job_path = scratch_ / ("job_" + std::to_string(counter_++) + ".json");
    write_file_atomic(job_path, job_json);
    std::error_code ec;
    fs::remove(expected_output, ec);
    const std::string cmd = command_ + " " + shell_quote(job_path.string());
    const int status = std::system(cmd.c_str());
    require(status == 0, ErrorKind::Adapter, "trainer command exited with status " + std::to_string(status));
    require(fs::exists(expected_output), ErrorKind::Adapter,
            "trainer did not write declared output " + expected_output.string());
}

ModelHandle ExternalTrainer::fit(const FitJob& job) {
    invoke(render_fit_job(job), job.output);
    return {job.output};
}

EmbeddingVec ExternalTrainer::embed(const ModelHandle& model, const std::string& sample_id, const fs::path& image,
                                    int encoder_round) {
    const auto out = scratch_ / ("embed_" + std::to_string(counter_) + ".asft");
    json j{{"op", "embed"},           {"model", model.path.string()}, {"sample_id", sample_id},
           {"image", image.string()}, {"encoder_round", encoder_round}, {"output", out.string()}};
    invoke(j.dump(2), out);
    const auto t = read_tensor(out);
    require(t.ndim() == 1, ErrorKind::Adapter, "embedding output must be 1-D");
    return EmbeddingVec(std::vector<double>(t.data().begin(), t.data().end()), sample_id, encoder_round);
}

ProbVolume ExternalTrainer::predict(const ModelHandle& model, const std::string& sample_id, const fs::path& image) {
    const auto out = scratch_ / ("predict_" + std::to_string(counter_) + ".asft");
    json j{{"op", "predict"},
           {"model", model.path.string()},
           {"sample_id", sample_id},
           {"image", image.string()},
           {"output", out.string()}};
    invoke(j.dump(2), out);
    return ProbVolume::from_tensor(read_tensor(out), sample_id);
}

// ---------------------------------------------------------------------------
// orchestration

Orchestrator::Orchestrator(fs::path work_dir, TrainerAdapter& trainer, OracleAdapter& oracle,
                           std::shared_ptr<const QueryStrategy> strategy, OrchestratorHooks hooks)
    : work_dir_(std::move(work_dir)), trainer_(trainer), oracle_(oracle), strategy_(std::move(strategy)),
      hooks_(std::move(hooks)) {
    require(strategy_ != nullptr, ErrorKind::Domain, "orchestrator needs a query strategy");
}

fs::path Orchestrator::manifest_path(int round) const { return work_dir_ / "manifests" / (round_tag(round) + ".json"); }

bool Orchestrator::has_state() const { return fs::exists(manifest_path(0)); }

const SampleRecord& Orchestrator::sample(const std::string& id) const {
    auto it = index_.find(id);
    require(it != index_.end(), ErrorKind::Pairing, "unknown sample '" + id + "'");
    return dataset_.samples[it->second];
}

std::vector<SampleRecord> Orchestrator::pool() const {
    std::vector<SampleRecord> out;
    for (const auto& s : dataset_.samples) {
        if (s.split != "heldout" && s.domain != "source") out.push_back(s);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
}

void Orchestrator::stage_done(int round, Stage stage) {
    if (hooks_.after_stage) hooks_.after_stage(round, stage);
}

EmbeddingVec Orchestrator::load_e0(const std::string& id) const {
    const auto t = read_tensor(work_dir_ / "e0" / (id + ".asft"));
    return EmbeddingVec(std::vector<double>(t.data().begin(), t.data().end()), id, 0);
}

void Orchestrator::persist(const RoundState& s) { write_file_atomic(manifest_path(s.round), render_round_manifest(s)); }

RoundState Orchestrator::initialize(const fs::path& dataset_manifest) {
    auto m = load_dataset_manifest(dataset_manifest);
    return initialize(dataset_manifest, m.config);
}

RoundState Orchestrator::initialize(const fs::path& dataset_manifest, const RunConfig& config) {
    dataset_ = load_dataset_manifest(dataset_manifest);
    dataset_.config = config;
    config_ = config;
    dataset_path_ = fs::absolute(dataset_manifest);
    index_.clear();
    for (std::size_t i = 0; i < dataset_.samples.size(); ++i) index_[dataset_.samples[i].id] = i;

    const auto samples = pool();
    const std::size_t needed = 1 + static_cast<std::size_t>(config_.n_b) * static_cast<std::size_t>(config_.r_max);
    require(samples.size() >= needed, ErrorKind::Budget,
            "target pool holds " + std::to_string(samples.size()) + " samples, need >= " + std::to_string(needed));
    require(config_.pretrained_model.has_value(), ErrorKind::Domain, "config lacks a pretrained_model");

    fs::create_directories(work_dir_ / "manifests");
    json run{{"dataset", dataset_path_->string()},
             {"config", json::parse(render_config(config_, dataset_path_->parent_path()))},
             {"strategy", strategy_->name()}};
    write_file_atomic(work_dir_ / "run.json", run.dump(2) + "\n");

    std::string first = samples.front().id;
    if (config_.first_sample) {
        first = *config_.first_sample;
        require(std::any_of(samples.begin(), samples.end(), [&](const auto& s) { return s.id == first; }),
                ErrorKind::Domain, "first_sample '" + first + "' is not in the target pool");
    }

    const ModelHandle pretrained{*config_.pretrained_model};
    for (const auto& s : samples) {
        const auto path = work_dir_ / "e0" / (s.id + ".asft");
        if (fs::exists(path)) continue;
        auto e = adapter_call(0, Stage::Embed, [&] { return trainer_.embed(pretrained, s.id, s.image, 0); });
        write_tensor(e.to_tensor(), path);
    }

    const auto labels = adapter_call(0, Stage::Annotate, [&] { return oracle_.annotate({first}); });
    FitJob job;
    job.labeled = {{first, sample(first).image, labels.front()}};
    job.epochs = config_.epochs_init;
    job.seed = config_.seed;
    job.warm_start = pretrained.path;
    job.output = work_dir_ / "models" / (round_tag(0) + ".asft");
    fs::create_directories(job.output.parent_path());
    adapter_call(0, Stage::FitSupervised, [&] { return trainer_.fit(job); });

    RoundState s;
    s.round = 0;
    s.max_round = config_.r_max;
    s.n_b = config_.n_b;
    s.rng_seed = config_.seed;
    s.semi_supervised = config_.semi_supervised;
    s.labeled = {first};
    for (const auto& rec : samples) {
        if (rec.id != first) s.unlabeled.push_back(rec.id);
    }
    s.model_ref = relative_string(job.output, work_dir_);
    s.stage1_model_ref = s.model_ref;
    s.checksums[s.model_ref] = file_checksum(job.output);
    persist(s);
    return s;
}

void Orchestrator::load_run() {
    const auto run = parse_json(read_file(work_dir_ / "run.json"), "run.json");
    const fs::path dataset_path = get_required<std::string>(run, "dataset");
    dataset_ = load_dataset_manifest(dataset_path);
    dataset_path_ = dataset_path;
    config_ = config_from_json(run.at("config"), dataset_path.parent_path());
    dataset_.config = config_;
    index_.clear();
    for (std::size_t i = 0; i < dataset_.samples.size(); ++i) index_[dataset_.samples[i].id] = i;
}

RoundState Orchestrator::resume() {
    require(has_state(), ErrorKind::Io, "no persisted state in '" + work_dir_.string() + "'");
    load_run();
    int latest = 0;
    while (fs::exists(manifest_path(latest + 1))) ++latest;
    return parse_round_manifest(read_file(manifest_path(latest)));
}

RoundState Orchestrator::run_round(const RoundState& in) {
    require(in.round < in.max_round, ErrorKind::Domain, "all rounds already completed");
    require(!in.unlabeled.empty(), ErrorKind::Exhaustion, "unlabeled pool exhausted");
    const int r = in.round + 1;
    RoundState s = in;
    s.query_batch.clear();
    s.pseudo.clear();
    s.score_table_path.reset();
    s.reliability_table_path.reset();
    s.n_su_used = 0;
    s.checksums.clear();

    const ModelHandle model{resolve(in.model_ref)};
    const std::string tag = round_tag(r);

    // 1. embeddings and predictions of the unlabeled pool under the latest encoder
    std::vector<EmbeddingVec> e0, current, labeled_emb;
    std::vector<ProbVolume> probs;
    for (const auto& id : in.unlabeled) {
        e0.push_back(load_e0(id));
        const auto& rec = sample(id);
        current.push_back(adapter_call(r, Stage::Embed, [&] { return trainer_.embed(model, id, rec.image, r); }));
        probs.push_back(adapter_call(r, Stage::Embed, [&] { return trainer_.predict(model, id, rec.image); }));
    }
    for (const auto& id : in.labeled) {
        labeled_emb.push_back(
            adapter_call(r, Stage::Embed, [&] { return trainer_.embed(model, id, sample(id).image, r); }));
    }
    stage_done(r, Stage::Embed);

    // 2. query scores
    QueryContext ctx;
    ctx.round = r;
    ctx.max_round = in.max_round;
    ctx.seed = in.rng_seed;
    ctx.unlabeled = &in.unlabeled;
    ctx.e0 = &e0;
    ctx.current = &current;
    ctx.probs = &probs;
    ctx.labeled_embeddings = &labeled_emb;
    ctx.fixed_temperature = config_.fixed_temperature;
    const auto scored = strategy_->score(ctx);
    const std::string score_rel = "scores/" + tag + "_query.csv";
    if (scored.table) {
        write_query_table(*scored.table, resolve(score_rel));
    } else {
        CsvTable t{{"sample_id", "score", "round"}, {}};
        for (const auto& e : scored.scores) t.rows.push_back({e.sample_id, format_real(e.score), std::to_string(r)});
        write_file_atomic(resolve(score_rel), render_csv(t));
    }
    s.score_table_path = score_rel;
    stage_done(r, Stage::Score);

    // 3. top-N_B eligible samples
    s.query_batch = query::select_top(scored.scores, in.n_b, in.excluded).ids;
    stage_done(r, Stage::Select);

    // 4. oracle
    adapter_call(r, Stage::Annotate, [&] { return oracle_.annotate(s.query_batch); });
    stage_done(r, Stage::Annotate);

    // 5. T_u -> T_l
    for (const auto& id : s.query_batch) {
        s.labeled.push_back(id);
        s.unlabeled.erase(std::find(s.unlabeled.begin(), s.unlabeled.end(), id));
    }
    stage_done(r, Stage::MoveLabeled);

    // 6. supervised fine-tuning on T_l
    const auto labels = adapter_call(r, Stage::FitSupervised, [&] { return oracle_.annotate(s.labeled); });
    FitJob sup;
    for (std::size_t i = 0; i < s.labeled.size(); ++i) {
        sup.labeled.push_back({s.labeled[i], sample(s.labeled[i]).image, labels[i]});
    }
    sup.epochs = config_.epochs_round;
    sup.seed = in.rng_seed + 1000u * static_cast<std::uint64_t>(r) + 1u;
    sup.warm_start = model.path;
    sup.output = work_dir_ / "models" / (tag + "_stage1.asft");
    const auto stage1 = adapter_call(r, Stage::FitSupervised, [&] { return trainer_.fit(sup); });
    s.stage1_model_ref = relative_string(sup.output, work_dir_);
    s.model_ref = s.stage1_model_ref;
    stage_done(r, Stage::FitSupervised);

    std::set<std::string> exclusion_update;
    if (config_.semi_supervised && !s.unlabeled.empty()) {
        // 7. reliability selection with the stage-1 model
        std::vector<reliability::UnlabeledSample> unl;
        std::map<std::string, ProbVolume> stage1_probs;
        for (const auto& id : s.unlabeled) {
            const auto& rec = sample(id);
            auto p = adapter_call(r, Stage::SelectReliable, [&] { return trainer_.predict(stage1, id, rec.image); });
            auto e = adapter_call(r, Stage::SelectReliable, [&] { return trainer_.embed(stage1, id, rec.image, r); });
            unl.push_back({id, reliability::confidence(p, config_.confidence_variant), std::move(e)});
            stage1_probs.emplace(id, std::move(p));
        }
        std::vector<EmbeddingVec> anchors;
        for (const auto& id : s.labeled) {
            anchors.push_back(
                adapter_call(r, Stage::SelectReliable, [&] { return trainer_.embed(stage1, id, sample(id).image, r); }));
        }
        reliability::SelectionConfig sel;
        sel.n_su = std::min(in.n_b * r, static_cast<int>(s.unlabeled.size()));
        sel.tau_c = config_.tau_c;
        sel.variant = config_.confidence_variant;
        const auto result = reliability::select_reliable(unl, sel, anchors, r);
        const std::string rel_rel = "scores/" + tag + "_reliability.csv";
        write_reliability_table(result.rows, resolve(rel_rel));
        s.reliability_table_path = rel_rel;
        s.n_su_used = sel.n_su;
        stage_done(r, Stage::SelectReliable);

        // 8. pseudo labels from the stage-1 model
        FitJob semi;
        semi.labeled = sup.labeled;
        for (const auto& id : result.selected) {
            const auto path = work_dir_ / "pseudo" / tag / (id + ".asft");
            write_tensor(argmax_labels(stage1_probs.at(id)), path);
            semi.pseudo.push_back({id, sample(id).image, path});
            s.pseudo.push_back(id);
        }
        stage_done(r, Stage::PseudoLabel);

        // 9. joint fine-tuning on T_l and the pseudo set, resuming from stage 1
        semi.epochs = config_.epochs_round;
        semi.seed = in.rng_seed + 1000u * static_cast<std::uint64_t>(r) + 3u;
        semi.warm_start = stage1.path;
        semi.output = work_dir_ / "models" / (tag + ".asft");
        adapter_call(r, Stage::FitSemi, [&] { return trainer_.fit(semi); });
        s.model_ref = relative_string(semi.output, work_dir_);
        stage_done(r, Stage::FitSemi);

        exclusion_update = result.exclusion_update;
    }

    // 10. reliability-selected samples leave the query pool for good
    s.excluded.insert(exclusion_update.begin(), exclusion_update.end());
    stage_done(r, Stage::Exclude);

    // 11. advance and persist
    s.round = r;
    for (const auto& ref : {s.model_ref, s.stage1_model_ref}) s.checksums[ref] = file_checksum(resolve(ref));
    s.checksums[*s.score_table_path] = file_checksum(resolve(*s.score_table_path));
    if (s.reliability_table_path) s.checksums[*s.reliability_table_path] = file_checksum(resolve(*s.reliability_table_path));
    persist(s);
    stage_done(r, Stage::Advance);
    return s;
}

RoundState Orchestrator::run_to_completion(RoundState state) {
    while (state.round < state.max_round && !state.unlabeled.empty()) state = run_round(state);
    return state;
}

}  // namespace asfda::al
