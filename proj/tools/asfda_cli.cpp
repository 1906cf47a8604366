#include <algorithm>
#include <cstdio>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "asfda/bench/baselines.hpp"
#include "asfda/bench/experiment.hpp"
#include "asfda/bench/metrics.hpp"
#include "asfda/bench/synth.hpp"
#include "asfda/bench/toy_model.hpp"
#include "asfda/errors.hpp"
#include "asfda/io.hpp"
#include "asfda/kernels.hpp"
#include "asfda/orchestrator.hpp"
#include "asfda/query.hpp"
#include "asfda/reliability.hpp"
#include "asfda/tables.hpp"

using namespace asfda;
using nlohmann::json;

namespace {

// Every *.asft file in `dir`, keyed by stem, sorted.
std::map<std::string, fs::path> tensor_dir(const fs::path& dir) {
    require(fs::is_directory(dir), ErrorKind::Io, "not a directory: " + dir.string());
    std::map<std::string, fs::path> out;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".asft") out[entry.path().stem().string()] = entry.path();
    }
    require(!out.empty(), ErrorKind::EmptyInput, "no .asft files in " + dir.string());
    return out;
}

EmbeddingVec load_embedding(const fs::path& p, const std::string& id, int round) {
    const auto t = read_tensor(p);
    require(t.ndim() == 1, ErrorKind::Dimension, "embedding tensor must be 1-D: " + p.string());
    return EmbeddingVec(std::vector<double>(t.data().begin(), t.data().end()), id, round);
}

Tensor load_labels(const fs::path& p) {
    const auto t = read_tensor(p);
    if (t.ndim() == 4) return argmax_labels(ProbVolume::from_tensor(t));
    require(t.ndim() == 3, ErrorKind::Dimension, "expected a label map or probability volume: " + p.string());
    return t;
}

std::vector<std::string> split_ids(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream in(s);
    for (std::string id; std::getline(in, id, ',');)
        if (!id.empty()) out.push_back(id);
    return out;
}

struct Common {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string strategy;
    std::string out;
    bool no_semi = false;
    std::string variant;
};

void apply_run_flags(al::RunConfig& rc, const Common& o) {
    if (o.seed_set) rc.seed = o.seed;
    if (o.no_semi) rc.semi_supervised = false;
    if (!o.variant.empty()) rc.confidence_variant = reliability::parse_confidence_variant(o.variant);
    if (!o.strategy.empty()) rc.strategy = o.strategy;
}

int cmd_generate(const Common& o, int pretrain_epochs, int n_b, int rounds) {
    require(!o.out.empty(), ErrorKind::Domain, "generate needs --out");
    bench::SynthConfig cfg;
    if (!o.config.empty()) cfg = bench::parse_synth_config(read_file(o.config));
    if (o.seed_set) cfg.seed = o.seed;
    const fs::path out = o.out;
    auto dataset = bench::generate_dataset(cfg, out);
    const auto pretrained = out / "pretrained.asft";
    bench::save_toy_model(bench::pretrain_source(dataset, static_cast<std::size_t>(cfg.classes), pretrain_epochs),
                          pretrained);
    al::RunConfig rc;
    rc.n_b = n_b;
    rc.r_max = rounds;
    rc.seed = cfg.seed;
    rc.pretrained_model = pretrained;
    apply_run_flags(rc, o);
    dataset.config = rc;
    al::save_dataset_manifest(dataset, out / "dataset.json");
    std::cout << "wrote " << dataset.samples.size() << " samples to " << (out / "dataset.json").string() << "\n";
    return 0;
}

int cmd_score_query(const Common& o, const std::string& e0_dir, const std::string& emb_dir,
                    const std::string& prob_dir, int round, int rounds) {
    require(!o.out.empty(), ErrorKind::Domain, "score needs --out");
    const auto e0_files = tensor_dir(e0_dir);
    const auto emb_files = tensor_dir(emb_dir);
    const auto prob_files = tensor_dir(prob_dir);
    std::vector<EmbeddingVec> e0, cur;
    std::vector<ProbVolume> probs;
    for (const auto& [id, path] : prob_files) {
        require(e0_files.count(id) && emb_files.count(id), ErrorKind::Pairing, "no embeddings for '" + id + "'");
        e0.push_back(load_embedding(e0_files.at(id), id, 0));
        cur.push_back(load_embedding(emb_files.at(id), id, round));
        probs.push_back(ProbVolume::from_tensor(read_tensor(path), id));
    }
    require(e0.size() == e0_files.size() && cur.size() == emb_files.size(), ErrorKind::Pairing,
            "embedding and probability directories cover different ids");

    const auto strategy = bench::make_strategy(o.strategy.empty() ? "dkd+asd" : o.strategy);
    std::vector<std::string> ids;
    for (const auto& p : probs) ids.push_back(p.sample_id());
    al::QueryContext ctx;
    ctx.round = round;
    ctx.max_round = rounds;
    ctx.seed = o.seed;
    ctx.unlabeled = &ids;
    ctx.e0 = &e0;
    ctx.current = &cur;
    ctx.probs = &probs;
    const auto scored = strategy->score(ctx);
    if (scored.table) {
        write_query_table(*scored.table, o.out);
    } else {
        CsvTable t{{"sample_id", "score", "round"}, {}};
        for (const auto& e : scored.scores) t.rows.push_back({e.sample_id, format_real(e.score), std::to_string(round)});
        write_file_atomic(o.out, render_csv(t));
    }
    return 0;
}

int cmd_score_reliability(const Common& o, const std::string& emb_dir, const std::string& prob_dir,
                          const std::string& anchor_dir, int round, int n_su, double tau_c) {
    require(!o.out.empty(), ErrorKind::Domain, "score needs --out");
    const auto emb_files = tensor_dir(emb_dir);
    std::vector<reliability::UnlabeledSample> unl;
    for (const auto& [id, path] : tensor_dir(prob_dir)) {
        require(emb_files.count(id), ErrorKind::Pairing, "no embedding for '" + id + "'");
        const auto p = ProbVolume::from_tensor(read_tensor(path), id);
        const auto variant = reliability::parse_confidence_variant(o.variant.empty() ? "mean" : o.variant);
        unl.push_back({id, reliability::confidence(p, variant), load_embedding(emb_files.at(id), id, round)});
    }
    std::vector<EmbeddingVec> anchors;
    for (const auto& [id, path] : tensor_dir(anchor_dir)) anchors.push_back(load_embedding(path, id, round));
    reliability::SelectionConfig cfg;
    cfg.n_su = n_su;
    cfg.tau_c = tau_c;
    cfg.variant = reliability::parse_confidence_variant(o.variant.empty() ? "mean" : o.variant);
    const auto res = reliability::select_reliable(unl, cfg, anchors, round);
    write_reliability_table(res.rows, o.out);
    return 0;
}

int cmd_select(const Common& o, const std::string& scores_path, int n_b, const std::string& exclude,
               const std::string& manifest) {
    const auto table = parse_csv(read_file(scores_path));
    require(!table.header.empty(), ErrorKind::Format, "empty score table");
    const auto& h = table.header;
    const auto col = std::find(h.begin(), h.end(), "q") != h.end() ? "q" : "score";
    const auto qi = static_cast<std::size_t>(std::find(h.begin(), h.end(), col) - h.begin());
    require(qi < h.size() && h.front() == "sample_id", ErrorKind::Format, "score table needs sample_id and q or score");
    ScoreVector s;
    for (const auto& row : table.rows) s.add(row.at(0), parse_real(row.at(qi)));
    std::set<std::string> excluded;
    for (const auto& id : split_ids(exclude)) excluded.insert(id);
    if (!manifest.empty()) {
        const auto state = al::parse_round_manifest(read_file(manifest));
        excluded.insert(state.excluded.begin(), state.excluded.end());
    }
    const auto sel = query::select_top(s, n_b, excluded);
    json j{{"batch", sel.ids}, {"shortfall", sel.shortfall}};
    if (!o.out.empty()) write_file_atomic(o.out, j.dump(2) + "\n");
    for (const auto& id : sel.ids) std::cout << id << "\n";
    if (sel.shortfall) std::cerr << "warning: only " << sel.ids.size() << " eligible samples\n";
    return 0;
}

int cmd_round(const Common& o, const std::string& dataset, const std::string& trainer_cmd, int rounds) {
    require(!o.out.empty(), ErrorKind::Domain, "round needs --out <work dir>");
    const fs::path work = o.out;
    bench::ToyTrainer toy(0);
    std::unique_ptr<al::ExternalTrainer> external;

    // The strategy is fixed at initialization; a resumed run reads it back.
    std::string strategy = o.strategy;
    al::DatasetManifest ds;
    if (fs::exists(work / "manifests" / "round_000.json")) {
        const auto run = json::parse(read_file(work / "run.json"));
        const auto recorded = run.value("strategy", std::string("dkd+asd"));
        require(strategy.empty() || strategy == recorded || (strategy == "asfda" && recorded == "dkd+asd"),
                ErrorKind::Domain, "work directory was started with strategy '" + recorded + "'");
        strategy = recorded;
        ds = al::load_dataset_manifest(run.at("dataset").get<std::string>());
    } else {
        require(!dataset.empty(), ErrorKind::Domain, "a fresh work directory needs --dataset");
        ds = al::load_dataset_manifest(dataset);
        if (strategy.empty()) strategy = "dkd+asd";
    }
    std::size_t classes = 0;
    for (const auto& s : ds.samples) {
        if (!s.label) continue;
        const auto t = read_tensor(*s.label);
        for (double v : t.data()) classes = std::max(classes, static_cast<std::size_t>(v) + 1);
        break;
    }
    if (ds.config.pretrained_model) classes = bench::load_toy_model(*ds.config.pretrained_model).classes;
    toy = bench::ToyTrainer(classes);
    al::TrainerAdapter* trainer = &toy;
    if (!trainer_cmd.empty()) {
        external = std::make_unique<al::ExternalTrainer>(trainer_cmd, work / "trainer_jobs");
        trainer = external.get();
    }
    al::FileOracle oracle(ds);
    al::Orchestrator orch(work, *trainer, oracle, bench::make_strategy(strategy));
    al::RoundState state;
    if (orch.has_state()) {
        state = orch.resume();
    } else {
        auto rc = ds.config;
        if (!o.config.empty()) rc = al::parse_config(read_file(o.config), fs::path(o.config).parent_path());
        apply_run_flags(rc, o);
        state = orch.initialize(dataset, rc);
    }
    for (int i = 0; i < rounds && state.round < state.max_round && !state.unlabeled.empty(); ++i) {
        state = orch.run_round(state);
    }
    std::cout << orch.manifest_path(state.round).string() << "\n";
    return 0;
}

int cmd_run(const Common& o) {
    require(!o.out.empty(), ErrorKind::Domain, "run needs --out");
    bench::ExperimentConfig cfg;
    if (!o.config.empty()) cfg = bench::parse_experiment_config(read_file(o.config));
    if (o.seed_set) cfg.seeds = {o.seed};
    if (!o.strategy.empty()) cfg.strategies = split_ids(o.strategy);
    if (o.no_semi) cfg.no_semi = true;
    if (!o.variant.empty()) cfg.confidence_variant = reliability::parse_confidence_variant(o.variant);
    for (const auto& s : cfg.strategies) bench::make_strategy(s);
    const auto res = bench::run_experiment(cfg, o.out);
    std::cout << bench::render_summary_csv(res.rows);
    return 0;
}

int cmd_eval(const Common& o, const std::string& pred, const std::string& gt, int classes,
             const std::string& selected) {
    require(classes >= 2, ErrorKind::Domain, "--classes must be >= 2");
    std::map<std::string, fs::path> preds, gts;
    if (fs::is_directory(pred)) {
        preds = tensor_dir(pred);
        gts = tensor_dir(gt);
    } else {
        preds[fs::path(pred).stem().string()] = pred;
        gts[fs::path(pred).stem().string()] = gt;
    }
    CsvTable t{{"sample_id", "mean_dice"}, {}};
    for (int c = 1; c < classes; ++c) t.header.push_back("dice_class_" + std::to_string(c));
    std::map<std::string, double> per_sample;
    for (const auto& [id, path] : preds) {
        require(gts.count(id), ErrorKind::Pairing, "no ground truth for '" + id + "'");
        const auto p = load_labels(path);
        const auto g = load_labels(gts.at(id));
        const auto d = bench::per_class_dice(p, g, classes);
        double mean = 0.0;
        for (double x : d) mean += x;
        mean /= static_cast<double>(d.size());
        per_sample[id] = mean;
        std::vector<std::string> row{id, format_real(mean)};
        for (double x : d) row.push_back(format_real(x));
        t.rows.push_back(std::move(row));
    }
    const auto text = render_csv(t);
    if (!o.out.empty()) write_file_atomic(o.out, text);
    std::cout << text;
    if (!selected.empty()) {
        std::set<std::string> sel;
        for (const auto& id : split_ids(selected)) sel.insert(id);
        std::vector<double> a, b;
        for (const auto& [id, d] : per_sample) (sel.count(id) ? a : b).push_back(d);
        const auto mw = bench::mann_whitney_u(a, b);
        std::cout << "mann_whitney u=" << format_real(mw.u) << " p=" << format_real(mw.p)
                  << (mw.exact ? " exact" : " normal") << "\n";
    }
    return 0;
}

// External-trainer protocol served by the toy model.
int cmd_trainer(const std::string& job_path) {
    const auto text = read_file(job_path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        fail(ErrorKind::Format, std::string("job file is not valid JSON: ") + e.what());
    }
    const auto op = j.value("op", std::string());
    if (op == "fit") {
        const auto job = al::parse_fit_job(text);
        std::size_t classes = j.value("classes", std::size_t{0});
        if (classes == 0 && job.warm_start) classes = bench::load_toy_model(*job.warm_start).classes;
        if (classes == 0) {
            for (const auto& p : job.labeled)
                for (double v : read_tensor(p.label).data()) classes = std::max(classes, static_cast<std::size_t>(v) + 1);
        }
        bench::ToyTrainer(classes).fit(job);
        return 0;
    }
    require(op == "embed" || op == "predict", ErrorKind::Format, "unknown job op '" + op + "'");
    const al::ModelHandle model{j.at("model").get<std::string>()};
    const auto id = j.value("sample_id", std::string());
    const fs::path image = j.at("image").get<std::string>();
    const fs::path out = j.at("output").get<std::string>();
    bench::ToyTrainer toy(bench::load_toy_model(model.path).classes);
    if (op == "embed") {
        write_tensor(toy.embed(model, id, image, j.value("encoder_round", 0)).to_tensor(), out);
    } else {
        write_tensor(toy.predict(model, id, image).to_tensor(), out);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Active source-free domain adaptation toolkit"};
    app.require_subcommand(1);
    Common o;
    auto common = [&](CLI::App* sub) {
        sub->add_option("--config", o.config, "JSON config file");
        sub->add_option("--seed", o.seed, "random seed")->each([&](const std::string&) { o.seed_set = true; });
        sub->add_option("--strategy", o.strategy, "query strategy");
        sub->add_option("--out", o.out, "output path");
        sub->add_flag("--no-semi", o.no_semi, "skip the semi-supervised stages");
        sub->add_option("--confidence-variant", o.variant, "mean or sum")
            ->check(CLI::IsMember({"mean", "sum"}));
    };

    auto gen = app.add_subcommand("generate", "write a synthetic two-domain dataset");
    common(gen);
    int pretrain_epochs = 60, n_b = 2, gen_rounds = 3;
    gen->add_option("--pretrain-epochs", pretrain_epochs);
    gen->add_option("--n-b", n_b);
    gen->add_option("--rounds", gen_rounds);

    auto score = app.add_subcommand("score", "score one round from tensor files");
    common(score);
    std::string mode = "query", e0_dir, emb_dir, prob_dir, anchor_dir;
    int round = 1, rounds = 1, n_su = 1;
    double tau_c = 2.0;
    score->add_option("mode", mode, "query or reliability")->check(CLI::IsMember({"query", "reliability"}));
    score->add_option("--e0", e0_dir, "round-0 embeddings directory");
    score->add_option("--embeddings", emb_dir, "current embeddings directory")->required();
    score->add_option("--probs", prob_dir, "probability volumes directory")->required();
    score->add_option("--anchors", anchor_dir, "labeled embeddings directory");
    score->add_option("--round", round);
    score->add_option("--rounds", rounds);
    score->add_option("--n-su", n_su);
    score->add_option("--tau-c", tau_c);

    auto sel = app.add_subcommand("select", "pick a batch from a score table");
    common(sel);
    std::string scores_path, exclude, manifest;
    int sel_n_b = 1;
    sel->add_option("--scores", scores_path)->required();
    sel->add_option("--n-b", sel_n_b);
    sel->add_option("--exclude", exclude, "comma separated ids");
    sel->add_option("--manifest", manifest, "round manifest whose exclusions apply");

    auto rnd = app.add_subcommand("round", "run one orchestrated round in a work directory");
    common(rnd);
    std::string dataset, trainer_cmd;
    int round_count = 1;
    rnd->add_option("--dataset", dataset);
    rnd->add_option("--trainer-cmd", trainer_cmd, "external trainer command");
    rnd->add_option("--rounds", round_count, "rounds to run before returning");

    auto run = app.add_subcommand("run", "run a full experiment");
    common(run);

    auto ev = app.add_subcommand("eval", "Dice and rank-sum statistics from prediction tensors");
    common(ev);
    std::string pred, gt, selected;
    int classes = 4;
    ev->add_option("--pred", pred)->required();
    ev->add_option("--gt", gt)->required();
    ev->add_option("--classes", classes);
    ev->add_option("--selected", selected, "comma separated ids compared against the rest");

    auto tr = app.add_subcommand("trainer", "serve one trainer job file with the toy model");
    std::string job;
    tr->add_option("job", job)->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*gen) return cmd_generate(o, pretrain_epochs, n_b, gen_rounds);
        if (*score) {
            if (mode == "query") {
                require(!e0_dir.empty(), ErrorKind::Domain, "query scoring needs --e0");
                return cmd_score_query(o, e0_dir, emb_dir, prob_dir, round, rounds);
            }
            require(!anchor_dir.empty(), ErrorKind::Domain, "reliability scoring needs --anchors");
            return cmd_score_reliability(o, emb_dir, prob_dir, anchor_dir, round, n_su, tau_c);
        }
        if (*sel) return cmd_select(o, scores_path, sel_n_b, exclude, manifest);
        if (*rnd) return cmd_round(o, dataset, trainer_cmd, round_count);
        if (*run) return cmd_run(o);
        if (*ev) return cmd_eval(o, pred, gt, classes, selected);
        if (*tr) return cmd_trainer(job);
    } catch (const Error& e) {
        std::cerr << e.what() << "\n";
        return exit_code_for(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << "\n";
        return 4;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
