#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "gramsld/annotation_service.hpp"
#include "gramsld/orchestrator.hpp"
#include "gramsld/self_labeling.hpp"
#include "gramsld/simulate.hpp"

using namespace gramsld;

namespace {

struct Overrides {
    std::string config;
    std::optional<double> ratio;
    std::optional<double> beta;
    std::optional<int> force_k;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> work_dir;
};

void add_common(CLI::App* cmd, Overrides& o, bool config_required = true) {
    auto* opt = cmd->add_option("--config", o.config, "Run configuration (JSON)");
    if (config_required) opt->required();
    cmd->add_option("--ratio", o.ratio, "Key-sample ratio");
    cmd->add_option("--beta", o.beta, "Cluster threshold multiplier");
    cmd->add_option("--force-k", o.force_k, "Use this cluster count instead of the CH argmax");
    cmd->add_option("--seed", o.seed, "Random seed");
    cmd->add_option("--work-dir", o.work_dir, "Override the work directory");
}

RunConfig load_config(const Overrides& o) {
    auto cfg = load_run_config(o.config);
    if (o.ratio) cfg.selection.ratio = *o.ratio;
    if (o.beta) cfg.scoring.beta = *o.beta;
    if (o.force_k) cfg.clustering.force_k = *o.force_k;
    if (o.seed) {
        cfg.seed = *o.seed;
        cfg.detector.synthetic.seed = *o.seed;
    }
    if (o.work_dir) cfg.work_dir = *o.work_dir;
    cfg.validate();
    std::filesystem::create_directories(cfg.work_dir);
    return cfg;
}

void write_file(const std::filesystem::path& p, const Json& j) {
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::trunc);
    if (!out) throw IoError("cannot write " + p.string());
    out << j.dump(2) << '\n';
}

Json summary(const RunState& st) {
    Json metrics = Json::array();
    for (const auto& m : st.metrics) {
        metrics.push_back(Json{{"iteration", m.iteration},
                               {"added", m.added},
                               {"map_d1", m.d1.map},
                               {"map_d2", m.d2.map},
                               {"pseudo_precision", m.pseudo_precision ? Json(*m.pseudo_precision) : Json()}});
    }
    Json pools = Json::object();
    for (const auto& [k, v] : st.pool_counts()) pools[k] = v;
    return Json{{"iterations", st.iteration},
                {"k", st.k ? Json(*st.k) : Json()},
                {"termination", st.termination_reason},
                {"pools", pools},
                {"metrics", metrics}};
}

std::atomic<bool> interrupted{false};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Co-training object detection with cluster-wise key selection and gram-loss heads"};
    app.require_subcommand(1);

    Overrides o;
    auto* cluster = app.add_subcommand("cluster", "Extract descriptors and cluster the unlabeled pool");
    add_common(cluster, o);
    auto* keys = app.add_subcommand("select-keys", "Cluster, then pick key samples for annotation");
    add_common(keys, o);
    auto* run = app.add_subcommand("run", "Run (or resume) the co-training loop");
    add_common(run, o);
    auto* modes = app.add_subcommand("run-modes", "Compare initial-train, co-training and fully supervised");
    add_common(modes, o);

    auto* score_cmd = app.add_subcommand("score", "Score prediction pairs");
    add_common(score_cmd, o, false);
    std::string predictions_path;
    score_cmd->add_option("--predictions", predictions_path, "Prediction pairs (JSON Lines)")->required();

    auto* eval_cmd = app.add_subcommand("eval", "Evaluate prediction pairs on the test manifest");
    add_common(eval_cmd, o, false);
    std::string test_manifest;
    eval_cmd->add_option("--predictions", predictions_path, "Prediction pairs (JSON Lines)")->required();
    eval_cmd->add_option("--test-manifest", test_manifest, "Test manifest (defaults to the config's)");

    auto* diff_cmd = app.add_subcommand("gram-diff", "Gram loss and |G1-G2| export for two feature maps");
    std::string f1_path, f2_path, out_prefix;
    bool raw_gram = false;
    diff_cmd->add_option("--f1", f1_path, "Head 1 features (CSV)")->required();
    diff_cmd->add_option("--f2", f2_path, "Head 2 features (CSV)")->required();
    diff_cmd->add_option("--out", out_prefix, "Output prefix for .csv and .pgm");
    diff_cmd->add_flag("--unnormalized", raw_gram, "Skip the 1/(M*N) spatial normalisation");

    auto* sim = app.add_subcommand("simulate", "Write a synthetic scenario and a matching config");
    ScenarioConfig sc;
    std::string sim_out;
    sim->add_option("--out", sim_out, "Output directory")->required();
    sim->add_option("--n-train", sc.n_train, "Training (unlabeled) samples");
    sim->add_option("--n-test", sc.n_test, "Test samples");
    sim->add_option("--classes", sc.classes, "Object classes");
    sim->add_option("--seed", sc.seed, "Scenario seed");

    auto* serve = app.add_subcommand("serve", "Run with the annotation service collecting key labels");
    add_common(serve, o);
    int port = 8080;
    std::string host = "127.0.0.1";
    bool exit_when_done = false;
    serve->add_option("--port", port, "HTTP port");
    serve->add_option("--host", host, "Bind address");
    serve->add_flag("--exit-when-done", exit_when_done, "Stop serving once the run terminates");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*cluster || *keys) {
            const auto cfg = load_config(o);
            const auto manifest = load_manifest(cfg.unlabeled_manifest);
            const auto descriptors = compute_descriptors(manifest, cfg.work_dir / "descriptors.csv");
            const auto model = cluster_descriptors(descriptors, cfg.clustering);
            write_file(cfg.work_dir / "clusters.json", cluster_model_to_json(model));
            if (*cluster) {
                std::cout << Json{{"k", model.k}, {"sizes", model.sizes}}.dump() << '\n';
            } else {
                const auto ks = select_key_samples(model, descriptors, cfg.selection);
                write_file(cfg.work_dir / "keyset.json", keyset_to_json(ks));
                std::cout << keyset_to_json(ks).dump() << '\n';
            }
        } else if (*run) {
            std::cout << summary(run_pipeline(load_config(o))).dump(2) << '\n';
        } else if (*modes) {
            std::cout << modes_to_json(run_modes(load_config(o))).dump(2) << '\n';
        } else if (*score_cmd) {
            ScoringConfig scoring;
            if (!o.config.empty()) scoring = load_config(o).scoring;
            if (o.beta) scoring.beta = *o.beta;
            scoring.validate();
            Json out = Json::object();
            for (const auto& p : read_predictions(predictions_path)) out[p.sample_id] = score(p, scoring);
            std::cout << out.dump(2) << '\n';
        } else if (*eval_cmd) {
            std::filesystem::path tm = test_manifest;
            if (tm.empty()) {
                if (o.config.empty()) throw ValidationError("eval needs --test-manifest or --config");
                tm = load_config(o).test_manifest;
            }
            const auto test = load_manifest(tm);
            BoxesBySample truth;
            for (const auto& e : test.entries) {
                if (!e.labels) throw ValidationError("test sample '" + e.id + "' has no label file");
                truth[e.id] = read_labelset(*e.labels).boxes;
            }
            const auto heads = evaluate_heads(read_predictions(predictions_path), truth);
            std::cout << Json{{"d1", eval_to_json(heads.d1)},
                              {"d2", eval_to_json(heads.d2)},
                              {"map", heads.best().map},
                              {"head", to_string(heads.best().head)}}
                             .dump(2)
                      << '\n';
        } else if (*diff_cmd) {
            const auto f1 = read_feature_csv(f1_path);
            const auto f2 = read_feature_csv(f2_path);
            GramOptions opts;
            opts.spatial_normalize = !raw_gram;
            const auto loss = gram_loss(f1, f2, opts);
            double mean_abs = 0.0;
            if (!out_prefix.empty()) {
                const auto d = gram_diff_export(f1, f2, out_prefix + ".csv", out_prefix + ".pgm", opts);
                for (double v : d.values()) mean_abs += v;
                mean_abs /= static_cast<double>(d.values().size());
            } else {
                const auto d = gram_difference(f1, f2, opts);
                for (double v : d.values()) mean_abs += v;
                mean_abs /= static_cast<double>(d.values().size());
            }
            std::cout << Json{{"gram_loss", loss.value}, {"mse", loss.mse}, {"mean_abs_diff", mean_abs}}.dump()
                      << '\n';
        } else if (*sim) {
            sc.validate();
            const auto paths = write_scenario(generate_scenario(sc), sim_out);
            const Json cfg{{"unlabeled_manifest", "train_manifest.jsonl"},
                           {"test_manifest", "test_manifest.jsonl"},
                           {"ground_truth", "ground_truth.jsonl"},
                           {"work_dir", "work"},
                           {"annotation", "oracle"},
                           {"seed", sc.seed},
                           {"detector", {{"type", "synthetic"}}}};
            write_file(paths.root / "config.json", cfg);
            std::cout << (paths.root / "config.json").string() << '\n';
        } else if (*serve) {
            auto cfg = load_config(o);
            cfg.annotation = AnnotationMode::service;
            std::shared_ptr<const GroundTruth> truth;
            if (cfg.ground_truth) truth = std::make_shared<const GroundTruth>(load_ground_truth(*cfg.ground_truth));
            auto detector = make_detector(cfg, truth);
            Session session(cfg);
            AnnotationService service(session);
            const int bound = service.bind(host, port);
            service.start();
            std::cerr << "serving on http://" << host << ':' << bound << '\n';
            std::signal(SIGINT, [](int) { interrupted = true; });
            std::signal(SIGTERM, [](int) { interrupted = true; });
            Orchestrator orch(session, *detector, truth);
            const auto st = orch.run();
            std::cout << summary(st).dump(2) << '\n';
            while (!exit_when_done && !interrupted) std::this_thread::sleep_for(std::chrono::milliseconds(200));
            service.stop();
        }
    } catch (const PluginFailure& e) {
        std::cerr << "plugin failure: " << e.what() << '\n';
        if (!e.diagnostics().empty()) std::cerr << e.diagnostics() << '\n';
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
