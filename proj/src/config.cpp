#include "gramsld/config.hpp"

#include <fstream>

#include "gramsld/error.hpp"

namespace gramsld {

void RunConfig::validate() const {
    if (!(selection.ratio > 0.0 && selection.ratio <= 1.0)) throw ValidationError("ratio must lie in (0,1]");
    scoring.validate();
    if (clustering.force_k && *clustering.force_k < 2) throw ValidationError("force_k must be >= 2");
    if (detector.kind == DetectorKind::synthetic) {
        detector.synthetic.validate();
        if (!ground_truth) throw ValidationError("synthetic detector requires ground_truth");
    } else {
        detector.external.validate();
    }
    if (annotation == AnnotationMode::oracle && !ground_truth) {
        throw ValidationError("oracle annotation requires ground_truth");
    }
    if (!alpha.automatic && !(alpha.value >= 0.0)) throw ValidationError("alpha must be >= 0");
    if (max_iterations < 1) throw ValidationError("max_iterations must be >= 1");
    for (const auto* p : {&unlabeled_manifest, &test_manifest}) {
        if (!std::filesystem::exists(*p)) throw ValidationError("missing file " + p->string());
    }
    if (ground_truth && !std::filesystem::exists(*ground_truth)) {
        throw ValidationError("missing file " + ground_truth->string());
    }
}

namespace {

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    std::filesystem::path q(p);
    return q.is_absolute() ? q : base / q;
}

}  // namespace

RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir) {
    RunConfig c;
    try {
        c.unlabeled_manifest = resolve(base_dir, j.at("unlabeled_manifest").get<std::string>());
        c.test_manifest = resolve(base_dir, j.at("test_manifest").get<std::string>());
        c.work_dir = resolve(base_dir, j.value("work_dir", std::string("work")));
        if (j.contains("ground_truth") && !j["ground_truth"].is_null()) {
            c.ground_truth = resolve(base_dir, j["ground_truth"].get<std::string>());
        }
        if (j.contains("selection")) {
            const auto& s = j["selection"];
            c.selection.ratio = s.value("ratio", c.selection.ratio);
            if (s.contains("per_cluster_cap") && !s["per_cluster_cap"].is_null()) {
                c.selection.per_cluster_cap = s["per_cluster_cap"].get<int>();
            }
        }
        if (j.contains("scoring")) {
            const auto& s = j["scoring"];
            c.scoring.delta_acc = s.value("delta_acc", c.scoring.delta_acc);
            c.scoring.delta_iou = s.value("delta_iou", c.scoring.delta_iou);
            c.scoring.beta = s.value("beta", c.scoring.beta);
            c.scoring.termination_fraction = s.value("termination_fraction", c.scoring.termination_fraction);
        }
        if (j.contains("clustering")) {
            const auto& s = j["clustering"];
            auto opt = [&](const char* key) -> std::optional<int> {
                if (s.contains(key) && !s[key].is_null()) return s[key].get<int>();
                return std::nullopt;
            };
            c.clustering.k_min = opt("k_min");
            c.clustering.k_max = opt("k_max");
            c.clustering.force_k = opt("force_k");
        }
        c.seed = j.value("seed", c.seed);
        if (j.contains("detector")) {
            const auto& d = j["detector"];
            const auto type = d.value("type", std::string("synthetic"));
            if (type == "synthetic") {
                c.detector.kind = DetectorKind::synthetic;
                c.detector.synthetic = synthetic_config_from_json(d);
                if (!d.contains("seed")) c.detector.synthetic.seed = c.seed;
            } else if (type == "external") {
                c.detector.kind = DetectorKind::external;
                auto& e = c.detector.external;
                e.train_template = d.at("train").get<std::string>();
                e.predict_template = d.at("predict").get<std::string>();
                if (d.contains("features") && !d["features"].is_null()) {
                    e.features_template = d["features"].get<std::string>();
                }
                if (d.contains("config") && !d["config"].is_null()) {
                    e.config_path = resolve(base_dir, d["config"].get<std::string>()).string();
                }
                e.timeout = std::chrono::seconds(d.value("timeout", 3600));
            } else {
                throw ValidationError("unknown detector type '" + type + "'");
            }
        } else {
            c.detector.synthetic.seed = c.seed;
        }
        if (j.contains("alpha")) {
            const auto& a = j["alpha"];
            if (a.is_string() && a.get<std::string>() == "auto") {
                c.alpha.automatic = true;
            } else if (a.is_number()) {
                c.alpha.automatic = false;
                c.alpha.value = a.get<double>();
            } else if (a.is_object()) {
                c.alpha.automatic = true;
                c.alpha.share = a.value("share", c.alpha.share);
            } else {
                throw ValidationError("alpha must be \"auto\", a number, or {\"share\": x}");
            }
        }
        const auto mode = j.value("annotation", std::string("preloaded"));
        if (mode == "preloaded") c.annotation = AnnotationMode::preloaded;
        else if (mode == "oracle") c.annotation = AnnotationMode::oracle;
        else if (mode == "service") c.annotation = AnnotationMode::service;
        else throw ValidationError("unknown annotation mode '" + mode + "'");
        c.annotation_timeout = std::chrono::seconds(j.value("annotation_timeout", 3600));
        c.review = j.value("review", false);
        c.max_iterations = j.value("max_iterations", c.max_iterations);
        c.diagnostic_samples = j.value("diagnostic_samples", c.diagnostic_samples);
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("malformed run config: ") + e.what());
    }
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path.string());
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw ValidationError("malformed config " + path.string() + ": " + e.what());
    }
    return run_config_from_json(j, path.parent_path());
}

Json run_config_fingerprint(const RunConfig& c) {
    Json j{{"ratio", c.selection.ratio},
           {"delta_acc", c.scoring.delta_acc},
           {"delta_iou", c.scoring.delta_iou},
           {"beta", c.scoring.beta},
           {"termination_fraction", c.scoring.termination_fraction},
           {"seed", c.seed},
           {"review", c.review},
           {"max_iterations", c.max_iterations}};
    j["force_k"] = c.clustering.force_k ? Json(*c.clustering.force_k) : Json(nullptr);
    j["alpha"] = c.alpha.automatic ? Json{{"share", c.alpha.share}} : Json(c.alpha.value);
    if (c.detector.kind == DetectorKind::synthetic) {
        j["detector"] = synthetic_config_to_json(c.detector.synthetic);
        j["detector"]["type"] = "synthetic";
    } else {
        j["detector"] = {{"type", "external"},
                         {"train", c.detector.external.train_template},
                         {"predict", c.detector.external.predict_template}};
    }
    return j;
}

}  // namespace gramsld
