#include "gramsld/orchestrator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "gramsld/error.hpp"
#include "gramsld/self_labeling.hpp"

namespace gramsld {

namespace {

Json boxes_json(const std::vector<BoundingBox>& boxes) {
    Json arr = Json::array();
    for (const auto& b : boxes) arr.push_back(box_to_json(b));
    return arr;
}

std::vector<BoundingBox> boxes_from(const Json& arr, BoxSource source) {
    std::vector<BoundingBox> out;
    for (const auto& b : arr) out.push_back(box_from_json(b, source));
    return out;
}

Json pools_json(const RunState& st) {
    Json j = Json::object();
    for (const auto& [k, v] : st.pool_counts()) j[k] = v;
    return j;
}

void write_json(const std::filesystem::path& path, const Json& j) {
    std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

Json without_seq(Json j) {
    j.erase("seq");
    return j;
}

std::vector<std::string> sorted_ids(const RunState& st, SampleStatus status) {
    std::vector<std::string> ids;
    for (const auto& [id, s] : st.samples) {
        if (s.status == status) ids.push_back(id);
    }
    return ids;
}

BoxesBySample load_test_truth(const Manifest& test) {
    BoxesBySample truth;
    for (const auto& e : test.entries) {
        if (!e.labels) throw ValidationError("test sample '" + e.id + "' has no label file");
        truth[e.id] = read_labelset(*e.labels).boxes;
    }
    return truth;
}

}  // namespace

std::vector<Descriptor> compute_descriptors(const Manifest& m, const std::optional<std::filesystem::path>& cache) {
    if (cache && std::filesystem::exists(*cache)) {
        auto rows = read_descriptor_cache(*cache);
        const bool same = rows.size() == m.entries.size() &&
                          std::equal(rows.begin(), rows.end(), m.entries.begin(),
                                     [](const Descriptor& d, const ManifestEntry& e) { return d.id == e.id; });
        if (same) return rows;
    }
    std::vector<Descriptor> out;
    out.reserve(m.entries.size());
    for (const auto& e : m.entries) {
        const auto img = decode_image(e.image);
        out.push_back({e.id, hsv_histogram(img), entropy(img)});
    }
    if (cache) write_descriptor_cache(*cache, out);
    return out;
}

ClusterModel cluster_descriptors(const std::vector<Descriptor>& descriptors, const ClusteringOptions& opts) {
    const int n = static_cast<int>(descriptors.size());
    if (n < 3) throw ValidationError("clustering needs at least 3 samples");
    std::vector<Point> points;
    std::vector<std::string> ids;
    for (const auto& d : descriptors) {
        points.emplace_back(d.histogram.begin(), d.histogram.end());
        ids.push_back(d.id);
    }
    auto range = default_k_range(n);
    if (opts.k_min) range.k_min = *opts.k_min;
    if (opts.k_max) range.k_max = *opts.k_max;
    const auto dendrogram = agglomerate(points);
    return select_k(dendrogram, points, std::move(ids), range, opts.force_k);
}

KeySet select_key_samples(const ClusterModel& model, const std::vector<Descriptor>& descriptors,
                          const SelectionConfig& cfg) {
    std::map<std::string, double> entropies;
    for (const auto& d : descriptors) entropies[d.id] = d.entropy;
    return select_keys(model, entropies, cfg);
}

std::unique_ptr<Detector> make_detector(const RunConfig& cfg, std::shared_ptr<const GroundTruth> world) {
    if (cfg.detector.kind == DetectorKind::external) {
        return std::make_unique<ExternalDetector>(cfg.detector.external);
    }
    if (!world) throw ValidationError("synthetic detector requires ground_truth");
    return std::make_unique<SyntheticDetector>(cfg.detector.synthetic, std::move(world));
}

PseudoQuality pseudo_label_quality(const std::map<std::string, std::vector<BoundingBox>>& labels,
                                   const GroundTruth& truth) {
    std::size_t hits = 0, n_labels = 0, n_truth = 0;
    for (const auto& [id, boxes] : labels) {
        auto it = truth.find(id);
        if (it == truth.end()) throw ValidationError("no ground truth for '" + id + "'");
        const auto& gt = it->second.boxes;
        n_labels += boxes.size();
        n_truth += gt.size();
        std::vector<char> used(gt.size(), 0);
        for (const auto& b : boxes) {
            double best = 0.0;
            std::size_t best_k = gt.size();
            for (std::size_t k = 0; k < gt.size(); ++k) {
                if (used[k] || gt[k].class_name != b.class_name) continue;
                const double v = iou(b, gt[k]);
                if (v > best) {
                    best = v;
                    best_k = k;
                }
            }
            if (best_k < gt.size() && best >= 0.5) {
                used[best_k] = 1;
                ++hits;
            }
        }
    }
    PseudoQuality q;
    if (n_labels) q.precision = static_cast<double>(hits) / static_cast<double>(n_labels);
    if (n_truth) q.recall = static_cast<double>(hits) / static_cast<double>(n_truth);
    return q;
}

Orchestrator::Orchestrator(Session& session, Detector& detector, std::shared_ptr<const GroundTruth> truth)
    : session_(session), detector_(detector), truth_(std::move(truth)) {
    const auto& cfg = session_.config();
    cfg.validate();
    unlabeled_ = load_manifest(cfg.unlabeled_manifest);
    test_ = load_manifest(cfg.test_manifest);
    test_truth_ = load_test_truth(test_);
    alpha_ = cfg.alpha.automatic ? AlphaPolicy::auto_calibrated(cfg.alpha.share) : AlphaPolicy::fixed(cfg.alpha.value);
    recorded_ = session_.journal().records();
}

void Orchestrator::emit(Json record, const std::function<void(RunState&)>& apply) {
    if (cursor_ < recorded_.size()) {
        const auto expected = without_seq(recorded_[cursor_]);
        if (expected.dump() != record.dump()) {
            throw ValidationError("cannot resume: journal record " + std::to_string(cursor_) +
                                  " disagrees with recomputation (" + expected.value("event", "?") + ")");
        }
        ++cursor_;
        session_.mutate([&](RunState& st) { apply(st); });
        return;
    }
    session_.commit(record, apply);
    if (on_event) on_event(record);
}

std::optional<Json> Orchestrator::next_recorded(const std::string& event) {
    if (cursor_ >= recorded_.size() || recorded_[cursor_].value("event", "") != event) return std::nullopt;
    return recorded_[cursor_++];
}

void Orchestrator::apply_external_records() {
    auto& store = session_.store();
    while (cursor_ < recorded_.size()) {
        const auto& r = recorded_[cursor_];
        const auto event = r.value("event", "");
        if (event == "annotated") {
            LabelSet l;
            l.sample_id = r.at("sample").get<std::string>();
            l.annotator = r.at("annotator").get<std::string>();
            l.boxes = boxes_from(r.at("boxes"), BoxSource::human);
            l.revision = store.revision(l.sample_id);
            store.write_labels(l);
            session_.mutate([&](RunState& st) {
                if (st.samples.at(l.sample_id).status == SampleStatus::key_pending_annotation) {
                    session_.set_status(st, l.sample_id, SampleStatus::labeled_human);
                }
            });
        } else if (event == "review") {
            const auto id = r.at("sample").get<std::string>();
            const auto action = r.at("action").get<std::string>();
            if (action == "edit") {
                LabelSet l{id, boxes_from(r.at("boxes"), BoxSource::human), store.revision(id), "reviewer"};
                store.write_labels(l);
            }
            session_.mutate([&](RunState& st) {
                if (action == "reject") {
                    session_.set_status(st, id, SampleStatus::unlabeled);
                    st.reviewed.erase(id);
                } else {
                    if (action == "edit") session_.set_status(st, id, SampleStatus::labeled_human);
                    st.reviewed.insert(id);
                }
            });
        } else {
            return;
        }
        ++cursor_;
    }
}

std::filesystem::path Orchestrator::iter_dir(const std::string& kind) const {
    const auto st = session_.snapshot();
    return session_.config().work_dir / kind / ("iter_" + std::to_string(st.iteration));
}

void Orchestrator::prepare() {
    const auto& cfg = session_.config();
    emit(Json{{"event", "start"}, {"config", run_config_fingerprint(cfg)}}, [](RunState&) {});

    std::vector<Descriptor> descriptors;
    std::map<std::string, Sample> samples;
    for (const auto& e : unlabeled_.entries) {
        const auto img = decode_image(e.image);
        Descriptor d{e.id, hsv_histogram(img), entropy(img)};
        Sample s;
        s.id = e.id;
        s.image_path = e.image;
        s.width = img.width;
        s.height = img.height;
        s.entropy = d.entropy;
        samples[e.id] = s;
        session_.store().register_sample(e.id, img.width, img.height);
        descriptors.push_back(std::move(d));
    }
    write_descriptor_cache(cfg.work_dir / "descriptors.csv", descriptors);
    session_.mutate([&](RunState& st) { st.samples = samples; });

    const auto model = cluster_descriptors(descriptors, cfg.clustering);
    write_json(cfg.work_dir / "clusters.json", cluster_model_to_json(model));
    Json ch = Json::object();
    for (const auto& [k, v] : model.ch_scores) ch[std::to_string(k)] = std::isfinite(v) ? Json(v) : Json("inf");
    emit(Json{{"event", "clustered"}, {"k", model.k}, {"sizes", model.sizes}, {"ch_scores", ch}},
         [&](RunState& st) {
             st.k = model.k;
             for (std::size_t i = 0; i < model.sample_ids.size(); ++i) {
                 st.samples.at(model.sample_ids[i]).cluster_id = model.labels[i];
             }
         });

    const auto keys = select_key_samples(model, descriptors, cfg.selection);
    write_json(cfg.work_dir / "keyset.json", keyset_to_json(keys));
    Json by_cluster = Json::object();
    for (const auto& [c, ids] : keys.by_cluster) by_cluster[std::to_string(c)] = ids;
    emit(Json{{"event", "keys_selected"}, {"ratio", keys.ratio}, {"total", keys.total()}, {"clusters", by_cluster}},
         [&](RunState& st) {
             for (const auto& id : keys.all()) session_.set_status(st, id, SampleStatus::key_pending_annotation);
         });
}

void Orchestrator::annotation_gate() {
    const auto& cfg = session_.config();
    apply_external_records();
    if (auto rec = next_recorded("gate_passed")) {
        session_.mutate([&](RunState& st) {
            st.gate_passed = true;
            st.initial_unlabeled = rec->at("initial_unlabeled").get<std::size_t>();
        });
        return;
    }

    const auto pending = sorted_ids(session_.snapshot(), SampleStatus::key_pending_annotation);
    if (!pending.empty()) {
        switch (cfg.annotation) {
            case AnnotationMode::preloaded:
                for (const auto& id : pending) {
                    const auto* e = unlabeled_.find(id);
                    if (!e || !e->labels) {
                        throw ValidationError("key sample '" + id + "' has no label file in the manifest");
                    }
                    auto l = read_labelset(*e->labels);
                    l.sample_id = id;
                    l.revision = session_.store().revision(id);
                    if (l.annotator.empty()) l.annotator = "preloaded";
                    session_.annotate(l);
                }
                break;
            case AnnotationMode::oracle:
                if (!truth_) throw ValidationError("oracle annotation requires ground_truth");
                for (const auto& id : pending) {
                    auto it = truth_->find(id);
                    if (it == truth_->end()) throw ValidationError("no ground truth for key sample '" + id + "'");
                    LabelSet l{id, it->second.boxes, session_.store().revision(id), "oracle"};
                    session_.annotate(l);
                }
                break;
            case AnnotationMode::service:
                if (!session_.wait_for_gate(cfg.annotation_timeout)) {
                    throw ValidationError("annotation gate timed out with " +
                                          std::to_string(session_.pending_keys()) + " key samples pending");
                }
                break;
        }
    }
    const auto initial = session_.snapshot().count(SampleStatus::unlabeled);
    emit(Json{{"event", "gate_passed"}, {"initial_unlabeled", initial}}, [&](RunState& st) {
        st.gate_passed = true;
        st.initial_unlabeled = initial;
    });
}

Manifest Orchestrator::training_manifest() const {
    Manifest m;
    m.purpose = ManifestPurpose::train;
    const auto st = session_.snapshot();
    for (const auto& e : unlabeled_.entries) {
        const auto status = st.samples.at(e.id).status;
        if (status != SampleStatus::labeled_human && status != SampleStatus::labeled_self) continue;
        m.entries.push_back({e.id, e.image, session_.store().path_for(e.id)});
    }
    std::sort(m.entries.begin(), m.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
    return m;
}

Manifest Orchestrator::unlabeled_manifest() const {
    Manifest m;
    m.purpose = ManifestPurpose::unlabeled;
    const auto st = session_.snapshot();
    for (const auto& e : unlabeled_.entries) {
        if (st.samples.at(e.id).status == SampleStatus::unlabeled) m.entries.push_back({e.id, e.image, std::nullopt});
    }
    std::sort(m.entries.begin(), m.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) { return a.id < b.id; });
    return m;
}

void Orchestrator::train_and_evaluate(bool silent) {
    const auto& cfg = session_.config();
    const auto dir = iter_dir("detector");
    const auto train_set = training_manifest();
    std::filesystem::create_directories(dir);
    save_manifest(dir / "train_manifest.jsonl", train_set);
    const auto report = detector_.train(train_set, dir / "train");
    detector_ready_ = true;
    if (silent) return;

    const auto predictions = detector_.predict(test_, dir / "test");
    write_predictions(dir / "test_predictions.jsonl", predictions);
    const auto heads = evaluate_heads(predictions, test_truth_);

    IterationMetrics m;
    m.iteration = session_.snapshot().iteration;
    m.added = last_added_;
    if (last_quality_) {
        m.pseudo_precision = last_quality_->precision;
        m.pseudo_recall = last_quality_->recall;
    }
    m.d1 = heads.d1;
    m.d2 = heads.d2;

    std::optional<double> feature_gram;
    if (cfg.diagnostic_samples > 0 && !train_set.entries.empty()) {
        Manifest diag = train_set;
        if (diag.entries.size() > static_cast<std::size_t>(cfg.diagnostic_samples)) {
            diag.entries.resize(static_cast<std::size_t>(cfg.diagnostic_samples));
        }
        try {
            std::filesystem::create_directories(cfg.work_dir / "gram_diff");
            const auto features = detector_.report_features(diag, dir / "features");
            std::vector<RoiPair> rois;
            double diff_sum = 0.0;
            std::size_t diff_n = 0;
            for (std::size_t i = 0; i < features.size(); ++i) {
                const auto& f = features[i];
                const auto d = i == 0 ? gram_diff_export(f.d1, f.d2, iter_dir("gram_diff").string() + ".csv",
                                                         iter_dir("gram_diff").string() + ".pgm")
                                      : gram_difference(f.d1, f.d2);
                for (double v : d.values()) diff_sum += v;
                diff_n += d.values().size();
                rois.push_back({f.d1, f.d2});
            }
            if (diff_n) m.gram_diff = diff_sum / static_cast<double>(diff_n);
            if (!rois.empty()) feature_gram = mean_gram_loss(rois).value;
        } catch (const Unsupported&) {
        }
    }
    const double gram_value = report.gram_loss.value_or(feature_gram.value_or(0.0));
    const double alpha = alpha_.alpha_for(report.loss_d1, report.loss_d2, gram_value);
    m.loss = total_loss(report.loss_d1, report.loss_d2, gram_value, alpha);

    const auto pools = session_.mutate([](RunState& st) { return st.pool_counts(); });
    m.pools = pools;
    emit(Json{{"event", "trained"}, {"iteration", m.iteration}, {"metrics", metrics_to_json(m)}},
         [&](RunState& st) { st.metrics.push_back(m); });
}

void Orchestrator::write_self_labels(const std::map<std::string, std::vector<BoundingBox>>& labels) {
    auto& store = session_.store();
    for (const auto& [id, boxes] : labels) {
        store.write_labels(LabelSet{id, boxes, store.revision(id), "self"});
    }
}

void Orchestrator::apply_iteration(RunState& st, const Json& record) {
    st.iteration = record.at("iteration").get<int>();
    for (const auto& id : record.at("added")) {
        session_.set_status(st, id.get<std::string>(), SampleStatus::labeled_self);
    }
}

bool Orchestrator::iterate() {
    const auto& cfg = session_.config();
    apply_external_records();

    auto remember = [&](const Json& rec) {
        last_added_ = rec.at("added").size();
        last_quality_.reset();
        if (!rec.at("pseudo_precision").is_null()) {
            last_quality_ = PseudoQuality{rec.at("pseudo_precision").get<double>(),
                                          rec.at("pseudo_recall").get<double>()};
        }
    };

    if (auto rec = next_recorded("iteration")) {
        std::map<std::string, std::vector<BoundingBox>> labels;
        for (const auto& [id, boxes] : rec->at("labels").items()) labels[id] = boxes_from(boxes, BoxSource::self);
        write_self_labels(labels);
        session_.mutate([&](RunState& st) { apply_iteration(st, *rec); });
        remember(*rec);
        detector_ready_ = false;
        return true;
    }

    std::unique_lock pool_lock(session_.pool_mutex());
    if (!detector_ready_) train_and_evaluate(true);
    const auto pool = unlabeled_manifest();
    const auto next_iteration = session_.snapshot().iteration + 1;
    const auto dir = session_.config().work_dir / "detector" / ("iter_" + std::to_string(next_iteration - 1));
    const auto predictions = detector_.predict(pool, dir / "pool");
    if (predictions.size() != pool.entries.size()) {
        throw PluginFailure("detector returned " + std::to_string(predictions.size()) + " predictions for " +
                            std::to_string(pool.entries.size()) + " samples");
    }
    std::vector<ScoredSample> scored;
    for (const auto& p : predictions) scored.push_back({p, score(p, cfg.scoring)});

    auto samples = session_.snapshot().samples;
    auto delta = update_pool(samples, scored, cfg.scoring);
    if (delta.added.empty()) return false;

    for (auto& [id, boxes] : delta.labels) {
        const auto& s = samples.at(id);
        std::vector<BoundingBox> clamped;
        for (const auto& b : boxes) {
            if (auto c = clamp_to_image(b, s.width, s.height)) clamped.push_back(*c);
        }
        boxes = std::move(clamped);
    }

    Json labels = Json::object();
    for (const auto& [id, boxes] : delta.labels) labels[id] = boxes_json(boxes);
    Json sigma = Json::object();
    for (const auto& [c, d] : delta.clusters) sigma[std::to_string(c)] = d.sigma;
    Json scores = Json::object();
    for (const auto& [id, sc] : delta.scores) scores[id] = sc;

    std::optional<PseudoQuality> quality;
    if (truth_) quality = pseudo_label_quality(delta.labels, *truth_);

    write_json(cfg.work_dir / "scores" / ("iter_" + std::to_string(next_iteration) + ".json"),
               Json{{"iteration", next_iteration}, {"scores", scores}, {"sigma", sigma}, {"added", delta.added}});
    write_self_labels(delta.labels);

    RunState after;
    after.samples = samples;
    Json rec{{"event", "iteration"},
             {"iteration", next_iteration},
             {"added", delta.added},
             {"labels", labels},
             {"sigma", sigma},
             {"pools", pools_json(after)},
             {"pseudo_precision", quality ? Json(quality->precision) : Json(nullptr)},
             {"pseudo_recall", quality ? Json(quality->recall) : Json(nullptr)}};
    emit(rec, [&](RunState& st) { apply_iteration(st, rec); });
    remember(rec);
    detector_ready_ = false;
    return true;
}

RunState Orchestrator::run() {
    const auto& cfg = session_.config();
    prepare();
    annotation_gate();

    auto terminate = [&](const std::string& reason) {
        emit(Json{{"event", "terminated"}, {"reason", reason}, {"iteration", session_.snapshot().iteration}},
             [&](RunState& st) {
                 st.terminated = true;
                 st.termination_reason = reason;
             });
    };
    auto adopt_trained = [&]() {
        auto rec = next_recorded("trained");
        if (!rec) return false;
        const auto m = metrics_from_json(rec->at("metrics"));
        if (alpha_.is_auto() && !alpha_.frozen()) alpha_ = AlphaPolicy::fixed(m.loss.alpha);
        session_.mutate([&](RunState& st) { st.metrics.push_back(m); });
        detector_ready_ = false;
        return true;
    };

    if (!adopt_trained()) train_and_evaluate(false);
    while (true) {
        if (auto rec = next_recorded("terminated")) {
            session_.mutate([&](RunState& st) {
                st.terminated = true;
                st.termination_reason = rec->at("reason").get<std::string>();
            });
            break;
        }
        const auto st = session_.snapshot();
        const auto remaining = st.count(SampleStatus::unlabeled);
        const std::optional<std::size_t> last =
            st.iteration == 0 ? std::nullopt : std::optional<std::size_t>(last_added_);
        if (should_terminate(st.initial_unlabeled, remaining, last, cfg.scoring)) {
            terminate(remaining == 0 ? "exhausted" : "threshold");
            break;
        }
        if (st.iteration >= cfg.max_iterations) {
            terminate("max_iterations");
            break;
        }
        if (!iterate()) {
            terminate("stall");
            break;
        }
        if (!adopt_trained()) train_and_evaluate(false);
    }
    if (cursor_ < recorded_.size()) {
        throw ValidationError("cannot resume: journal has unconsumed records after termination");
    }
    return session_.snapshot();
}

RunState run_pipeline(const RunConfig& cfg) {
    std::shared_ptr<const GroundTruth> truth;
    if (cfg.ground_truth) truth = std::make_shared<const GroundTruth>(load_ground_truth(*cfg.ground_truth));
    auto detector = make_detector(cfg, truth);
    Session session(cfg);
    Orchestrator orch(session, *detector, truth);
    return orch.run();
}

ModeResults run_modes(const RunConfig& cfg) {
    if (!cfg.ground_truth) throw ValidationError("run-modes requires ground_truth for every sample");
    auto truth = std::make_shared<const GroundTruth>(load_ground_truth(*cfg.ground_truth));
    const auto unlabeled = load_manifest(cfg.unlabeled_manifest);
    for (const auto& e : unlabeled.entries) {
        if (!truth->count(e.id)) throw ValidationError("no ground truth for '" + e.id + "'");
    }

    ModeResults r;
    {
        auto detector = make_detector(cfg, truth);
        Session session(cfg);
        Orchestrator orch(session, *detector, truth);
        r.state = orch.run();
    }
    if (r.state.metrics.empty()) throw ValidationError("run produced no metrics");
    r.it = r.state.metrics.front().best();
    r.gram_sld = r.state.metrics.back().best();
    r.iterations = r.state.iteration;

    const auto fs_dir = cfg.work_dir / "fs";
    LabelStore fs_store(fs_dir / "labels");
    Manifest full;
    full.purpose = ManifestPurpose::train;
    for (const auto& e : unlabeled.entries) {
        const auto& rec = truth->at(e.id);
        fs_store.register_sample(e.id, rec.width, rec.height);
        fs_store.write_labels(LabelSet{e.id, rec.boxes, fs_store.revision(e.id), "ground_truth"});
        full.entries.push_back({e.id, e.image, fs_store.path_for(e.id)});
    }
    const auto test = load_manifest(cfg.test_manifest);
    auto fs_detector = make_detector(cfg, truth);
    fs_detector->train(full, fs_dir / "train");
    const auto preds = fs_detector->predict(test, fs_dir / "test");
    r.fs = evaluate_heads(preds, load_test_truth(test)).best();
    r.diff = r.fs.map - r.gram_sld.map;
    write_json(cfg.work_dir / "modes.json", modes_to_json(r));
    return r;
}

Json modes_to_json(const ModeResults& r) {
    return Json{{"it", eval_to_json(r.it)},
                {"gram_sld", eval_to_json(r.gram_sld)},
                {"fs", eval_to_json(r.fs)},
                {"diff", r.diff},
                {"iterations", r.iterations}};
}

}  // namespace gramsld
