#include "gramsld/session.hpp"

#include <algorithm>

namespace gramsld {

namespace {

Json boxes_to_json(const std::vector<BoundingBox>& boxes) {
    Json arr = Json::array();
    for (const auto& b : boxes) arr.push_back(box_to_json(b));
    return arr;
}

Json optional_json(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::optional<double> optional_from(const Json& j, const char* key) {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    return j[key].get<double>();
}

Json eval_with_counts(const EvalResult& r) {
    auto j = eval_to_json(r);
    j["tp"] = r.counts.tp;
    j["fp"] = r.counts.fp;
    j["fn"] = r.counts.fn;
    return j;
}

}  // namespace

Json metrics_to_json(const IterationMetrics& m) {
    Json pools = Json::object();
    for (const auto& [k, v] : m.pools) pools[k] = v;
    return Json{{"iteration", m.iteration},
                {"added", m.added},
                {"pseudo_precision", optional_json(m.pseudo_precision)},
                {"pseudo_recall", optional_json(m.pseudo_recall)},
                {"eval", {{"d1", eval_with_counts(m.d1)}, {"d2", eval_with_counts(m.d2)}}},
                {"map", m.best().map},
                {"gram_diff", optional_json(m.gram_diff)},
                {"loss",
                 {{"loss_d1", m.loss.loss_d1},
                  {"loss_d2", m.loss.loss_d2},
                  {"gram_loss", m.loss.gram_loss},
                  {"alpha", m.loss.alpha},
                  {"total", m.loss.total}}},
                {"pools", pools}};
}

IterationMetrics metrics_from_json(const Json& j) {
    IterationMetrics m;
    m.iteration = j.at("iteration").get<int>();
    m.added = j.at("added").get<std::size_t>();
    m.pseudo_precision = optional_from(j, "pseudo_precision");
    m.pseudo_recall = optional_from(j, "pseudo_recall");
    m.d1 = eval_from_json(j.at("eval").at("d1"));
    m.d2 = eval_from_json(j.at("eval").at("d2"));
    m.gram_diff = optional_from(j, "gram_diff");
    const auto& l = j.at("loss");
    m.loss = {l.at("loss_d1").get<double>(), l.at("loss_d2").get<double>(), l.at("gram_loss").get<double>(),
              l.at("alpha").get<double>(), l.at("total").get<double>()};
    for (const auto& [k, v] : j.at("pools").items()) m.pools[k] = v.get<std::size_t>();
    return m;
}

std::map<std::string, std::size_t> RunState::pool_counts() const {
    std::map<std::string, std::size_t> out;
    for (auto s : {SampleStatus::unlabeled, SampleStatus::key_pending_annotation, SampleStatus::labeled_human,
                   SampleStatus::labeled_self, SampleStatus::excluded}) {
        out[to_string(s)] = 0;
    }
    for (const auto& [id, s] : samples) ++out[to_string(s.status)];
    return out;
}

std::size_t RunState::count(SampleStatus st) const {
    return static_cast<std::size_t>(
        std::count_if(samples.begin(), samples.end(), [&](const auto& kv) { return kv.second.status == st; }));
}

std::optional<QueueKind> parse_queue_kind(const std::string& s) {
    if (s == "key_annotation") return QueueKind::key_annotation;
    if (s == "pseudo_review") return QueueKind::pseudo_review;
    return std::nullopt;
}

Json queue_item_to_json(const QueueItem& q) {
    return Json{{"sample_id", q.sample_id},
                {"kind", q.kind == QueueKind::key_annotation ? "key_annotation" : "pseudo_review"},
                {"width", q.width},
                {"height", q.height},
                {"cluster_id", q.cluster_id},
                {"boxes", boxes_to_json(q.boxes)},
                {"revision", q.revision}};
}

std::optional<ReviewAction> parse_review_action(const std::string& s) {
    if (s == "approve") return ReviewAction::approve;
    if (s == "reject") return ReviewAction::reject;
    if (s == "edit") return ReviewAction::edit;
    return std::nullopt;
}

Session::Session(RunConfig cfg)
    : cfg_(std::move(cfg)), store_(cfg_.work_dir / "labels"), journal_(cfg_.work_dir / "journal.jsonl") {}

RunState Session::snapshot() const {
    std::lock_guard lock(mu_);
    return state_;
}

void Session::set_status(RunState& st, const std::string& id, SampleStatus to) {
    auto it = st.samples.find(id);
    if (it == st.samples.end()) throw NotFound("unknown sample '" + id + "'");
    if (!is_legal_transition(it->second.status, to, cfg_.review)) {
        throw ValidationError("illegal status transition for '" + id + "': " + to_string(it->second.status) +
                              " -> " + to_string(to));
    }
    it->second.status = to;
}

Json Session::status_json() const {
    std::lock_guard lock(mu_);
    Json pools = Json::object();
    for (const auto& [k, v] : state_.pool_counts()) pools[k] = v;
    Json metrics = Json::array();
    for (const auto& m : state_.metrics) metrics.push_back(metrics_to_json(m));
    return Json{{"iteration", state_.iteration},
                {"pools", pools},
                {"metrics", metrics},
                {"gate_passed", state_.gate_passed},
                {"terminated", state_.terminated},
                {"termination_reason", state_.termination_reason},
                {"journal_records", journal_.size()}};
}

std::vector<QueueItem> Session::queue(QueueKind kind) const {
    std::vector<QueueItem> items;
    std::lock_guard lock(mu_);
    for (const auto& [id, s] : state_.samples) {
        const bool want = kind == QueueKind::key_annotation
                              ? s.status == SampleStatus::key_pending_annotation
                              : cfg_.review && s.status == SampleStatus::labeled_self && !state_.reviewed.count(id);
        if (!want) continue;
        QueueItem q;
        q.sample_id = id;
        q.kind = kind;
        q.width = s.width;
        q.height = s.height;
        q.cluster_id = s.cluster_id.value_or(-1);
        if (auto l = store_.read(id)) {
            q.revision = l->revision;
            if (kind == QueueKind::pseudo_review) q.boxes = l->boxes;
        }
        items.push_back(std::move(q));
    }
    std::sort(items.begin(), items.end(), [](const QueueItem& a, const QueueItem& b) {
        if (a.cluster_id != b.cluster_id) return a.cluster_id < b.cluster_id;
        return a.sample_id < b.sample_id;
    });
    return items;
}

std::int64_t Session::annotate(const LabelSet& incoming) {
    std::lock_guard lock(mu_);
    auto it = state_.samples.find(incoming.sample_id);
    if (it == state_.samples.end()) throw NotFound("unknown sample '" + incoming.sample_id + "'");
    const auto status = it->second.status;
    if (status != SampleStatus::key_pending_annotation && status != SampleStatus::labeled_human) {
        throw RevisionConflict("sample '" + incoming.sample_id + "' is not awaiting annotation (" +
                               to_string(status) + ")");
    }
    LabelSet labels = incoming;
    if (labels.annotator.empty()) labels.annotator = "human";
    for (auto& b : labels.boxes) {
        b.source = BoxSource::human;
        b.confidence = 1.0;
    }
    const auto rev = store_.write_labels(labels);
    if (status == SampleStatus::key_pending_annotation) {
        set_status(state_, labels.sample_id, SampleStatus::labeled_human);
    }
    journal_.append(Json{{"event", "annotated"},
                         {"sample", labels.sample_id},
                         {"annotator", labels.annotator},
                         {"boxes", boxes_to_json(labels.boxes)}});
    cv_.notify_all();
    return rev;
}

std::optional<LabelSet> Session::labels(const std::string& id) const {
    {
        std::lock_guard lock(mu_);
        if (!state_.samples.count(id)) throw NotFound("unknown sample '" + id + "'");
    }
    return store_.read(id);
}

void Session::review(const std::string& id, ReviewAction action, const std::vector<BoundingBox>& boxes) {
    std::lock_guard pool_lock(pool_mu_);
    std::lock_guard lock(mu_);
    auto it = state_.samples.find(id);
    if (it == state_.samples.end()) throw NotFound("unknown sample '" + id + "'");
    if (!cfg_.review) throw ReviewDisabled("review mode is disabled");
    if (it->second.status != SampleStatus::labeled_self) {
        throw ReviewDisabled("sample '" + id + "' is not self-labeled");
    }
    Json rec{{"event", "review"}, {"sample", id}};
    switch (action) {
        case ReviewAction::approve:
            rec["action"] = "approve";
            state_.reviewed.insert(id);
            break;
        case ReviewAction::reject:
            rec["action"] = "reject";
            set_status(state_, id, SampleStatus::unlabeled);
            state_.reviewed.erase(id);
            break;
        case ReviewAction::edit: {
            LabelSet l;
            l.sample_id = id;
            l.annotator = "reviewer";
            l.boxes = boxes;
            for (auto& b : l.boxes) {
                b.source = BoxSource::human;
                b.confidence = 1.0;
            }
            l.revision = store_.revision(id);
            store_.write_labels(l);
            set_status(state_, id, SampleStatus::labeled_human);
            state_.reviewed.insert(id);
            rec["action"] = "edit";
            rec["boxes"] = boxes_to_json(l.boxes);
            break;
        }
    }
    journal_.append(std::move(rec));
    cv_.notify_all();
}

std::size_t Session::pending_keys() const {
    std::lock_guard lock(mu_);
    return state_.count(SampleStatus::key_pending_annotation);
}

bool Session::wait_for_gate(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout,
                        [&] { return state_.count(SampleStatus::key_pending_annotation) == 0; });
}

bool Session::wait_for_journal(std::size_t seen, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    return cv_.wait_for(lock, timeout, [&] { return journal_.size() > seen; });
}

}  // namespace gramsld
