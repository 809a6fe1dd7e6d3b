#include "gramsld/evaluation.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "gramsld/error.hpp"

namespace gramsld {

double iou(const BoundingBox& a, const BoundingBox& b) {
    if (!a.well_formed() || !b.well_formed()) throw ValidationError("iou: degenerate box");
    const double iw = std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min);
    const double ih = std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min);
    if (iw <= 0.0 || ih <= 0.0) return 0.0;
    const double inter = iw * ih;
    return inter / (a.area() + b.area() - inter);
}

std::string to_string(Head h) { return h == Head::d1 ? "d1" : "d2"; }

double average_precision(const BoxesBySample& predictions, const BoxesBySample& ground_truth,
                         const std::string& class_name, double iou_thresh, ClassCounts* counts) {
    struct Ranked {
        double confidence;
        const std::string* sample;
        std::size_t order;
        const BoundingBox* box;
    };

    std::map<std::string, std::vector<const BoundingBox*>> gt;
    int npos = 0;
    for (const auto& [id, boxes] : ground_truth) {
        for (const auto& b : boxes) {
            if (b.class_name != class_name) continue;
            gt[id].push_back(&b);
            ++npos;
        }
    }
    if (npos == 0) throw ValidationError("unknown class '" + class_name + "' (no ground truth)");

    std::vector<Ranked> ranked;
    for (const auto& [id, boxes] : predictions) {
        for (std::size_t k = 0; k < boxes.size(); ++k) {
            if (boxes[k].class_name == class_name) ranked.push_back({boxes[k].confidence, &id, k, &boxes[k]});
        }
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return std::tie(*a.sample, a.order) < std::tie(*b.sample, b.order);
    });

    std::map<std::string, std::vector<char>> used;
    for (const auto& [id, boxes] : gt) used[id].assign(boxes.size(), 0);

    std::vector<double> precision, recall;
    int tp = 0, fp = 0;
    for (std::size_t r = 0; r < ranked.size(); ++r) {
        const auto& p = ranked[r];
        bool hit = false;
        auto it = gt.find(*p.sample);
        if (it != gt.end()) {
            double best = -1.0;
            std::size_t best_k = 0;
            for (std::size_t k = 0; k < it->second.size(); ++k) {
                const double v = iou(*p.box, *it->second[k]);
                if (v > best) {
                    best = v;
                    best_k = k;
                }
            }
            auto& u = used[*p.sample];
            if (best >= iou_thresh && !u[best_k]) {
                u[best_k] = 1;
                hit = true;
            }
        }
        hit ? ++tp : ++fp;
        precision.push_back(static_cast<double>(tp) / static_cast<double>(r + 1));
        recall.push_back(static_cast<double>(tp) / npos);
    }
    if (counts) *counts = {tp, fp, npos - tp};

    // Monotone precision envelope, then area under the stepwise PR curve.
    std::vector<double> mrec{0.0}, mpre{0.0};
    mrec.insert(mrec.end(), recall.begin(), recall.end());
    mpre.insert(mpre.end(), precision.begin(), precision.end());
    mrec.push_back(1.0);
    mpre.push_back(0.0);
    for (std::size_t i = mpre.size() - 1; i > 0; --i) mpre[i - 1] = std::max(mpre[i - 1], mpre[i]);
    double ap = 0.0;
    for (std::size_t i = 1; i < mrec.size(); ++i) {
        if (mrec[i] != mrec[i - 1]) ap += (mrec[i] - mrec[i - 1]) * mpre[i];
    }
    return ap;
}

EvalResult evaluate(const BoxesBySample& predictions, const BoxesBySample& ground_truth,
                    double iou_thresh) {
    for (const auto& [id, boxes] : predictions) {
        if (!ground_truth.count(id)) throw ValidationError("prediction for sample '" + id + "' not in test manifest");
    }
    for (const auto& [id, boxes] : ground_truth) {
        if (!predictions.count(id)) throw ValidationError("test sample '" + id + "' has no prediction entry");
    }
    std::set<std::string> classes;
    for (const auto& [id, boxes] : ground_truth) {
        for (const auto& b : boxes) classes.insert(b.class_name);
    }
    EvalResult r;
    for (const auto& c : classes) {
        ClassCounts cc;
        r.per_class[c] = average_precision(predictions, ground_truth, c, iou_thresh, &cc);
        r.counts.tp += cc.tp;
        r.counts.fp += cc.fp;
        r.counts.fn += cc.fn;
    }
    if (!r.per_class.empty()) {
        double s = 0.0;
        for (const auto& [c, ap] : r.per_class) s += ap;
        r.map = s / static_cast<double>(r.per_class.size());
    }
    return r;
}

HeadEvaluation evaluate_heads(const std::vector<PredictionPair>& predictions,
                              const BoxesBySample& ground_truth, double iou_thresh) {
    BoxesBySample p1, p2;
    for (const auto& p : predictions) {
        p1[p.sample_id] = p.a1;
        p2[p.sample_id] = p.a2;
    }
    HeadEvaluation out{evaluate(p1, ground_truth, iou_thresh), evaluate(p2, ground_truth, iou_thresh)};
    out.d1.head = Head::d1;
    out.d2.head = Head::d2;
    return out;
}

EvalDiff diff(const EvalResult& a, const EvalResult& b) {
    EvalDiff d;
    d.map = a.map - b.map;
    for (const auto& [c, ap] : a.per_class) {
        auto it = b.per_class.find(c);
        d.per_class[c] = ap - (it == b.per_class.end() ? 0.0 : it->second);
    }
    return d;
}

Json eval_to_json(const EvalResult& r) {
    Json per_class = Json::object();
    for (const auto& [c, ap] : r.per_class) per_class[c] = ap;
    return Json{{"per_class", per_class}, {"map", r.map}, {"head", to_string(r.head)}};
}

EvalResult eval_from_json(const Json& j) {
    EvalResult r;
    try {
        for (const auto& [c, ap] : j.at("per_class").items()) r.per_class[c] = ap.get<double>();
        r.map = j.at("map").get<double>();
        r.head = j.value("head", std::string("d1")) == "d2" ? Head::d2 : Head::d1;
        r.counts.tp = j.value("tp", 0);
        r.counts.fp = j.value("fp", 0);
        r.counts.fn = j.value("fn", 0);
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("malformed eval record: ") + e.what());
    }
    return r;
}

}  // namespace gramsld
