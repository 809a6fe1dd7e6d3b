#include "gramsld/self_labeling.hpp"

#include <algorithm>
#include <set>
#include <tuple>

#include "gramsld/error.hpp"
#include "gramsld/evaluation.hpp"

namespace gramsld {

void ScoringConfig::validate() const {
    if (!(delta_acc > 0.0 && delta_acc < 1.0)) throw ValidationError("delta_acc must lie in (0,1)");
    if (!(delta_iou > 0.0 && delta_iou < 1.0)) throw ValidationError("delta_iou must lie in (0,1)");
    if (!(beta > 0.0)) throw ValidationError("beta must be > 0");
    if (!(termination_fraction > 0.0 && termination_fraction < 1.0)) {
        throw ValidationError("termination_fraction must lie in (0,1)");
    }
}

std::vector<MatchedPair> match_pairs(const PredictionPair& pair) {
    struct Candidate {
        double iou;
        std::size_t i, j;
    };
    std::set<std::string> classes;
    for (const auto& d : pair.a1) classes.insert(d.class_name);

    std::vector<MatchedPair> out;
    for (const auto& cls : classes) {
        std::vector<Candidate> cands;
        for (std::size_t i = 0; i < pair.a1.size(); ++i) {
            if (pair.a1[i].class_name != cls) continue;
            for (std::size_t j = 0; j < pair.a2.size(); ++j) {
                if (pair.a2[j].class_name != cls) continue;
                const double v = iou(pair.a1[i], pair.a2[j]);
                if (v > 0.0) cands.push_back({v, i, j});
            }
        }
        std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
            if (a.iou != b.iou) return a.iou > b.iou;
            return std::tie(a.i, a.j) < std::tie(b.i, b.j);
        });
        std::vector<char> used1(pair.a1.size(), 0), used2(pair.a2.size(), 0);
        for (const auto& c : cands) {
            if (used1[c.i] || used2[c.j]) continue;
            used1[c.i] = used2[c.j] = 1;
            out.push_back({cls, pair.a1[c.i], pair.a2[c.j], c.iou});
        }
    }
    return out;
}

bool is_valid_pair(const MatchedPair& m, const ScoringConfig& cfg) {
    return m.box_a1.confidence > cfg.delta_acc && m.box_a2.confidence > cfg.delta_acc &&
           m.iou > cfg.delta_iou;
}

int score(const PredictionPair& pair, const ScoringConfig& cfg) {
    int s = 0;
    for (const auto& m : match_pairs(pair)) s += is_valid_pair(m, cfg) ? 1 : 0;
    return s;
}

double cluster_threshold(std::span<const int> scores, double beta) {
    if (scores.empty()) throw ValidationError("cluster_threshold: empty cluster");
    double sum = 0.0;
    for (int s : scores) sum += s;
    return beta / static_cast<double>(scores.size()) * sum;
}

BoundingBox committed_box(const MatchedPair& m) {
    BoundingBox b = m.box_a2.confidence > m.box_a1.confidence ? m.box_a2 : m.box_a1;
    b.source = BoxSource::self;
    return b;
}

std::vector<BoundingBox> committed_boxes(const PredictionPair& pair, const ScoringConfig& cfg) {
    std::vector<BoundingBox> out;
    for (const auto& m : match_pairs(pair)) {
        if (is_valid_pair(m, cfg)) out.push_back(committed_box(m));
    }
    return out;
}

PoolDelta update_pool(std::map<std::string, Sample>& samples,
                      const std::vector<ScoredSample>& scored, const ScoringConfig& cfg) {
    std::map<int, std::vector<const ScoredSample*>> by_cluster;
    std::set<std::string> seen;
    for (const auto& s : scored) {
        auto it = samples.find(s.prediction.sample_id);
        if (it == samples.end()) {
            throw ValidationError("scored sample '" + s.prediction.sample_id + "' is unknown");
        }
        const auto& sample = it->second;
        if (sample.status != SampleStatus::unlabeled) {
            throw ValidationError("scored sample '" + sample.id + "' is not unlabeled");
        }
        if (!sample.cluster_id) throw ValidationError("sample '" + sample.id + "' has no cluster");
        if (!seen.insert(sample.id).second) {
            throw ValidationError("sample '" + sample.id + "' scored twice");
        }
        by_cluster[*sample.cluster_id].push_back(&s);
    }
    for (const auto& [id, sample] : samples) {
        if (sample.status == SampleStatus::unlabeled && !seen.count(id)) {
            throw ValidationError("unlabeled sample '" + id + "' was not scored");
        }
    }

    PoolDelta delta;
    for (const auto& [cluster, members] : by_cluster) {
        std::vector<int> scores;
        for (const auto* s : members) scores.push_back(s->score);
        ClusterDelta cd;
        cd.sigma = cluster_threshold(scores, cfg.beta);
        for (const auto* s : members) {
            const auto& id = s->prediction.sample_id;
            delta.scores[id] = s->score;
            if (s->score > cd.sigma) {
                delta.added.push_back(id);
                delta.labels[id] = committed_boxes(s->prediction, cfg);
                ++cd.added;
            } else {
                ++cd.remaining;
            }
        }
        delta.clusters[cluster] = cd;
    }
    std::sort(delta.added.begin(), delta.added.end());
    for (const auto& id : delta.added) samples.at(id).status = SampleStatus::labeled_self;
    return delta;
}

bool should_terminate(std::size_t initial_unlabeled, std::size_t remaining,
                      std::optional<std::size_t> last_added, const ScoringConfig& cfg) {
    if (last_added && *last_added == 0) return true;
    return static_cast<double>(remaining) <
           cfg.termination_fraction * static_cast<double>(initial_unlabeled);
}

}  // namespace gramsld
