#include "gramsld/synthetic_detector.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "gramsld/error.hpp"
#include "gramsld/evaluation.hpp"

namespace gramsld {

GroundTruth load_ground_truth(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open ground truth " + path.string());
    GroundTruth gt;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            const auto j = Json::parse(line);
            TruthRecord r;
            r.id = j.at("id").get<std::string>();
            r.width = j.at("width").get<int>();
            r.height = j.at("height").get<int>();
            for (const auto& b : j.at("boxes")) r.boxes.push_back(box_from_json(b, BoxSource::hidden_gt));
            gt[r.id] = std::move(r);
        } catch (const Json::exception& e) {
            throw ValidationError("ground truth line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return gt;
}

void save_ground_truth(const std::filesystem::path& path, const GroundTruth& gt) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write ground truth " + path.string());
    for (const auto& [id, r] : gt) {
        Json boxes = Json::array();
        for (const auto& b : r.boxes) boxes.push_back(box_to_json(b));
        out << Json{{"id", id}, {"width", r.width}, {"height", r.height}, {"boxes", boxes}}.dump() << '\n';
    }
}

void SyntheticDetectorConfig::validate() const {
    if (!(s_min >= 0.0 && s_max <= 1.0 && s_min <= s_max)) {
        throw ValidationError("synthetic detector needs 0 <= s_min <= s_max <= 1");
    }
    if (!(rho >= 0.0 && rho <= 1.0)) throw ValidationError("rho must lie in [0,1]");
    if (!(tau > 0.0)) throw ValidationError("tau must be > 0");
    if (!(fp_rate >= 0.0)) throw ValidationError("fp_rate must be >= 0");
    if (!(conf_spread >= 0.0)) throw ValidationError("conf_spread must be >= 0");
    if (!(confusion >= 0.0)) throw ValidationError("confusion must be >= 0");
    if (!(miss_penalty >= 0.0)) throw ValidationError("miss_penalty must be >= 0");
    if (!(false_penalty >= 0.0)) throw ValidationError("false_penalty must be >= 0");
    if (feature_rows < 1 || feature_cols < 1 || feature_channels < 1) {
        throw ValidationError("feature dims must be >= 1");
    }
}

Json synthetic_config_to_json(const SyntheticDetectorConfig& c) {
    return Json{{"s_min", c.s_min},           {"s_max", c.s_max},
                {"tau", c.tau},               {"rho", c.rho},
                {"fp_rate", c.fp_rate},       {"seed", c.seed},
                {"jitter", c.jitter},         {"fp_conf_min", c.fp_conf_min},
                {"miss_penalty", c.miss_penalty}, {"conf_spread", c.conf_spread},
                {"confusion", c.confusion},   {"false_penalty", c.false_penalty},
                {"feature_rows", c.feature_rows}, {"feature_cols", c.feature_cols},
                {"feature_channels", c.feature_channels}};
}

SyntheticDetectorConfig synthetic_config_from_json(const Json& j) {
    SyntheticDetectorConfig c;
    c.s_min = j.value("s_min", c.s_min);
    c.s_max = j.value("s_max", c.s_max);
    c.tau = j.value("tau", c.tau);
    c.rho = j.value("rho", c.rho);
    c.fp_rate = j.value("fp_rate", c.fp_rate);
    c.seed = j.value("seed", c.seed);
    c.jitter = j.value("jitter", c.jitter);
    c.fp_conf_min = j.value("fp_conf_min", c.fp_conf_min);
    c.miss_penalty = j.value("miss_penalty", c.miss_penalty);
    c.conf_spread = j.value("conf_spread", c.conf_spread);
    c.confusion = j.value("confusion", c.confusion);
    c.false_penalty = j.value("false_penalty", c.false_penalty);
    c.feature_rows = j.value("feature_rows", c.feature_rows);
    c.feature_cols = j.value("feature_cols", c.feature_cols);
    c.feature_channels = j.value("feature_channels", c.feature_channels);
    c.validate();
    return c;
}

double label_quality(const std::vector<BoundingBox>& labels, const std::vector<BoundingBox>& truth,
                     double miss_penalty, double false_penalty) {
    if (labels.empty() && truth.empty()) return 1.0;
    if (truth.empty()) return -false_penalty;
    if (labels.empty()) return -miss_penalty;
    std::vector<char> used(truth.size(), 0);
    int hits = 0;
    for (const auto& l : labels) {
        double best = 0.0;
        std::size_t best_k = truth.size();
        for (std::size_t k = 0; k < truth.size(); ++k) {
            if (used[k] || truth[k].class_name != l.class_name) continue;
            const double v = iou(l, truth[k]);
            if (v > best) {
                best = v;
                best_k = k;
            }
        }
        if (best_k < truth.size() && best >= 0.5) {
            used[best_k] = 1;
            ++hits;
        }
    }
    const double precision = static_cast<double>(hits) / labels.size();
    const double recall = static_cast<double>(hits) / truth.size();
    return precision * recall - miss_penalty * (1.0 - recall) - false_penalty * (1.0 - precision);
}

namespace {

std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_id(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

// Independent stream per (seed, sample, object, stream tag); tag 0 is the shared stream.
class Stream {
public:
    Stream(std::uint64_t seed, const std::string& id, std::uint64_t object, std::uint64_t tag)
        : gen_(mix(mix(mix(seed) ^ hash_id(id)) ^ (object * 0x100000001b3ULL)) ^ mix(tag + 17)) {}

    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    double symmetric() { return 2.0 * uniform() - 1.0; }

private:
    std::mt19937_64 gen_;
};

constexpr int kFpSlots = 3;
constexpr std::uint64_t kFpObjectBase = 1u << 20;
constexpr std::uint64_t kFeatureObject = 1u << 21;

}  // namespace

SyntheticDetector::SyntheticDetector(SyntheticDetectorConfig cfg, std::shared_ptr<const GroundTruth> world)
    : cfg_(cfg), world_(std::move(world)), skill_(cfg.s_min) {
    cfg_.validate();
    if (!world_) throw ValidationError("synthetic detector needs a ground-truth world");
    std::set<std::string> classes;
    for (const auto& [id, r] : *world_) {
        for (const auto& b : r.boxes) classes.insert(b.class_name);
    }
    classes_.assign(classes.begin(), classes.end());
}

double SyntheticDetector::skill_for(const SyntheticDetectorConfig& cfg, double n_labeled) {
    return cfg.s_min + (cfg.s_max - cfg.s_min) * (1.0 - std::exp(-std::max(0.0, n_labeled) / cfg.tau));
}

const TruthRecord& SyntheticDetector::truth(const std::string& id) const {
    auto it = world_->find(id);
    if (it == world_->end()) throw PluginFailure("synthetic detector: missing sample '" + id + "'");
    return it->second;
}

double SyntheticDetector::effective_labeled(const Manifest& train_set) const {
    double n = 0.0;
    for (const auto& e : train_set.entries) {
        if (!e.labels) continue;
        const auto labels = read_labelset(*e.labels);
        n += label_quality(labels.boxes, truth(e.id).boxes, cfg_.miss_penalty, cfg_.false_penalty);
    }
    return n;
}

TrainingReport SyntheticDetector::train(const Manifest& train_set, const std::filesystem::path&) {
    skill_ = skill_for(cfg_, effective_labeled(train_set));
    std::vector<std::string> ids;
    for (const auto& e : train_set.entries) {
        if (e.labels) ids.push_back(e.id);
    }
    std::sort(ids.begin(), ids.end());
    round_ = ids.size();
    for (const auto& id : ids) round_ = mix(round_ ^ hash_id(id));
    TrainingReport r;
    r.loss_d1 = -std::log(std::max(skill_, 1e-12));
    r.loss_d2 = r.loss_d1;
    r.epochs = 1;
    std::vector<RoiPair> rois;
    for (const auto& e : train_set.entries) {
        if (rois.size() >= 8) break;
        auto f = features_for(e.id);
        rois.push_back({std::move(f.d1), std::move(f.d2)});
    }
    if (!rois.empty()) r.gram_loss = mean_gram_loss(rois).value;
    return r;
}

PredictionPair SyntheticDetector::predict_sample(const std::string& id) const {
    const auto& rec = truth(id);
    PredictionPair out;
    out.sample_id = id;
    const double s = skill_;
    const double spread = 1.0 - s;
    const std::uint64_t seed = round_ ? cfg_.seed ^ round_ : cfg_.seed;

    for (int head = 1; head <= 2; ++head) {
        auto& dets = head == 1 ? out.a1 : out.a2;
        for (std::size_t o = 0; o < rec.boxes.size(); ++o) {
            Stream own(seed, id, o, static_cast<std::uint64_t>(head));
            Stream shared(seed, id, o, 0);
            Stream& src = own.uniform() < cfg_.rho ? shared : own;
            const double u_detect = src.uniform();
            const double jx0 = src.symmetric(), jy0 = src.symmetric();
            const double jx1 = src.symmetric(), jy1 = src.symmetric();
            const double u_conf = src.uniform();
            const double u_confuse = src.uniform();
            const double u_other = src.uniform();
            if (!(u_detect < s)) continue;
            const auto& g = rec.boxes[o];
            const double ax = spread * cfg_.jitter * g.width();
            const double ay = spread * cfg_.jitter * g.height();
            Detection d = g;
            d.x_min += jx0 * ax;
            d.y_min += jy0 * ay;
            d.x_max += jx1 * ax;
            d.y_max += jy1 * ay;
            d.confidence = std::clamp(1.0 - spread * cfg_.conf_spread * u_conf, 0.0, 1.0);
            if (u_confuse < std::min(1.0, cfg_.confusion * spread) && classes_.size() > 1) {
                // Any class but the true one, chosen uniformly.
                auto k = std::min(classes_.size() - 2, static_cast<std::size_t>(u_other * (classes_.size() - 1)));
                if (classes_[k] >= g.class_name) ++k;
                d.class_name = classes_[k];
            }
            d.source = BoxSource::self;
            if (auto c = clamp_to_image(d, rec.width, rec.height)) dets.push_back(*c);
        }
        const double p_fp = std::min(1.0, cfg_.fp_rate * spread / kFpSlots);
        for (int k = 0; k < kFpSlots; ++k) {
            Stream own(seed, id, kFpObjectBase + k, static_cast<std::uint64_t>(head));
            Stream shared(seed, id, kFpObjectBase + k, 0);
            Stream& src = own.uniform() < cfg_.rho ? shared : own;
            const double u_present = src.uniform();
            const double u_class = src.uniform();
            const double cx = src.uniform(), cy = src.uniform();
            const double bw = 0.05 + 0.20 * src.uniform(), bh = 0.05 + 0.20 * src.uniform();
            const double u_conf = src.uniform();
            if (!(u_present < p_fp) || classes_.empty()) continue;
            Detection d;
            d.class_name = classes_[std::min(classes_.size() - 1,
                                             static_cast<std::size_t>(u_class * classes_.size()))];
            d.x_min = (cx - bw / 2) * rec.width;
            d.x_max = (cx + bw / 2) * rec.width;
            d.y_min = (cy - bh / 2) * rec.height;
            d.y_max = (cy + bh / 2) * rec.height;
            d.confidence = cfg_.fp_conf_min + (1.0 - cfg_.fp_conf_min) * u_conf;
            d.source = BoxSource::self;
            if (auto c = clamp_to_image(d, rec.width, rec.height)) dets.push_back(*c);
        }
    }
    return out;
}

std::vector<PredictionPair> SyntheticDetector::predict(const Manifest& samples, const std::filesystem::path&) {
    std::vector<PredictionPair> out;
    out.reserve(samples.entries.size());
    for (const auto& e : samples.entries) out.push_back(predict_sample(e.id));
    return out;
}

SampleFeatures SyntheticDetector::features_for(const std::string& id) const {
    const int m = cfg_.feature_rows, n = cfg_.feature_cols, c = cfg_.feature_channels;
    auto d1 = FeatureMap::convolutional(m, n, c);
    auto d2 = FeatureMap::convolutional(m, n, c);
    Stream shared(cfg_.seed, id, kFeatureObject, 0);
    Stream own1(cfg_.seed, id, kFeatureObject, 1);
    Stream own2(cfg_.seed, id, kFeatureObject, 2);
    auto v1 = d1.data();
    auto v2 = d2.data();
    for (std::size_t k = 0; k < v1.size(); ++k) {
        const double s = shared.symmetric();
        v1[k] = cfg_.rho * s + (1.0 - cfg_.rho) * own1.symmetric();
        v2[k] = cfg_.rho * s + (1.0 - cfg_.rho) * own2.symmetric();
    }
    return {id, std::move(d1), std::move(d2)};
}

std::vector<SampleFeatures> SyntheticDetector::report_features(const Manifest& samples,
                                                               const std::filesystem::path&) {
    std::vector<SampleFeatures> out;
    for (const auto& e : samples.entries) out.push_back(features_for(e.id));
    return out;
}

}  // namespace gramsld
