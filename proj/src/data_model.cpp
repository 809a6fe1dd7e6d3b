#include "gramsld/data_model.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "gramsld/error.hpp"

namespace gramsld {

std::string to_string(SampleStatus s) {
    switch (s) {
        case SampleStatus::unlabeled: return "unlabeled";
        case SampleStatus::key_pending_annotation: return "key_pending_annotation";
        case SampleStatus::labeled_human: return "labeled_human";
        case SampleStatus::labeled_self: return "labeled_self";
        case SampleStatus::excluded: return "excluded";
    }
    return "unknown";
}

SampleStatus parse_status(const std::string& s) {
    for (auto st : {SampleStatus::unlabeled, SampleStatus::key_pending_annotation,
                    SampleStatus::labeled_human, SampleStatus::labeled_self,
                    SampleStatus::excluded}) {
        if (to_string(st) == s) return st;
    }
    throw ValidationError("unknown sample status '" + s + "'");
}

bool is_legal_transition(SampleStatus from, SampleStatus to, bool review_enabled) {
    using S = SampleStatus;
    if (from == S::unlabeled) return to == S::key_pending_annotation || to == S::labeled_self;
    if (from == S::key_pending_annotation) return to == S::labeled_human;
    if (review_enabled && from == S::labeled_self) {
        return to == S::unlabeled || to == S::labeled_human;
    }
    return false;
}

std::string to_string(BoxSource s) {
    switch (s) {
        case BoxSource::human: return "human";
        case BoxSource::self: return "self";
        case BoxSource::hidden_gt: return "hidden_gt";
    }
    return "unknown";
}

BoxSource parse_source(const std::string& s) {
    if (s == "human") return BoxSource::human;
    if (s == "self") return BoxSource::self;
    if (s == "hidden_gt") return BoxSource::hidden_gt;
    throw ValidationError("unknown box source '" + s + "'");
}

bool BoundingBox::within(int image_width, int image_height) const {
    return x_min >= 0 && y_min >= 0 && x_max <= image_width && y_max <= image_height;
}

std::optional<BoundingBox> clamp_to_image(BoundingBox b, int image_width, int image_height) {
    b.x_min = std::clamp(b.x_min, 0.0, static_cast<double>(image_width));
    b.x_max = std::clamp(b.x_max, 0.0, static_cast<double>(image_width));
    b.y_min = std::clamp(b.y_min, 0.0, static_cast<double>(image_height));
    b.y_max = std::clamp(b.y_max, 0.0, static_cast<double>(image_height));
    if (!b.well_formed()) return std::nullopt;
    return b;
}

Json box_to_json(const BoundingBox& b) {
    return Json{{"class", b.class_name},
                {"bbox", {b.x_min, b.y_min, b.x_max, b.y_max}},
                {"confidence", b.confidence},
                {"source", to_string(b.source)}};
}

BoundingBox box_from_json(const Json& j, BoxSource default_source) {
    if (!j.is_object()) throw ValidationError("box must be a JSON object");
    const auto& bb = j.at("bbox");
    if (!bb.is_array() || bb.size() != 4) throw ValidationError("bbox must have 4 numbers");
    BoundingBox b;
    b.class_name = j.at("class").get<std::string>();
    b.x_min = bb[0].get<double>();
    b.y_min = bb[1].get<double>();
    b.x_max = bb[2].get<double>();
    b.y_max = bb[3].get<double>();
    b.confidence = j.value("confidence", 1.0);
    b.source = j.contains("source") ? parse_source(j["source"].get<std::string>()) : default_source;
    if (b.confidence < 0.0 || b.confidence > 1.0) {
        throw ValidationError("confidence out of [0,1]");
    }
    return b;
}

Json labelset_to_json(const LabelSet& l) {
    Json boxes = Json::array();
    for (const auto& b : l.boxes) boxes.push_back(box_to_json(b));
    return Json{{"sample_id", l.sample_id},
                {"revision", l.revision},
                {"annotator", l.annotator},
                {"boxes", boxes}};
}

LabelSet labelset_from_json(const Json& j) {
    try {
        LabelSet l;
        l.sample_id = j.at("sample_id").get<std::string>();
        l.revision = j.value("revision", std::int64_t{0});
        l.annotator = j.value("annotator", std::string{});
        for (const auto& b : j.at("boxes")) l.boxes.push_back(box_from_json(b));
        return l;
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("malformed label set: ") + e.what());
    }
}

LabelSet read_labelset(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open label file " + path.string());
    Json j;
    try {
        in >> j;
    } catch (const Json::exception& e) {
        throw ValidationError("malformed label file " + path.string() + ": " + e.what());
    }
    return labelset_from_json(j);
}

void write_labelset_file(const fs::path& path, const LabelSet& l) {
    fs::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << labelset_to_json(l).dump(2) << '\n';
        if (!out) throw IoError("short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string to_string(ManifestPurpose p) {
    switch (p) {
        case ManifestPurpose::train: return "train";
        case ManifestPurpose::unlabeled: return "unlabeled";
        case ManifestPurpose::test: return "test";
    }
    return "unknown";
}

ManifestPurpose parse_purpose(const std::string& s) {
    if (s == "train") return ManifestPurpose::train;
    if (s == "unlabeled") return ManifestPurpose::unlabeled;
    if (s == "test") return ManifestPurpose::test;
    throw ValidationError("unknown manifest purpose '" + s + "'");
}

const ManifestEntry* Manifest::find(const std::string& id) const {
    for (const auto& e : entries) {
        if (e.id == id) return &e;
    }
    return nullptr;
}

Manifest load_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open manifest " + path.string());
    const auto base = path.parent_path();
    auto resolve = [&](const std::string& p) {
        fs::path q(p);
        return q.is_absolute() ? q : base / q;
    };

    Manifest m;
    std::set<std::string> seen;
    bool have_header = false;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto where = path.string() + ":" + std::to_string(line_no);
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception& e) {
            throw ValidationError("parse error at " + where + ": " + e.what());
        }
        if (!j.is_object()) throw ValidationError("parse error at " + where + ": not an object");
        if (!have_header) {
            if (!j.contains("purpose") || !j["purpose"].is_string()) {
                throw ValidationError("parse error at " + where + ": missing purpose header");
            }
            m.purpose = parse_purpose(j["purpose"].get<std::string>());
            have_header = true;
            continue;
        }
        if (!j.contains("id") || !j["id"].is_string() || !j.contains("image") ||
            !j["image"].is_string()) {
            throw ValidationError("parse error at " + where + ": record needs string id and image");
        }
        ManifestEntry e;
        e.id = j["id"].get<std::string>();
        e.image = resolve(j["image"].get<std::string>());
        if (j.contains("labels") && !j["labels"].is_null()) {
            if (!j["labels"].is_string()) {
                throw ValidationError("parse error at " + where + ": labels must be path or null");
            }
            e.labels = resolve(j["labels"].get<std::string>());
        }
        if (!seen.insert(e.id).second) {
            throw ValidationError("duplicate sample id '" + e.id + "' at " + where);
        }
        if (!fs::exists(e.image)) {
            throw ValidationError("missing image file " + e.image.string() + " at " + where);
        }
        if (e.labels && !fs::exists(*e.labels)) {
            throw ValidationError("missing label file " + e.labels->string() + " at " + where);
        }
        m.entries.push_back(std::move(e));
    }
    return m;
}

void save_manifest(const fs::path& path, const Manifest& m) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + path.string());
    const auto base = fs::absolute(path).parent_path().lexically_normal();
    auto rel = [&](const fs::path& p) {
        const auto r = fs::absolute(p).lexically_normal().lexically_relative(base);
        return r.empty() ? fs::absolute(p).generic_string() : r.generic_string();
    };
    out << Json{{"purpose", to_string(m.purpose)}}.dump() << '\n';
    for (const auto& e : m.entries) {
        Json j{{"id", e.id}, {"image", rel(e.image)}, {"labels", nullptr}};
        if (e.labels) j["labels"] = rel(*e.labels);
        out << j.dump() << '\n';
    }
}

LabelStore::LabelStore(fs::path dir) : dir_(std::move(dir)) { fs::create_directories(dir_); }

void LabelStore::register_sample(const std::string& id, int width, int height) {
    if (width <= 0 || height <= 0) {
        throw ValidationError("sample '" + id + "' has non-positive dimensions");
    }
    std::lock_guard lock(mu_);
    dims_[id] = {width, height};
}

bool LabelStore::knows(const std::string& id) const {
    std::lock_guard lock(mu_);
    return dims_.count(id) > 0;
}

std::pair<int, int> LabelStore::dimensions(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto it = dims_.find(id);
    if (it == dims_.end()) throw NotFound("unknown sample '" + id + "'");
    return it->second;
}

fs::path LabelStore::path_for(const std::string& id) const { return dir_ / (id + ".json"); }

std::optional<LabelSet> LabelStore::read(const std::string& id) const {
    std::lock_guard lock(mu_);
    auto p = path_for(id);
    if (!fs::exists(p)) return std::nullopt;
    return read_labelset(p);
}

std::int64_t LabelStore::revision(const std::string& id) const {
    auto l = read(id);
    return l ? l->revision : 0;
}

std::int64_t LabelStore::write_labels(const LabelSet& labels) {
    std::lock_guard lock(mu_);
    auto it = dims_.find(labels.sample_id);
    if (it == dims_.end()) throw NotFound("unknown sample '" + labels.sample_id + "'");
    const auto [w, h] = it->second;
    for (std::size_t i = 0; i < labels.boxes.size(); ++i) {
        const auto& b = labels.boxes[i];
        if (!b.well_formed()) {
            throw ValidationError("box " + std::to_string(i) + " is degenerate (min >= max)");
        }
        if (!b.within(w, h)) {
            throw ValidationError("box " + std::to_string(i) + " lies outside the image bounds");
        }
        if (b.confidence < 0.0 || b.confidence > 1.0) {
            throw ValidationError("box " + std::to_string(i) + " confidence outside [0,1]");
        }
    }
    auto p = path_for(labels.sample_id);
    std::int64_t current = fs::exists(p) ? read_labelset(p).revision : 0;
    if (labels.revision != current) {
        throw RevisionConflict("revision conflict on '" + labels.sample_id + "': expected " +
                               std::to_string(current) + ", got " +
                               std::to_string(labels.revision));
    }
    LabelSet stored = labels;
    stored.revision = current + 1;
    write_labelset_file(p, stored);
    return stored.revision;
}

SizeClass classify_size(const BoundingBox& b, int image_width, int image_height) {
    const double frac = b.area() / (static_cast<double>(image_width) * image_height);
    if (frac < 0.01) return SizeClass::small;
    if (frac > 0.10) return SizeClass::big;
    return SizeClass::normal;
}

SizeHistogram dataset_stats(const Manifest& manifest, const LabelStore& labels) {
    SizeHistogram hist;
    for (const auto& e : manifest.entries) {
        auto l = labels.read(e.id);
        if (!l) throw ValidationError("sample '" + e.id + "' is unlabeled");
        const auto [w, h] = labels.dimensions(e.id);
        for (const auto& b : l->boxes) {
            auto& c = hist.per_class[b.class_name];
            switch (classify_size(b, w, h)) {
                case SizeClass::small: ++c.small; ++hist.total.small; break;
                case SizeClass::normal: ++c.normal; ++hist.total.normal; break;
                case SizeClass::big: ++c.big; ++hist.total.big; break;
            }
        }
    }
    return hist;
}

}  // namespace gramsld
