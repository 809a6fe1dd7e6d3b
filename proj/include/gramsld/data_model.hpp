#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

namespace gramsld {

namespace fs = std::filesystem;
using Json = nlohmann::json;

enum class SampleStatus {
    unlabeled,
    key_pending_annotation,
    labeled_human,
    labeled_self,
    excluded,
};

std::string to_string(SampleStatus s);
SampleStatus parse_status(const std::string& s);

// Legal lifecycle edges. With review enabled, a self-labeled sample may also be
// rejected back to unlabeled or promoted to labeled_human by an edit.
bool is_legal_transition(SampleStatus from, SampleStatus to, bool review_enabled = false);

struct Sample {
    std::string id;
    fs::path image_path;
    int width = 0;
    int height = 0;
    SampleStatus status = SampleStatus::unlabeled;
    std::optional<int> cluster_id;
    std::optional<double> entropy;
};

enum class BoxSource { human, self, hidden_gt };

std::string to_string(BoxSource s);
BoxSource parse_source(const std::string& s);

struct BoundingBox {
    double x_min = 0, y_min = 0, x_max = 0, y_max = 0;
    std::string class_name;
    double confidence = 1.0;
    BoxSource source = BoxSource::human;

    double width() const { return x_max - x_min; }
    double height() const { return y_max - y_min; }
    double area() const { return width() * height(); }
    bool well_formed() const { return x_min < x_max && y_min < y_max; }
    bool within(int image_width, int image_height) const;

    bool operator==(const BoundingBox&) const = default;
};

// Clamps to [0,w]x[0,h]. Returns nullopt when clamping collapses the box.
std::optional<BoundingBox> clamp_to_image(BoundingBox b, int image_width, int image_height);

Json box_to_json(const BoundingBox& b);
BoundingBox box_from_json(const Json& j, BoxSource default_source = BoxSource::human);

struct LabelSet {
    std::string sample_id;
    std::vector<BoundingBox> boxes;
    std::int64_t revision = 0;
    std::string annotator;

    bool operator==(const LabelSet&) const = default;
};

Json labelset_to_json(const LabelSet& l);
LabelSet labelset_from_json(const Json& j);
LabelSet read_labelset(const fs::path& path);
void write_labelset_file(const fs::path& path, const LabelSet& l);

enum class ManifestPurpose { train, unlabeled, test };

std::string to_string(ManifestPurpose p);
ManifestPurpose parse_purpose(const std::string& s);

struct ManifestEntry {
    std::string id;
    fs::path image;
    std::optional<fs::path> labels;
};

struct Manifest {
    ManifestPurpose purpose = ManifestPurpose::train;
    std::vector<ManifestEntry> entries;

    const ManifestEntry* find(const std::string& id) const;
};

// JSON Lines: header {"purpose": ...} followed by one {"id","image","labels"} per line.
// Relative paths resolve against the manifest's directory.
Manifest load_manifest(const fs::path& path);
void save_manifest(const fs::path& path, const Manifest& m);

// One JSON file per sample under a directory. Single writer; concurrent readers.
class LabelStore {
public:
    explicit LabelStore(fs::path dir);

    const fs::path& dir() const { return dir_; }

    // Image bounds used to validate boxes on write.
    void register_sample(const std::string& id, int width, int height);
    bool knows(const std::string& id) const;
    std::pair<int, int> dimensions(const std::string& id) const;

    // labels.revision must equal the stored revision (0 when absent). Returns previous + 1.
    std::int64_t write_labels(const LabelSet& labels);

    std::optional<LabelSet> read(const std::string& id) const;
    std::int64_t revision(const std::string& id) const;
    fs::path path_for(const std::string& id) const;

private:
    fs::path dir_;
    mutable std::mutex mu_;
    std::map<std::string, std::pair<int, int>> dims_;
};

struct SizeCounts {
    std::int64_t small = 0;
    std::int64_t normal = 0;
    std::int64_t big = 0;

    std::int64_t total() const { return small + normal + big; }
};

enum class SizeClass { small, normal, big };

// small < 1% of image area, normal in [1%, 10%], big > 10%.
SizeClass classify_size(const BoundingBox& b, int image_width, int image_height);

struct SizeHistogram {
    std::map<std::string, SizeCounts> per_class;
    SizeCounts total;
};

SizeHistogram dataset_stats(const Manifest& manifest, const LabelStore& labels);

}  // namespace gramsld
