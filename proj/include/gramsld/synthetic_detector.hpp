#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "gramsld/detector.hpp"

namespace gramsld {

// Hidden ground truth of a synthetic world, one JSON Lines record per sample:
// {"id", "width", "height", "boxes": [...]}.
struct TruthRecord {
    std::string id;
    int width = 0;
    int height = 0;
    std::vector<BoundingBox> boxes;
};

using GroundTruth = std::map<std::string, TruthRecord>;

GroundTruth load_ground_truth(const std::filesystem::path& path);
void save_ground_truth(const std::filesystem::path& path, const GroundTruth& gt);

struct SyntheticDetectorConfig {
    double s_min = 0.80;
    double s_max = 0.98;
    double tau = 160.0;     // labeled-sample scale of the skill curve
    double rho = 0.3;       // probability that a head draws an object from the shared stream
    double fp_rate = 2.0;   // false positives per image at zero skill
    std::uint64_t seed = 0;
    double jitter = 0.10;   // max coordinate offset at zero skill, fraction of box extent
    double fp_conf_min = 0.3;
    double conf_spread = 0.8;   // true-positive confidence lies in [1 - (1-s)*conf_spread, 1]
    double confusion = 1.0;     // wrong-class probability per detection at zero skill
    double miss_penalty = 0.5;  // weight of unlabeled objects in a training label set
    double false_penalty = 1.0; // weight of wrong labels in a training label set
    int feature_rows = 4;
    int feature_cols = 4;
    int feature_channels = 8;

    void validate() const;
};

Json synthetic_config_to_json(const SyntheticDetectorConfig& c);
SyntheticDetectorConfig synthetic_config_from_json(const Json& j);

// Precision times recall of `labels` against `truth` at IoU 0.5, minus
// miss_penalty * (1 - recall) and false_penalty * (1 - precision). Empty vs
// empty is 1.
double label_quality(const std::vector<BoundingBox>& labels, const std::vector<BoundingBox>& truth,
                     double miss_penalty = 0.0, double false_penalty = 0.0);

// Deterministic two-headed detector over a known world. Skill saturates
// exponentially in the quality-weighted number of labeled training samples;
// the heads share each object's randomness with probability rho. Prediction
// noise is redrawn whenever the training set changes.
class SyntheticDetector : public Detector {
public:
    SyntheticDetector(SyntheticDetectorConfig cfg, std::shared_ptr<const GroundTruth> world);

    static double skill_for(const SyntheticDetectorConfig& cfg, double n_labeled);

    double skill() const { return skill_; }
    void set_skill(double s) { skill_ = s; }

    // Sum of label_quality over labeled training entries.
    double effective_labeled(const Manifest& train_set) const;

    TrainingReport train(const Manifest& train_set, const std::filesystem::path& work_dir) override;
    std::vector<PredictionPair> predict(const Manifest& samples,
                                        const std::filesystem::path& work_dir) override;
    std::vector<SampleFeatures> report_features(const Manifest& samples,
                                                const std::filesystem::path& work_dir) override;

    PredictionPair predict_sample(const std::string& id) const;
    SampleFeatures features_for(const std::string& id) const;

private:
    const TruthRecord& truth(const std::string& id) const;

    SyntheticDetectorConfig cfg_;
    std::shared_ptr<const GroundTruth> world_;
    std::vector<std::string> classes_;
    double skill_;
    std::uint64_t round_ = 0;  // keyed on the training set; each retrain redraws prediction noise
};

}  // namespace gramsld
