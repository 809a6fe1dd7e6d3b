#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gramsld/data_model.hpp"
#include "gramsld/detection.hpp"
#include "gramsld/gram_kernels.hpp"

namespace gramsld {

// {"loss_d1": float, "loss_d2": float, "gram_loss": float|null, "epochs": int}
struct TrainingReport {
    double loss_d1 = 0.0;
    double loss_d2 = 0.0;
    std::optional<double> gram_loss;
    int epochs = 0;

    bool operator==(const TrainingReport&) const = default;
};

Json training_report_to_json(const TrainingReport& r);
TrainingReport training_report_from_json(const Json& j);

struct SampleFeatures {
    std::string sample_id;
    FeatureMap d1;
    FeatureMap d2;
};

// Two-headed detector. Training is stateful; one call at a time.
class Detector {
public:
    virtual ~Detector() = default;

    // Manifest entries carry label file references for every training sample.
    virtual TrainingReport train(const Manifest& train_set, const std::filesystem::path& work_dir) = 0;

    // One PredictionPair per manifest entry, in manifest order.
    virtual std::vector<PredictionPair> predict(const Manifest& samples,
                                                const std::filesystem::path& work_dir) = 0;

    // Optional endpoint; throws Unsupported when the plugin has no feature output.
    virtual std::vector<SampleFeatures> report_features(const Manifest& samples,
                                                        const std::filesystem::path& work_dir);
};

// Subprocess plugin. Templates expand {train_manifest}, {predict_manifest},
// {work_dir} and {config}. The plugin writes train_report.json,
// predictions.jsonl and features/<id>_d1.csv|_d2.csv into the work dir.
struct DetectorCommand {
    std::string train_template;
    std::string predict_template;
    std::optional<std::string> features_template;
    std::string config_path;
    std::chrono::seconds timeout{3600};

    void validate() const;
};

std::string expand_template(std::string tmpl, const std::vector<std::pair<std::string, std::string>>& vars);

struct ProcessResult {
    int exit_code = 0;
    bool timed_out = false;
    std::string output;  // combined stdout and stderr
};

ProcessResult run_shell(const std::string& command, std::chrono::seconds timeout,
                        const std::filesystem::path& log_path);

class ExternalDetector : public Detector {
public:
    explicit ExternalDetector(DetectorCommand cmd);

    TrainingReport train(const Manifest& train_set, const std::filesystem::path& work_dir) override;
    std::vector<PredictionPair> predict(const Manifest& samples,
                                        const std::filesystem::path& work_dir) override;
    std::vector<SampleFeatures> report_features(const Manifest& samples,
                                                const std::filesystem::path& work_dir) override;

private:
    void invoke(const std::string& tmpl, const std::filesystem::path& manifest_path,
                const std::filesystem::path& work_dir, const std::string& what);

    DetectorCommand cmd_;
};

}  // namespace gramsld
