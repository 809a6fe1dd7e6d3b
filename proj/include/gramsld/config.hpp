#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "gramsld/data_model.hpp"
#include "gramsld/detector.hpp"
#include "gramsld/key_selection.hpp"
#include "gramsld/self_labeling.hpp"
#include "gramsld/synthetic_detector.hpp"

namespace gramsld {

struct ClusteringOptions {
    std::optional<int> k_min;
    std::optional<int> k_max;
    std::optional<int> force_k;
};

enum class DetectorKind { synthetic, external };

struct DetectorSpec {
    DetectorKind kind = DetectorKind::synthetic;
    SyntheticDetectorConfig synthetic;
    DetectorCommand external;
};

struct AlphaSpec {
    bool automatic = true;
    double share = 0.1;   // automatic: alpha * gram = share * detection loss
    double value = 0.0;   // fixed alpha
};

// Where key-sample labels come from at the annotation gate.
enum class AnnotationMode {
    preloaded,  // label files referenced by the train manifest
    oracle,     // copied from the hidden ground truth (simulation only)
    service,    // submitted over HTTP while the run blocks
};

struct RunConfig {
    std::filesystem::path unlabeled_manifest;
    std::filesystem::path test_manifest;
    std::filesystem::path work_dir;
    std::optional<std::filesystem::path> ground_truth;

    SelectionConfig selection;
    ScoringConfig scoring;
    ClusteringOptions clustering;
    DetectorSpec detector;
    AlphaSpec alpha;
    std::uint64_t seed = 7;
    AnnotationMode annotation = AnnotationMode::preloaded;
    std::chrono::seconds annotation_timeout{3600};
    bool review = false;
    int max_iterations = 50;
    int diagnostic_samples = 8;

    void validate() const;
};

// Relative paths resolve against base_dir.
RunConfig run_config_from_json(const Json& j, const std::filesystem::path& base_dir);
RunConfig load_run_config(const std::filesystem::path& path);

// Reproducibility-relevant settings; excludes the work dir so runs in
// different directories journal identically.
Json run_config_fingerprint(const RunConfig& c);

}  // namespace gramsld
