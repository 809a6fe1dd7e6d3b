#pragma once

#include <cstdint>
#include <filesystem>

#include "gramsld/image_features.hpp"
#include "gramsld/synthetic_detector.hpp"

namespace gramsld {

struct ScenarioConfig {
    int n_train = 600;
    int n_test = 200;
    int classes = 6;
    int scenes = 5;          // background palettes; drive the colour clusters
    int width = 64;
    int height = 48;
    int min_objects = 1;
    int max_objects = 5;
    std::uint64_t seed = 7;

    void validate() const;
};

struct ScenarioPaths {
    std::filesystem::path root;
    std::filesystem::path train_manifest;  // purpose "unlabeled", no labels
    std::filesystem::path test_manifest;   // purpose "test", labels = hidden truth
    std::filesystem::path ground_truth;    // hidden truth for every sample
};

struct Scenario {
    GroundTruth truth;
    std::map<std::string, RgbImage> images;
    std::vector<std::string> train_ids;
    std::vector<std::string> test_ids;
};

// Deterministic in cfg.seed.
Scenario generate_scenario(const ScenarioConfig& cfg);

// Writes images/, test_labels/, both manifests and ground_truth.jsonl under dir.
ScenarioPaths write_scenario(const Scenario& s, const std::filesystem::path& dir);

}  // namespace gramsld
