#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gramsld/data_model.hpp"

namespace gramsld {

using Detection = BoundingBox;

// Outputs of the two detector heads for one sample.
struct PredictionPair {
    std::string sample_id;
    std::vector<Detection> a1;
    std::vector<Detection> a2;

    bool operator==(const PredictionPair&) const = default;
};

// {"id": str, "d1": [{"class","bbox","confidence"}], "d2": [...]}
Json prediction_to_json(const PredictionPair& p);
PredictionPair prediction_from_json(const Json& j);

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionPair>& preds);
std::vector<PredictionPair> read_predictions(const std::filesystem::path& path);

}  // namespace gramsld
