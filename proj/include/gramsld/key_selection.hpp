#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "gramsld/clustering.hpp"

namespace gramsld {

struct SelectionConfig {
    double ratio = 0.05;
    std::optional<int> per_cluster_cap;
};

struct KeySet {
    double ratio = 0.0;
    std::map<int, std::vector<std::string>> by_cluster;  // descending entropy within cluster

    std::size_t total() const;
    std::vector<std::string> all() const;
};

// m_k = min(ceil(ratio * N_k), N_k), optionally capped. No redistribution across clusters.
int keys_for_cluster(int cluster_size, const SelectionConfig& cfg);

// Top m_k samples per cluster by entropy; ties go to the lexicographically smaller id.
KeySet select_keys(const ClusterModel& model, const std::map<std::string, double>& entropies,
                   const SelectionConfig& cfg);

nlohmann::json keyset_to_json(const KeySet& k);
KeySet keyset_from_json(const nlohmann::json& j);

}  // namespace gramsld
