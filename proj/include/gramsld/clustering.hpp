#pragma once

#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace gramsld {

using Point = std::vector<double>;

struct Merge {
    int a;            // cluster ids: leaves 0..N-1, merge i creates id N+i
    int b;
    double distance;  // Ward linkage distance
    int size;         // members of the merged cluster
};

struct Dendrogram {
    int leaves = 0;
    std::vector<Merge> merges;
};

// Ward linkage on Euclidean distance. Ties go to the lowest (i, j) pair of
// active cluster slots, so the result is deterministic for a given input order.
Dendrogram agglomerate(std::span<const Point> points);

// Flat partition with k clusters, labels 0..k-1 numbered by each cluster's
// smallest member index.
std::vector<int> cut(const Dendrogram& d, int k);

// Degenerate partitions (zero within-dispersion) return +infinity.
inline constexpr double kDegenerateCh = std::numeric_limits<double>::infinity();

double calinski_harabasz(std::span<const Point> points, std::span<const int> labels);

struct ClusterModel {
    int k = 0;
    std::vector<std::string> sample_ids;
    std::vector<int> labels;           // parallel to sample_ids
    std::map<int, double> ch_scores;   // K -> CH
    std::vector<int> sizes;            // N_k

    int cluster_of(const std::string& id) const;
};

struct KRange {
    int k_min = 2;
    int k_max = 30;
};

// Default sweep [2, min(30, N-1)].
KRange default_k_range(int n);

// Cuts at every K in range, returns the argmax of CH (ties toward smaller K).
// forced_k bypasses the argmax but still records the sweep scores.
ClusterModel select_k(const Dendrogram& d, std::span<const Point> points,
                      std::vector<std::string> sample_ids, KRange range,
                      std::optional<int> forced_k = std::nullopt);

nlohmann::json cluster_model_to_json(const ClusterModel& m);
ClusterModel cluster_model_from_json(const nlohmann::json& j);

}  // namespace gramsld
