#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gramsld/data_model.hpp"
#include "gramsld/detection.hpp"

namespace gramsld {

struct MatchedPair {
    std::string class_name;
    BoundingBox box_a1;
    BoundingBox box_a2;
    double iou = 0.0;
};

struct ScoringConfig {
    double delta_acc = 0.9;
    double delta_iou = 0.75;
    double beta = 1.0;
    double termination_fraction = 0.01;

    void validate() const;
};

// Per class, greedy one-to-one matching by descending IoU (ties by index pair).
// Pairs that do not overlap are dropped.
std::vector<MatchedPair> match_pairs(const PredictionPair& pair);

// All three indicators use strict '>'.
bool is_valid_pair(const MatchedPair& m, const ScoringConfig& cfg);

int score(const PredictionPair& pair, const ScoringConfig& cfg);

// sigma_k = beta * mean(scores)
double cluster_threshold(std::span<const int> scores, double beta);

// Box committed for a valid pair: the more confident head's box (head 1 on ties).
BoundingBox committed_box(const MatchedPair& m);
std::vector<BoundingBox> committed_boxes(const PredictionPair& pair, const ScoringConfig& cfg);

struct ScoredSample {
    PredictionPair prediction;
    int score = 0;
};

struct ClusterDelta {
    double sigma = 0.0;
    int added = 0;
    int remaining = 0;
};

struct PoolDelta {
    std::vector<std::string> added;                          // sorted ids
    std::map<std::string, std::vector<BoundingBox>> labels;  // committed pseudo-labels
    std::map<std::string, int> scores;
    std::map<int, ClusterDelta> clusters;
};

// Moves samples with score > sigma_k to labeled_self. Every unlabeled sample
// must be scored and cluster-assigned. Clusters with no remaining samples are skipped.
PoolDelta update_pool(std::map<std::string, Sample>& samples,
                      const std::vector<ScoredSample>& scored, const ScoringConfig& cfg);

// remaining < fraction * initial, or the last iteration added nothing.
bool should_terminate(std::size_t initial_unlabeled, std::size_t remaining,
                      std::optional<std::size_t> last_added, const ScoringConfig& cfg);

}  // namespace gramsld
