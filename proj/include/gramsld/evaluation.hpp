#pragma once

#include <map>
#include <string>
#include <vector>

#include "gramsld/detection.hpp"

namespace gramsld {

double iou(const BoundingBox& a, const BoundingBox& b);

using BoxesBySample = std::map<std::string, std::vector<BoundingBox>>;

struct ClassCounts {
    int tp = 0;
    int fp = 0;
    int fn = 0;
};

// All-point interpolated AP at a single IoU threshold (VOC style). Predictions
// are ranked by confidence; ties break by sample id, then by box order.
double average_precision(const BoxesBySample& predictions, const BoxesBySample& ground_truth,
                         const std::string& class_name, double iou_thresh = 0.5,
                         ClassCounts* counts = nullptr);

enum class Head { d1, d2 };
std::string to_string(Head h);

struct EvalResult {
    std::map<std::string, double> per_class;
    double map = 0.0;
    ClassCounts counts;
    Head head = Head::d1;
};

// Classes are those present in the ground truth. Sample sets must agree.
EvalResult evaluate(const BoxesBySample& predictions, const BoxesBySample& ground_truth,
                    double iou_thresh = 0.5);

// Evaluates each head separately; the headline is the better head.
struct HeadEvaluation {
    EvalResult d1;
    EvalResult d2;
    const EvalResult& best() const { return d2.map > d1.map ? d2 : d1; }
};
HeadEvaluation evaluate_heads(const std::vector<PredictionPair>& predictions,
                              const BoxesBySample& ground_truth, double iou_thresh = 0.5);

struct EvalDiff {
    std::map<std::string, double> per_class;  // a - b
    double map = 0.0;
};
EvalDiff diff(const EvalResult& a, const EvalResult& b);

Json eval_to_json(const EvalResult& r);
EvalResult eval_from_json(const Json& j);

}  // namespace gramsld
