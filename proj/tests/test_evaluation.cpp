#include <gtest/gtest.h>

#include "gramsld/error.hpp"
#include "gramsld/evaluation.hpp"
#include "test_util.hpp"

using namespace gramsld;
using testutil::box;

namespace {

BoundingBox far_away(const std::string& cls, double conf) { return box(500, 500, 510, 510, cls, conf); }

}  // namespace

TEST(Iou, HandCases) {
    EXPECT_EQ(iou(box(0, 0, 2, 2), box(0, 0, 2, 2)), 1.0);
    EXPECT_EQ(iou(box(0, 0, 2, 2), box(3, 3, 4, 4)), 0.0);
    EXPECT_EQ(iou(box(0, 0, 2, 2), box(2, 0, 4, 2)), 0.0);
    EXPECT_DOUBLE_EQ(iou(box(0, 0, 2, 2), box(1, 1, 3, 3)), 1.0 / 7.0);
}

TEST(AveragePrecision, SingleCorrectAndBelowThreshold) {
    const BoxesBySample gt = {{"a", {box(0, 0, 10, 10)}}};
    EXPECT_EQ(average_precision({{"a", {box(0, 0, 10, 10, "car", 0.9)}}}, gt, "car"), 1.0);
    // IoU 0.3 < 0.5
    EXPECT_EQ(average_precision({{"a", {box(0, 0, 10, 3, "car", 0.9)}}}, gt, "car"), 0.0);
}

// Ranks TP, FP, TP over 2 ground-truth boxes: 0.5 * 1 + 0.5 * 2/3.
TEST(AveragePrecision, HandPrCurveOne) {
    const BoxesBySample gt = {{"a", {box(0, 0, 10, 10), box(20, 20, 30, 30)}}};
    const BoxesBySample pred = {{"a", {box(0, 0, 10, 10, "car", 0.9), far_away("car", 0.8),
                                       box(20, 20, 30, 30, "car", 0.7)}}};
    ClassCounts c;
    EXPECT_NEAR(average_precision(pred, gt, "car", 0.5, &c), 0.5 + (2.0 / 3.0) * 0.5, 1e-9);
    EXPECT_EQ(c.tp, 2);
    EXPECT_EQ(c.fp, 1);
    EXPECT_EQ(c.fn, 0);
}

// car: TP, duplicate FP, TP, FP with one miss -> 1/3 * 1 + 1/3 * 2/3 = 5/9.
// dog: FP (IoU 0.3), TP -> 0.5. mAP = 19/36.
TEST(AveragePrecision, HandPrCurveTwo) {
    const BoxesBySample gt = {
        {"a", {box(0, 0, 10, 10, "car"), box(40, 40, 50, 50, "car"), box(0, 20, 10, 30, "dog")}},
        {"b", {box(5, 5, 15, 15, "car")}},
    };
    const BoxesBySample pred = {
        {"a", {box(0, 0, 10, 10, "car", 0.95), box(0, 0, 10, 9, "car", 0.9), far_away("car", 0.6),
               box(0, 20, 10, 23, "dog", 0.7), box(0, 20, 10, 30, "dog", 0.4)}},
        {"b", {box(5, 5, 15, 15, "car", 0.85)}},
    };
    ClassCounts c;
    EXPECT_NEAR(average_precision(pred, gt, "car", 0.5, &c), 5.0 / 9.0, 1e-9);
    EXPECT_EQ(c.tp, 2);
    EXPECT_EQ(c.fp, 2);
    EXPECT_EQ(c.fn, 1);
    EXPECT_NEAR(average_precision(pred, gt, "dog"), 0.5, 1e-9);
    const auto r = evaluate(pred, gt);
    EXPECT_NEAR(r.map, 19.0 / 36.0, 1e-9);
    EXPECT_EQ(r.per_class.size(), 2u);
}

// Equal confidences rank by sample id; a ground-truth class with no
// predictions scores 0 and a predicted class absent from the truth is ignored.
TEST(AveragePrecision, HandPrCurveThree) {
    const BoxesBySample gt = {
        {"s1", {box(0, 0, 10, 10, "car"), box(30, 30, 40, 40, "person")}},
        {"s2", {box(0, 0, 10, 10, "car")}},
    };
    const BoxesBySample pred = {
        {"s1", {box(0, 0, 10, 10, "car", 0.8), box(0, 0, 10, 10, "bike", 0.99)}},
        {"s2", {far_away("car", 0.8), box(0, 0, 10, 10, "car", 0.5)}},
    };
    EXPECT_NEAR(average_precision(pred, gt, "car"), 5.0 / 6.0, 1e-9);
    EXPECT_EQ(average_precision(pred, gt, "person"), 0.0);
    const auto r = evaluate(pred, gt);
    EXPECT_NEAR(r.map, 5.0 / 12.0, 1e-9);
    EXPECT_EQ(r.per_class.count("bike"), 0u);
}

TEST(Evaluate, PerfectAndEmpty) {
    const BoxesBySample gt = {{"a", {box(0, 0, 10, 10, "car"), box(3, 3, 9, 9, "dog")}}, {"b", {}}};
    BoxesBySample perfect = gt;
    for (auto& [id, boxes] : perfect)
        for (auto& b : boxes) b.confidence = 1.0;
    EXPECT_EQ(evaluate(perfect, gt).map, 1.0);
    const BoxesBySample none = {{"a", {}}, {"b", {}}};
    EXPECT_EQ(evaluate(none, gt).map, 0.0);
    EXPECT_THROW(evaluate({{"a", {}}}, gt), ValidationError);
}

TEST(Evaluate, HeadsAndDiff) {
    const BoxesBySample gt = {{"a", {box(0, 0, 10, 10, "car")}}};
    PredictionPair p{"a", {box(0, 0, 10, 10, "car", 0.9)}, {box(0, 0, 10, 3, "car", 0.9)}};
    const auto h = evaluate_heads({p}, gt);
    EXPECT_EQ(h.d1.map, 1.0);
    EXPECT_EQ(h.d2.map, 0.0);
    EXPECT_EQ(h.best().head, Head::d1);
    std::swap(p.a1, p.a2);
    EXPECT_EQ(evaluate_heads({p}, gt).best().head, Head::d2);
    const auto d = diff(h.d1, h.d2);
    EXPECT_EQ(d.map, 1.0);
    EXPECT_EQ(d.per_class.at("car"), 1.0);
    const auto back = eval_from_json(eval_to_json(h.d1));
    EXPECT_EQ(back.map, h.d1.map);
    EXPECT_EQ(back.per_class, h.d1.per_class);
}
