#include <gtest/gtest.h>

#include <random>

#include "gramsld/clustering.hpp"
#include "gramsld/error.hpp"
#include "oracles.hpp"

using namespace gramsld;

namespace {

std::vector<Point> blobs(std::mt19937_64& rng, const std::vector<Point>& centres, int per, double spread) {
    std::normal_distribution<double> noise(0.0, spread);
    std::vector<Point> out;
    for (int i = 0; i < per; ++i) {
        for (const auto& c : centres) {
            Point p = c;
            for (double& v : p) v += noise(rng);
            out.push_back(p);
        }
    }
    return out;
}

std::vector<std::string> ids(std::size_t n) {
    std::vector<std::string> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back("s" + std::to_string(i));
    return v;
}

}  // namespace

TEST(Agglomerate, IdenticalPairMergesAtZero) {
    const std::vector<Point> pts = {{0.3, 0.7}, {0.3, 0.7}};
    const auto d = agglomerate(pts);
    ASSERT_EQ(d.merges.size(), 1u);
    EXPECT_EQ(d.merges[0].distance, 0.0);
    EXPECT_EQ(d.merges[0].size, 2);
}

TEST(Agglomerate, LineJoinsClosestPairFirst) {
    const std::vector<Point> pts = {{0.0}, {1.0}, {10.0}};
    const auto d = agglomerate(pts);
    ASSERT_EQ(d.merges.size(), 2u);
    EXPECT_EQ(d.merges[0].a, 0);
    EXPECT_EQ(d.merges[0].b, 1);
    EXPECT_DOUBLE_EQ(d.merges[0].distance, 1.0);
    EXPECT_EQ(d.merges[1].a, 2);
    EXPECT_EQ(d.merges[1].b, 3);
}

TEST(Agglomerate, NMinusOneMerges) {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<Point> pts(5, Point(3));
    for (auto& p : pts)
        for (double& v : p) v = u(rng);
    const auto d = agglomerate(pts);
    EXPECT_EQ(d.merges.size(), 4u);
    EXPECT_EQ(d.merges.back().size, 5);
    EXPECT_THROW(agglomerate(std::vector<Point>{{1.0}}), ValidationError);
    EXPECT_THROW(agglomerate(std::vector<Point>{{1.0}, {1.0, 2.0}}), ValidationError);
}

TEST(Agglomerate, HeightsMatchNaiveWard) {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<Point> pts(25, Point(4));
        for (auto& p : pts)
            for (double& v : p) v = u(rng);
        const auto d = agglomerate(pts);
        const auto ref = oracle::ward_heights(pts);
        ASSERT_EQ(d.merges.size(), ref.size());
        for (std::size_t i = 0; i < ref.size(); ++i) EXPECT_NEAR(d.merges[i].distance, ref[i], 1e-9) << i;
    }
}

TEST(Agglomerate, HeightsAreMonotone) {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<Point> pts(120, Point(8));
    for (auto& p : pts)
        for (double& v : p) v = u(rng);
    const auto d = agglomerate(pts);
    for (std::size_t i = 1; i < d.merges.size(); ++i) EXPECT_GE(d.merges[i].distance, d.merges[i - 1].distance - 1e-12);
}

TEST(Cut, LabelsNumberedBySmallestMember) {
    const std::vector<Point> pts = {{10.0}, {0.0}, {10.2}, {0.1}};
    const auto d = agglomerate(pts);
    EXPECT_EQ(cut(d, 2), (std::vector<int>{0, 1, 0, 1}));
    EXPECT_EQ(cut(d, 4), (std::vector<int>{0, 1, 2, 3}));
    EXPECT_EQ(cut(d, 1), (std::vector<int>{0, 0, 0, 0}));
    EXPECT_THROW(cut(d, 5), ValidationError);
}

TEST(CalinskiHarabasz, TightBlobsBeatAnyMisassignment) {
    std::mt19937_64 rng(2);
    const auto pts = blobs(rng, {{0, 0}, {10, 10}}, 6, 0.1);
    std::vector<int> labels(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) labels[i] = static_cast<int>(i % 2);
    const double good = calinski_harabasz(pts, labels);
    for (std::size_t i = 0; i < pts.size(); ++i) {
        auto moved = labels;
        moved[i] = 1 - moved[i];
        EXPECT_GT(good, 10 * calinski_harabasz(pts, moved));
    }
}

TEST(CalinskiHarabasz, DegenerateAndPreconditions) {
    const std::vector<Point> same(4, Point{1.0, 2.0});
    EXPECT_EQ(calinski_harabasz(same, std::vector<int>{0, 0, 1, 1}), kDegenerateCh);
    const std::vector<Point> pts = {{0.0}, {1.0}, {2.0}};
    EXPECT_THROW(calinski_harabasz(pts, std::vector<int>{0, 0, 0}), ValidationError);
    EXPECT_THROW(calinski_harabasz(pts, std::vector<int>{0, 2, 2}), ValidationError);
    EXPECT_EQ(calinski_harabasz(pts, std::vector<int>{0, 1, 2}), kDegenerateCh);
}

TEST(CalinskiHarabasz, MatchesPairwiseOracle) {
    std::mt19937_64 rng(29);
    std::uniform_real_distribution<double> u(0, 1);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 3 + static_cast<int>(u(rng) * 48);
        const int k = 2 + static_cast<int>(u(rng) * std::min(n - 2, 6));
        std::vector<Point> pts(n, Point(5));
        for (auto& p : pts)
            for (double& v : p) v = u(rng);
        std::vector<int> labels(n);
        for (int i = 0; i < n; ++i) labels[i] = i < k ? i : static_cast<int>(u(rng) * k);
        const double ours = calinski_harabasz(pts, labels);
        const double ref = oracle::calinski_harabasz(pts, labels);
        EXPECT_LE(std::abs(ours - ref), 1e-9 * std::max(1.0, std::abs(ref)));
    }
}

TEST(SelectK, ThreeHistogramModes) {
    std::mt19937_64 rng(31);
    auto [pts, truth] = oracle::histogram_blobs(rng, 90, 3);
    const auto d = agglomerate(pts);
    const auto m = select_k(d, pts, ids(pts.size()), {2, 10});
    EXPECT_EQ(m.k, 3);
    EXPECT_GE(oracle::purity(m.labels, truth), 0.95);
    EXPECT_EQ(m.ch_scores.size(), 9u);
    // Independent sweep: recompute CH on each cut and take the argmax.
    int best_k = 0;
    double best = -1;
    for (int k = 2; k <= 10; ++k) {
        const double v = oracle::calinski_harabasz(pts, cut(d, k));
        EXPECT_NEAR(m.ch_scores.at(k), v, 1e-9 * std::max(1.0, v));
        if (v > best) {
            best = v;
            best_k = k;
        }
    }
    EXPECT_EQ(best_k, m.k);
    int total = 0;
    for (int s : m.sizes) total += s;
    EXPECT_EQ(total, 90);
}

TEST(SelectK, TwoModes) {
    std::mt19937_64 rng(37);
    auto [pts, truth] = oracle::histogram_blobs(rng, 60, 2);
    const auto m = select_k(agglomerate(pts), pts, ids(pts.size()), {2, 5});
    EXPECT_EQ(m.k, 2);
    EXPECT_DOUBLE_EQ(oracle::purity(m.labels, truth), 1.0);
}

TEST(SelectK, ForcedKStillRecordsSweep) {
    std::mt19937_64 rng(41);
    auto [pts, truth] = oracle::histogram_blobs(rng, 60, 3);
    const auto m = select_k(agglomerate(pts), pts, ids(pts.size()), default_k_range(60), 15);
    EXPECT_EQ(m.k, 15);
    EXPECT_EQ(m.sizes.size(), 15u);
    EXPECT_EQ(m.ch_scores.size(), 29u);
    EXPECT_THROW(select_k(agglomerate(pts), pts, ids(pts.size()), {2, 10}, 60), ValidationError);
}

TEST(SelectK, DefaultRangeAndJsonRoundTrip) {
    EXPECT_EQ(default_k_range(100).k_max, 30);
    EXPECT_EQ(default_k_range(10).k_max, 9);
    const std::vector<Point> pts = {{0.0}, {0.1}, {5.0}, {5.1}, {9.0}};
    const auto m = select_k(agglomerate(pts), pts, ids(5), default_k_range(5));
    const auto back = cluster_model_from_json(cluster_model_to_json(m));
    EXPECT_EQ(back.k, m.k);
    EXPECT_EQ(back.labels, m.labels);
    EXPECT_EQ(back.sample_ids, m.sample_ids);
    EXPECT_EQ(back.sizes, m.sizes);
    EXPECT_EQ(back.cluster_of("s4"), m.labels[4]);
    EXPECT_THROW(back.cluster_of("nope"), NotFound);
}
