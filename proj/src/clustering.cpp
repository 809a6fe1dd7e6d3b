#include "gramsld/clustering.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gramsld/error.hpp"

namespace gramsld {

namespace {

// Condensed storage of the strict upper triangle.
class PairMatrix {
public:
    explicit PairMatrix(int n) : n_(n), data_(static_cast<std::size_t>(n) * (n - 1) / 2) {}

    double& operator()(int i, int j) { return data_[index(i, j)]; }
    double operator()(int i, int j) const { return data_[index(i, j)]; }

private:
    std::size_t index(int i, int j) const {
        if (i > j) std::swap(i, j);
        const auto ii = static_cast<std::size_t>(i);
        return ii * (2 * static_cast<std::size_t>(n_) - ii - 1) / 2 + (j - i - 1);
    }

    int n_;
    std::vector<double> data_;
};

double squared_distance(const Point& a, const Point& b) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
        const double d = a[k] - b[k];
        s += d * d;
    }
    return s;
}

void check_points(std::span<const Point> points) {
    if (points.empty()) return;
    const auto dim = points.front().size();
    for (std::size_t i = 0; i < points.size(); ++i) {
        if (points[i].size() != dim) {
            throw ValidationError("dimension mismatch at descriptor " + std::to_string(i));
        }
    }
}

}  // namespace

Dendrogram agglomerate(std::span<const Point> points) {
    const int n = static_cast<int>(points.size());
    if (n < 2) throw ValidationError("agglomerate needs at least 2 descriptors");
    check_points(points);

    // Squared Ward distances; singletons start at squared Euclidean distance.
    PairMatrix d2(n);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) d2(i, j) = squared_distance(points[i], points[j]);
    }

    std::vector<char> active(n, 1);
    std::vector<int> size(n, 1);
    std::vector<int> cluster_id(n);
    std::iota(cluster_id.begin(), cluster_id.end(), 0);
    std::vector<int> nn(n, -1);
    std::vector<double> nn_d2(n, std::numeric_limits<double>::infinity());

    auto refresh = [&](int i) {
        nn[i] = -1;
        nn_d2[i] = std::numeric_limits<double>::infinity();
        for (int j = 0; j < n; ++j) {
            if (j == i || !active[j]) continue;
            const double v = d2(i, j);
            if (v < nn_d2[i]) {
                nn_d2[i] = v;
                nn[i] = j;
            }
        }
    };
    for (int i = 0; i < n; ++i) refresh(i);

    Dendrogram out;
    out.leaves = n;
    out.merges.reserve(n - 1);
    for (int step = 0; step < n - 1; ++step) {
        int lo = -1;
        for (int i = 0; i < n; ++i) {
            if (active[i] && (lo < 0 || nn_d2[i] < nn_d2[lo])) lo = i;
        }
        const int hi = nn[lo];  // hi > lo: lo is the smallest slot in any minimal pair
        const double dij = d2(lo, hi);
        const int ni = size[lo], nj = size[hi];

        for (int k = 0; k < n; ++k) {
            if (!active[k] || k == lo || k == hi) continue;
            const int nk = size[k];
            const double v = ((ni + nk) * d2(lo, k) + (nj + nk) * d2(hi, k) - nk * dij) /
                             static_cast<double>(ni + nj + nk);
            d2(lo, k) = std::max(0.0, v);
        }

        const int a = std::min(cluster_id[lo], cluster_id[hi]);
        const int b = std::max(cluster_id[lo], cluster_id[hi]);
        out.merges.push_back({a, b, std::sqrt(dij), ni + nj});

        active[hi] = 0;
        size[lo] = ni + nj;
        cluster_id[lo] = n + step;

        refresh(lo);
        for (int k = 0; k < n; ++k) {
            if (!active[k] || k == lo) continue;
            if (nn[k] == lo || nn[k] == hi) {
                refresh(k);
            } else {
                const double v = d2(k, lo);
                if (v < nn_d2[k] || (v == nn_d2[k] && lo < nn[k])) {
                    nn_d2[k] = v;
                    nn[k] = lo;
                }
            }
        }
    }
    return out;
}

std::vector<int> cut(const Dendrogram& d, int k) {
    const int n = d.leaves;
    if (k < 1 || k > n) throw ValidationError("cut: k out of range");
    std::vector<int> parent(n);
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    // Representative leaf of each cluster id.
    std::vector<int> rep(2 * n - 1);
    std::iota(rep.begin(), rep.begin() + n, 0);
    for (int s = 0; s < n - k; ++s) {
        const auto& m = d.merges[s];
        const int ra = find(rep[m.a]);
        const int rb = find(rep[m.b]);
        const int root = std::min(ra, rb);
        parent[std::max(ra, rb)] = root;
        rep[n + s] = root;
    }
    std::vector<int> labels(n, -1);
    std::vector<int> label_of_root(n, -1);
    int next = 0;
    for (int i = 0; i < n; ++i) {
        const int r = find(i);
        if (label_of_root[r] < 0) label_of_root[r] = next++;
        labels[i] = label_of_root[r];
    }
    return labels;
}

double calinski_harabasz(std::span<const Point> points, std::span<const int> labels) {
    const int n = static_cast<int>(points.size());
    if (n == 0 || labels.size() != points.size()) {
        throw ValidationError("calinski_harabasz: labels must parallel points");
    }
    check_points(points);
    const int k = *std::max_element(labels.begin(), labels.end()) + 1;
    if (k < 2) throw ValidationError("calinski_harabasz needs K >= 2");
    const auto dim = points.front().size();

    std::vector<int> count(k, 0);
    std::vector<Point> centroid(k, Point(dim, 0.0));
    Point overall(dim, 0.0);
    for (int i = 0; i < n; ++i) {
        const int l = labels[i];
        if (l < 0) throw ValidationError("calinski_harabasz: negative label");
        ++count[l];
        for (std::size_t c = 0; c < dim; ++c) {
            centroid[l][c] += points[i][c];
            overall[c] += points[i][c];
        }
    }
    for (int l = 0; l < k; ++l) {
        if (count[l] == 0) throw ValidationError("calinski_harabasz: cluster " + std::to_string(l) + " is empty");
        for (auto& v : centroid[l]) v /= count[l];
    }
    for (auto& v : overall) v /= n;

    double between = 0.0;
    for (int l = 0; l < k; ++l) between += count[l] * squared_distance(centroid[l], overall);
    double within = 0.0;
    for (int i = 0; i < n; ++i) within += squared_distance(points[i], centroid[labels[i]]);

    if (k == n || within <= 0.0) return kDegenerateCh;
    return (between / (k - 1)) / (within / (n - k));
}

int ClusterModel::cluster_of(const std::string& id) const {
    for (std::size_t i = 0; i < sample_ids.size(); ++i) {
        if (sample_ids[i] == id) return labels[i];
    }
    throw NotFound("sample '" + id + "' not in cluster model");
}

KRange default_k_range(int n) { return {2, std::min(30, n - 1)}; }

ClusterModel select_k(const Dendrogram& d, std::span<const Point> points,
                      std::vector<std::string> sample_ids, KRange range,
                      std::optional<int> forced_k) {
    const int n = d.leaves;
    if (static_cast<int>(points.size()) != n || static_cast<int>(sample_ids.size()) != n) {
        throw ValidationError("select_k: descriptors, ids and dendrogram disagree in size");
    }
    if (range.k_min < 2 || range.k_min > range.k_max || range.k_max > n - 1) {
        throw ValidationError("select_k: invalid K range [" + std::to_string(range.k_min) + "," +
                              std::to_string(range.k_max) + "] for N=" + std::to_string(n));
    }
    if (forced_k && (*forced_k < 2 || *forced_k > n - 1)) {
        throw ValidationError("forced K must lie in [2, N-1]");
    }

    ClusterModel m;
    m.sample_ids = std::move(sample_ids);
    int best_k = -1;
    double best = -1.0;
    for (int k = range.k_min; k <= range.k_max; ++k) {
        const auto labels = cut(d, k);
        const double ch = calinski_harabasz(points, labels);
        m.ch_scores[k] = ch;
        if (best_k < 0 || ch > best) {
            best = ch;
            best_k = k;
        }
    }
    m.k = forced_k.value_or(best_k);
    m.labels = cut(d, m.k);
    m.sizes.assign(m.k, 0);
    for (int l : m.labels) ++m.sizes[l];
    return m;
}

nlohmann::json cluster_model_to_json(const ClusterModel& m) {
    nlohmann::json scores = nlohmann::json::object();
    for (const auto& [k, v] : m.ch_scores) {
        scores[std::to_string(k)] = std::isinf(v) ? nlohmann::json("inf") : nlohmann::json(v);
    }
    nlohmann::json assignments = nlohmann::json::object();
    for (std::size_t i = 0; i < m.sample_ids.size(); ++i) assignments[m.sample_ids[i]] = m.labels[i];
    return {{"k", m.k}, {"ch_scores", scores}, {"assignments", assignments}};
}

ClusterModel cluster_model_from_json(const nlohmann::json& j) {
    ClusterModel m;
    try {
        m.k = j.at("k").get<int>();
        for (const auto& [k, v] : j.at("ch_scores").items()) {
            m.ch_scores[std::stoi(k)] = v.is_string() ? kDegenerateCh : v.get<double>();
        }
        for (const auto& [id, c] : j.at("assignments").items()) {
            m.sample_ids.push_back(id);
            m.labels.push_back(c.get<int>());
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed clusters.json: ") + e.what());
    }
    m.sizes.assign(m.k, 0);
    for (int l : m.labels) {
        if (l < 0 || l >= m.k) throw ValidationError("clusters.json: cluster id out of range");
        ++m.sizes[l];
    }
    return m;
}

}  // namespace gramsld
