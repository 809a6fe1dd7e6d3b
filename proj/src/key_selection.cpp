#include "gramsld/key_selection.hpp"

#include <algorithm>
#include <cmath>

#include "gramsld/error.hpp"

namespace gramsld {

std::size_t KeySet::total() const {
    std::size_t n = 0;
    for (const auto& [c, ids] : by_cluster) n += ids.size();
    return n;
}

std::vector<std::string> KeySet::all() const {
    std::vector<std::string> out;
    for (const auto& [c, ids] : by_cluster) out.insert(out.end(), ids.begin(), ids.end());
    return out;
}

int keys_for_cluster(int cluster_size, const SelectionConfig& cfg) {
    // Guard against ratio*N landing a hair above an integer through rounding.
    const double raw = cfg.ratio * cluster_size;
    int m = static_cast<int>(std::ceil(raw - 1e-9));
    m = std::min(m, cluster_size);
    if (cfg.per_cluster_cap) m = std::min(m, *cfg.per_cluster_cap);
    return std::max(m, 0);
}

KeySet select_keys(const ClusterModel& model, const std::map<std::string, double>& entropies,
                   const SelectionConfig& cfg) {
    if (!(cfg.ratio > 0.0 && cfg.ratio <= 1.0)) throw ValidationError("ratio must lie in (0,1]");
    if (model.k <= 0 || model.sample_ids.empty()) throw ValidationError("empty cluster model");

    std::map<int, std::vector<std::pair<double, std::string>>> members;
    for (std::size_t i = 0; i < model.sample_ids.size(); ++i) {
        const auto& id = model.sample_ids[i];
        auto it = entropies.find(id);
        if (it == entropies.end()) throw ValidationError("missing entropy for sample '" + id + "'");
        members[model.labels[i]].emplace_back(it->second, id);
    }

    KeySet out;
    out.ratio = cfg.ratio;
    for (auto& [cluster, list] : members) {
        std::sort(list.begin(), list.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        });
        const int m = keys_for_cluster(static_cast<int>(list.size()), cfg);
        auto& chosen = out.by_cluster[cluster];
        for (int i = 0; i < m; ++i) chosen.push_back(list[i].second);
    }
    return out;
}

nlohmann::json keyset_to_json(const KeySet& k) {
    nlohmann::json clusters = nlohmann::json::object();
    for (const auto& [c, ids] : k.by_cluster) clusters[std::to_string(c)] = ids;
    return {{"ratio", k.ratio}, {"clusters", clusters}};
}

KeySet keyset_from_json(const nlohmann::json& j) {
    KeySet k;
    try {
        k.ratio = j.at("ratio").get<double>();
        for (const auto& [c, ids] : j.at("clusters").items()) {
            k.by_cluster[std::stoi(c)] = ids.get<std::vector<std::string>>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("malformed keyset.json: ") + e.what());
    }
    return k;
}

}  // namespace gramsld
