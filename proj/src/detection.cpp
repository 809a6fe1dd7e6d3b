#include "gramsld/detection.hpp"

#include <fstream>

#include "gramsld/error.hpp"

namespace gramsld {

namespace {

Json head_to_json(const std::vector<Detection>& dets) {
    Json arr = Json::array();
    for (const auto& d : dets) {
        arr.push_back(Json{{"class", d.class_name},
                           {"bbox", {d.x_min, d.y_min, d.x_max, d.y_max}},
                           {"confidence", d.confidence}});
    }
    return arr;
}

std::vector<Detection> head_from_json(const Json& j) {
    if (!j.is_array()) throw ValidationError("prediction head must be an array");
    std::vector<Detection> out;
    for (const auto& d : j) {
        if (!d.contains("confidence")) throw ValidationError("prediction missing confidence");
        auto b = box_from_json(d, BoxSource::self);
        if (!b.well_formed()) throw ValidationError("prediction box is degenerate");
        out.push_back(std::move(b));
    }
    return out;
}

}  // namespace

Json prediction_to_json(const PredictionPair& p) {
    return Json{{"id", p.sample_id}, {"d1", head_to_json(p.a1)}, {"d2", head_to_json(p.a2)}};
}

PredictionPair prediction_from_json(const Json& j) {
    try {
        PredictionPair p;
        p.sample_id = j.at("id").get<std::string>();
        p.a1 = head_from_json(j.at("d1"));
        p.a2 = head_from_json(j.at("d2"));
        return p;
    } catch (const Json::exception& e) {
        throw ValidationError(std::string("prediction schema violation: ") + e.what());
    }
}

void write_predictions(const std::filesystem::path& path, const std::vector<PredictionPair>& preds) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write predictions " + path.string());
    for (const auto& p : preds) out << prediction_to_json(p).dump() << '\n';
}

std::vector<PredictionPair> read_predictions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open predictions " + path.string());
    std::vector<PredictionPair> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(prediction_from_json(Json::parse(line)));
        } catch (const Json::exception& e) {
            throw ValidationError("predictions line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

}  // namespace gramsld
