#include "gramsld/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

#include "gramsld/error.hpp"

namespace gramsld {

void ScenarioConfig::validate() const {
    if (n_train < 2 || n_test < 1) throw ValidationError("scenario needs >= 2 train and >= 1 test samples");
    if (classes < 1 || scenes < 1) throw ValidationError("scenario needs >= 1 class and scene");
    if (width < 8 || height < 8) throw ValidationError("scenario images must be at least 8x8");
    if (min_objects < 0 || max_objects < min_objects) throw ValidationError("invalid object count range");
}

namespace {

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    int integer(int lo, int hi) {  // inclusive
        return lo + static_cast<int>(std::min<double>(hi - lo, std::floor(uniform() * (hi - lo + 1))));
    }

private:
    std::mt19937_64 gen_;
};

std::array<std::uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
    const double c = v * s;
    const double hp = std::fmod(h, 360.0) / 60.0;
    const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    if (hp < 1) { r = c; g = x; }
    else if (hp < 2) { r = x; g = c; }
    else if (hp < 3) { g = c; b = x; }
    else if (hp < 4) { g = x; b = c; }
    else if (hp < 5) { r = x; b = c; }
    else { r = c; b = x; }
    const double m = v - c;
    auto to8 = [&](double t) { return static_cast<std::uint8_t>(std::clamp(std::lround((t + m) * 255.0), 0L, 255L)); };
    return {to8(r), to8(g), to8(b)};
}

std::string make_id(char prefix, int i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%c%05d", prefix, i);
    return buf;
}

}  // namespace

Scenario generate_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    Rng rng(cfg.seed);
    Scenario sc;

    std::vector<std::array<std::uint8_t, 3>> class_colour;
    for (int c = 0; c < cfg.classes; ++c) {
        class_colour.push_back(hsv_to_rgb(360.0 * c / cfg.classes + 15.0, 0.35, 0.55 + 0.4 * ((c % 2) ? 1 : 0)));
    }

    auto make_sample = [&](const std::string& id) {
        const int scene = rng.integer(0, cfg.scenes - 1);
        const double hue = 360.0 * scene / cfg.scenes;
        const double sat = 0.55 + 0.1 * (scene % 3);
        const double val = 0.45 + 0.12 * (scene % 4);
        const double noise = rng.uniform(2.0, 70.0);

        RgbImage img(cfg.width, cfg.height);
        const auto base = hsv_to_rgb(hue, sat, val);
        for (int y = 0; y < cfg.height; ++y) {
            for (int x = 0; x < cfg.width; ++x) {
                auto* p = img.at(x, y);
                for (int ch = 0; ch < 3; ++ch) {
                    const double v = base[ch] + noise * (rng.uniform() - 0.5);
                    p[ch] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
                }
            }
        }

        TruthRecord rec;
        rec.id = id;
        rec.width = cfg.width;
        rec.height = cfg.height;
        const int k = rng.integer(cfg.min_objects, cfg.max_objects);
        for (int o = 0; o < k; ++o) {
            const int cls = rng.integer(0, cfg.classes - 1);
            const double bw = rng.uniform(0.12, 0.40) * cfg.width;
            const double bh = rng.uniform(0.12, 0.40) * cfg.height;
            const double x0 = rng.uniform(0.0, cfg.width - bw);
            const double y0 = rng.uniform(0.0, cfg.height - bh);
            BoundingBox b;
            b.x_min = x0;
            b.y_min = y0;
            b.x_max = x0 + bw;
            b.y_max = y0 + bh;
            b.class_name = "obj" + std::to_string(cls);
            b.source = BoxSource::hidden_gt;
            rec.boxes.push_back(b);
            const auto& col = class_colour[cls];
            for (int y = static_cast<int>(b.y_min); y < static_cast<int>(b.y_max); ++y) {
                for (int x = static_cast<int>(b.x_min); x < static_cast<int>(b.x_max); ++x) {
                    auto* p = img.at(x, y);
                    p[0] = col[0];
                    p[1] = col[1];
                    p[2] = col[2];
                }
            }
        }
        sc.truth[id] = std::move(rec);
        sc.images[id] = std::move(img);
    };

    for (int i = 0; i < cfg.n_train; ++i) {
        sc.train_ids.push_back(make_id('s', i));
        make_sample(sc.train_ids.back());
    }
    for (int i = 0; i < cfg.n_test; ++i) {
        sc.test_ids.push_back(make_id('t', i));
        make_sample(sc.test_ids.back());
    }
    return sc;
}

ScenarioPaths write_scenario(const Scenario& s, const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    ScenarioPaths paths;
    paths.root = dir;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "test_labels");
    for (const auto& [id, img] : s.images) encode_png(dir / "images" / (id + ".png"), img);

    Manifest train;
    train.purpose = ManifestPurpose::unlabeled;
    for (const auto& id : s.train_ids) train.entries.push_back({id, dir / "images" / (id + ".png"), std::nullopt});

    Manifest test;
    test.purpose = ManifestPurpose::test;
    for (const auto& id : s.test_ids) {
        const auto label_path = dir / "test_labels" / (id + ".json");
        LabelSet l;
        l.sample_id = id;
        l.revision = 1;
        l.annotator = "ground_truth";
        l.boxes = s.truth.at(id).boxes;
        write_labelset_file(label_path, l);
        test.entries.push_back({id, dir / "images" / (id + ".png"), label_path});
    }

    paths.train_manifest = dir / "train_manifest.jsonl";
    paths.test_manifest = dir / "test_manifest.jsonl";
    paths.ground_truth = dir / "ground_truth.jsonl";
    save_manifest(paths.train_manifest, train);
    save_manifest(paths.test_manifest, test);
    save_ground_truth(paths.ground_truth, s.truth);
    return paths;
}

}  // namespace gramsld
