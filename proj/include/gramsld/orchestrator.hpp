#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "gramsld/clustering.hpp"
#include "gramsld/image_features.hpp"
#include "gramsld/session.hpp"

namespace gramsld {

// Decodes every manifest image, or reuses a cache whose ids match the manifest.
std::vector<Descriptor> compute_descriptors(const Manifest& m,
                                            const std::optional<std::filesystem::path>& cache = std::nullopt);

ClusterModel cluster_descriptors(const std::vector<Descriptor>& descriptors, const ClusteringOptions& opts);

KeySet select_key_samples(const ClusterModel& model, const std::vector<Descriptor>& descriptors,
                          const SelectionConfig& cfg);

std::unique_ptr<Detector> make_detector(const RunConfig& cfg, std::shared_ptr<const GroundTruth> world);

// Box-level precision and recall of pseudo-labels against the hidden truth at IoU 0.5.
struct PseudoQuality {
    double precision = 1.0;
    double recall = 1.0;
};
PseudoQuality pseudo_label_quality(const std::map<std::string, std::vector<BoundingBox>>& labels,
                                   const GroundTruth& truth);

// Drives the co-training loop. An existing journal in the work dir is replayed
// first: recorded events are checked against recomputation or re-applied, and
// the run continues live from the first unrecorded step.
class Orchestrator {
public:
    Orchestrator(Session& session, Detector& detector, std::shared_ptr<const GroundTruth> truth = nullptr);

    RunState run();

    // Called after each journaled event; test hook.
    std::function<void(const Json&)> on_event;

private:
    void emit(Json record, const std::function<void(RunState&)>& apply);
    std::optional<Json> next_recorded(const std::string& event);
    void apply_external_records();

    void prepare();
    void annotation_gate();
    void train_and_evaluate(bool silent);
    bool iterate();

    Manifest training_manifest() const;
    Manifest unlabeled_manifest() const;
    std::filesystem::path iter_dir(const std::string& kind) const;
    void write_self_labels(const std::map<std::string, std::vector<BoundingBox>>& labels);
    void apply_iteration(RunState& st, const Json& record);

    Session& session_;
    Detector& detector_;
    std::shared_ptr<const GroundTruth> truth_;
    Manifest unlabeled_;
    Manifest test_;
    BoxesBySample test_truth_;
    AlphaPolicy alpha_;
    std::vector<Json> recorded_;
    std::size_t cursor_ = 0;
    bool detector_ready_ = false;
    std::size_t last_added_ = 0;
    std::optional<PseudoQuality> last_quality_;
};

RunState run_pipeline(const RunConfig& cfg);

struct ModeResults {
    EvalResult it;
    EvalResult gram_sld;
    EvalResult fs;
    double diff = 0.0;  // FS - Gram-SLD
    int iterations = 0;
    RunState state;
};

// Runs Gram-SLD, then a fully supervised detector trained on the hidden truth
// of every training sample. Writes modes.json into the work dir.
ModeResults run_modes(const RunConfig& cfg);
Json modes_to_json(const ModeResults& r);

}  // namespace gramsld
