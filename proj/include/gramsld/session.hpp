#pragma once

#include <chrono>
#include <condition_variable>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "gramsld/config.hpp"
#include "gramsld/error.hpp"
#include "gramsld/evaluation.hpp"
#include "gramsld/gram_kernels.hpp"
#include "gramsld/journal.hpp"

namespace gramsld {

struct IterationMetrics {
    int iteration = 0;
    std::size_t added = 0;
    std::optional<double> pseudo_precision;
    std::optional<double> pseudo_recall;
    EvalResult d1;
    EvalResult d2;
    std::optional<double> gram_diff;  // mean |G1 - G2| over diagnostic samples
    LossReport loss;
    std::map<std::string, std::size_t> pools;

    const EvalResult& best() const { return d2.map > d1.map ? d2 : d1; }
};

Json metrics_to_json(const IterationMetrics& m);
IterationMetrics metrics_from_json(const Json& j);

struct RunState {
    int iteration = 0;
    std::map<std::string, Sample> samples;
    std::size_t initial_unlabeled = 0;
    std::vector<IterationMetrics> metrics;
    std::optional<int> k;
    bool gate_passed = false;
    bool terminated = false;
    std::string termination_reason;
    std::set<std::string> reviewed;

    std::map<std::string, std::size_t> pool_counts() const;
    std::size_t count(SampleStatus s) const;
};

enum class QueueKind { key_annotation, pseudo_review };
std::optional<QueueKind> parse_queue_kind(const std::string& s);

struct QueueItem {
    std::string sample_id;
    QueueKind kind;
    int width = 0;
    int height = 0;
    std::vector<BoundingBox> boxes;
    std::int64_t revision = 0;
    int cluster_id = -1;
};

Json queue_item_to_json(const QueueItem& q);

enum class ReviewAction { approve, reject, edit };
std::optional<ReviewAction> parse_review_action(const std::string& s);

// Review endpoint outcome; maps onto HTTP status codes.
class ReviewDisabled : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Shared run state: the orchestrator loop and the HTTP service both go
// through here. State mutations are journaled under the state lock.
class Session {
public:
    explicit Session(RunConfig cfg);

    const RunConfig& config() const { return cfg_; }
    LabelStore& store() { return store_; }
    Journal& journal() { return journal_; }

    // Held by the run loop from prediction through the pool update, and by
    // review requests, so a review never lands between scoring and update.
    std::mutex& pool_mutex() { return pool_mu_; }

    RunState snapshot() const;
    template <class F>
    decltype(auto) mutate(F&& f) {
        std::lock_guard lock(mu_);
        return f(state_);
    }
    void set_status(RunState& st, const std::string& id, SampleStatus to);

    // Journals `record` while holding the state lock after applying `f`.
    template <class F>
    void commit(Json record, F&& f) {
        std::lock_guard lock(mu_);
        f(state_);
        journal_.append(std::move(record));
        cv_.notify_all();
    }

    Json status_json() const;
    std::vector<QueueItem> queue(QueueKind kind) const;

    // PUT /api/labels/{id}: stores human labels, key_pending -> labeled_human.
    std::int64_t annotate(const LabelSet& labels);
    std::optional<LabelSet> labels(const std::string& id) const;

    // POST /api/review/{id}
    void review(const std::string& id, ReviewAction action, const std::vector<BoundingBox>& boxes);

    // Blocks until no key sample is pending; false on timeout.
    bool wait_for_gate(std::chrono::milliseconds timeout);
    std::size_t pending_keys() const;

    // Long-poll helper: blocks until the journal holds more than `seen` records.
    bool wait_for_journal(std::size_t seen, std::chrono::milliseconds timeout);

private:
    RunConfig cfg_;
    LabelStore store_;
    Journal journal_;
    mutable std::mutex mu_;
    std::mutex pool_mu_;
    std::condition_variable cv_;
    RunState state_;
};

}  // namespace gramsld
