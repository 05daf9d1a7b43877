#pragma once

#include "labelkit/corpus.hpp"
#include "labelkit/error.hpp"
#include "labelkit/eval.hpp"
#include "labelkit/learning.hpp"
#include "labelkit/policy.hpp"
#include "labelkit/quality.hpp"
#include "labelkit/registry.hpp"
#include "labelkit/store.hpp"

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <json.hpp>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace labelkit::service {

// ---------------------------------------------------------------------------
// Configuration

struct ServiceConfig {
    std::filesystem::path data_root = "labelkit-data";
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::filesystem::path> embeddings_path;
    policy::PolicyConfig policy;
    learning::SvmHyper hyper;
    std::size_t max_features = 10000;
    std::size_t cv_folds = 4;
    std::size_t suspect_limit = 20;
    std::size_t pair_limit = 10;
};

using EnvLookup = std::function<std::optional<std::string>(std::string_view)>;

/// Process environment lookup.
std::optional<std::string> getenv_lookup(std::string_view name);

/// Defaults, then the JSON config file (if given), then LABELKIT_* variables.
ServiceConfig load_service_config(const std::optional<std::filesystem::path>& config_file,
                                  const EnvLookup& env = getenv_lookup);

/// Apply the PolicyConfig fields present in `overrides` (same names as the
/// struct; model_schedule and al_strategy as strings). Validates the result.
policy::PolicyConfig apply_policy_overrides(policy::PolicyConfig base, const nlohmann::json& overrides);
nlohmann::json policy_to_json(const policy::PolicyConfig& cfg);

// ---------------------------------------------------------------------------
// Events

enum class EventKind { model_training_started, model_ready, model_failed, evaluation_ready };

std::string_view to_string(EventKind k);

struct Event {
    std::uint64_t id = 0;
    EventKind kind = EventKind::model_ready;
    std::string workspace_id;
    std::string category_id;
    std::uint64_t iteration = 0;
    std::int64_t timestamp_ns = 0;
    std::string message;
};

nlohmann::json to_json(const Event& e);

/// In-memory event history with blocking waits for stream consumers.
class EventBus {
public:
    explicit EventBus(std::size_t history = 10000) : history_(history) {}

    Event publish(Event e);
    std::vector<Event> since(std::uint64_t after_id) const;
    /// Events after `after_id`; blocks up to `timeout` while there are none.
    std::vector<Event> wait(std::uint64_t after_id, std::chrono::milliseconds timeout) const;
    std::uint64_t last_id() const;
    void close();
    bool closed() const;

private:
    std::size_t history_;
    mutable std::mutex mutex_;
    mutable std::condition_variable cv_;
    std::deque<Event> events_;
    std::uint64_t next_id_ = 1;
    bool closed_ = false;
};

// ---------------------------------------------------------------------------
// Views

struct ElementView {
    std::string element_id;
    std::string doc_id;
    std::size_t position = 0;
    std::string text;
    /// Current human (user or evaluation) label, if any.
    std::optional<bool> label;
    std::optional<learning::Prediction> prediction;
    std::size_t match_count = 0;
};

struct ElementList {
    std::uint64_t seq = 0;
    std::string category_id;
    std::optional<std::uint64_t> model_iteration;
    std::size_t total = 0;
    std::vector<ElementView> items;
};

struct WorkspaceStatus {
    std::string workspace_id;
    std::string category_id;
    store::LabelCounts counts;
    double progress = 0.0;
    std::optional<registry::ModelRecord> active_model;
    std::optional<registry::ModelRecord> latest_model;
    bool training_in_flight = false;
    std::size_t pending_tasks = 0;
    std::uint64_t seq = 0;
};

struct DisagreementView {
    std::uint64_t seq = 0;
    std::string category_id;
    quality::DisagreementReport report;
};

struct ContradictionView {
    std::uint64_t seq = 0;
    std::string category_id;
    std::vector<quality::ContradictingPair> pairs;
    std::vector<std::string> warnings;
};

struct EvaluationResult {
    eval::PrecisionEvalSession session;
    eval::EvalReport report;
    std::uint64_t seq = 0;
};

// ---------------------------------------------------------------------------
// Application

/// Wires the catalog, label store and model registry to a background
/// training orchestrator. Every public method is safe to call concurrently.
class Application {
public:
    explicit Application(ServiceConfig config);
    ~Application();
    Application(const Application&) = delete;
    Application& operator=(const Application&) = delete;

    const ServiceConfig& config() const { return config_; }
    EventBus& events() { return events_; }
    store::WorkspaceStore& store() { return *store_; }
    registry::ModelRegistry& models() { return *registry_; }

    corpus::DatasetCatalog::Added add_dataset(std::string_view name, std::string_view csv_bytes);
    std::vector<std::string> datasets() const;

    store::Workspace create_workspace(std::string_view dataset_name, std::string_view workspace_id);
    store::Workspace workspace(std::string_view workspace_id) const;
    store::Category add_category(std::string_view workspace_id, std::string_view name,
                                 std::string_view description = {});

    /// The named category, or the only one when `category` is empty.
    store::Category resolve_category(std::string_view workspace_id, std::string_view category) const;

    policy::PolicyConfig policy(std::string_view workspace_id) const;
    policy::PolicyConfig set_policy(std::string_view workspace_id, const nlohmann::json& overrides);

    /// Commit a user label and run the training trigger.
    WorkspaceStatus set_label(std::string_view workspace_id, std::string_view category, std::string_view element_id,
                              store::LabelValue value);
    WorkspaceStatus status(std::string_view workspace_id, std::string_view category) const;

    ElementList document(std::string_view workspace_id, std::string_view category, std::string_view doc_id) const;
    ElementList search(std::string_view workspace_id, std::string_view category, std::string_view query,
                       std::size_t limit) const;
    ElementList label_next(std::string_view workspace_id, std::string_view category) const;
    /// Activation-time cache, most confident first. NoModel without an active model.
    ElementList positive_predictions(std::string_view workspace_id, std::string_view category, std::size_t offset,
                                     std::size_t limit) const;

    eval::PrecisionEvalSession start_evaluation(std::string_view workspace_id, std::string_view category,
                                                std::optional<std::size_t> sample_size = {});
    EvaluationResult submit_evaluation(std::string_view workspace_id, std::string_view session_id,
                                       const std::map<std::string, bool>& labels);
    eval::PrecisionEvalSession evaluation(std::string_view workspace_id, std::string_view session_id) const;

    DisagreementView disagreements(std::string_view workspace_id, std::string_view category) const;
    ContradictionView contradictions(std::string_view workspace_id, std::string_view category) const;

    std::string export_labels(std::string_view workspace_id) const;
    store::ImportReport import_labels(std::string_view workspace_id, std::string_view csv_bytes);

    /// Replace the trainer used for a model flavor.
    void set_trainer(const std::string& flavor, std::shared_ptr<const learning::Trainer> trainer);
    /// Evaluate the training trigger for a pair and schedule a task if due.
    void maybe_schedule(std::string_view workspace_id, std::string_view category_id);
    /// Block until no training task is queued or running.
    void wait_idle();

private:
    using Key = std::pair<std::string, std::string>;

    void worker_loop();
    void run_training(const Key& key);
    std::shared_ptr<const learning::Trainer> trainer(const std::string& flavor) const;
    std::vector<ElementView> views(std::string_view workspace_id, const std::string& category_id,
                                   const std::vector<std::size_t>& indices, const store::LabelMap& labels,
                                   const registry::ActiveModel* model) const;
    void persist_session(const eval::PrecisionEvalSession& s) const;
    void load_sessions();
    bool schedule_locked(const Key& key);

    ServiceConfig config_;
    EventBus events_;
    std::shared_ptr<const learning::EmbeddingTable> embeddings_;
    std::shared_ptr<corpus::DatasetCatalog> catalog_;
    std::shared_ptr<store::WorkspaceStore> store_;
    std::unique_ptr<registry::ModelRegistry> registry_;

    mutable std::mutex trainers_mutex_;
    std::map<std::string, std::shared_ptr<const learning::Trainer>> trainers_;

    mutable std::mutex policy_mutex_;
    std::map<std::string, policy::PolicyConfig, std::less<>> policies_;

    mutable std::mutex eval_mutex_;
    std::map<std::string, std::map<std::string, eval::PrecisionEvalSession>, std::less<>> sessions_;

    mutable std::mutex work_mutex_;
    std::condition_variable work_cv_;
    std::condition_variable idle_cv_;
    std::deque<Key> queue_;
    std::set<Key> scheduled_;
    std::optional<Key> running_;
    bool stopping_ = false;
    std::thread worker_;
};

/// HTTP status code for an error code.
int http_status(ErrorCode code);

} // namespace labelkit::service
