#pragma once

#include "labelkit/corpus.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

namespace labelkit::store {

enum class LabelValue { positive, negative, none };
enum class LabelSource { user, weak_negative, evaluation };

std::string_view to_string(LabelValue v);
std::string_view to_string(LabelSource s);
LabelValue parse_label_value(std::string_view s);
LabelSource parse_label_source(std::string_view s);

struct Category {
    std::string category_id;
    std::string name;
    std::string description;
};

struct Workspace {
    std::string workspace_id;
    std::string dataset_name;
    std::vector<Category> categories;

    const Category* find_category(std::string_view id_or_name) const;
};

/// One labeling event. `value == none` is a retraction tombstone.
/// `iteration` tags weak-negative draws with the training attempt that made them.
struct LabelRecord {
    std::uint64_t seq = 0;
    std::int64_t timestamp_ns = 0;
    std::string element_id;
    std::string category_id;
    LabelValue value = LabelValue::positive;
    LabelSource source = LabelSource::user;
    std::uint64_t iteration = 0;
};

struct CurrentLabel {
    bool positive = false;
    LabelSource source = LabelSource::user;

    bool operator==(const CurrentLabel&) const = default;
};

using LabelMap = std::map<std::string, CurrentLabel>;

struct LabelCounts {
    std::size_t positives = 0;
    std::size_t negatives = 0;
    std::size_t user_labels_total = 0;
    std::size_t labels_since_last_train = 0;

    bool operator==(const LabelCounts&) const = default;
};

/// Materialized view of one category's label log. Pure fold: apply records
/// in seq order and the state is fully determined.
class CategoryLabels {
public:
    void apply(const LabelRecord& r);
    void mark_trained(std::uint64_t through_seq);

    LabelMap current() const;
    LabelCounts counts() const;
    std::uint64_t trained_through() const { return trained_through_; }

private:
    struct Slot {
        std::optional<CurrentLabel> user;
        std::optional<CurrentLabel> other;
        std::uint64_t other_seq = 0;
    };
    std::map<std::string, Slot> slots_;
    std::uint64_t weak_iteration_ = 0;
    std::size_t user_records_ = 0;
    std::size_t since_train_ = 0;
    std::uint64_t trained_through_ = 0;
    std::vector<std::uint64_t> counted_seqs_;
};

struct LabelSnapshot {
    std::uint64_t seq = 0;
    LabelMap labels;
    LabelCounts counts;
};

struct RowError {
    std::size_t row = 0;
    std::string message;
};

struct ImportReport {
    std::size_t applied = 0;
    std::vector<RowError> errors;
    std::vector<std::string> created_categories;
    std::map<std::string, LabelCounts> counts;
    std::uint64_t seq = 0;
};

/// Workspaces persisted under `<root>/workspaces/<id>/`: `workspace.json`
/// holds the dataset binding and `log.jsonl` the append-only record log
/// (category definitions, label records, training marks). State is rebuilt
/// by replaying the log on construction.
class WorkspaceStore {
public:
    WorkspaceStore(std::filesystem::path root, std::shared_ptr<corpus::DatasetCatalog> datasets);
    ~WorkspaceStore();

    Workspace create_workspace(std::string_view dataset_name, std::string_view workspace_id);
    Workspace workspace(std::string_view workspace_id) const;
    std::vector<std::string> workspace_ids() const;
    std::shared_ptr<const corpus::IndexedDataset> dataset(std::string_view workspace_id) const;

    Category add_category(std::string_view workspace_id, std::string_view name, std::string_view description = {});
    /// Resolve a category by id or name.
    Category category(std::string_view workspace_id, std::string_view id_or_name) const;

    LabelCounts set_label(std::string_view workspace_id, std::string_view category, std::string_view element_id,
                          LabelValue value, LabelSource source = LabelSource::user, std::uint64_t iteration = 0);

    /// Append many records atomically with respect to other writers.
    std::uint64_t append_labels(std::string_view workspace_id, std::string_view category,
                                const std::vector<std::pair<std::string, LabelValue>>& labels, LabelSource source,
                                std::uint64_t iteration = 0);

    LabelMap current_labels(std::string_view workspace_id, std::string_view category) const;
    LabelCounts counts(std::string_view workspace_id, std::string_view category) const;
    LabelSnapshot snapshot(std::string_view workspace_id, std::string_view category) const;
    std::uint64_t seq(std::string_view workspace_id) const;

    /// Record that a training run consumed every label up to `through_seq`.
    void mark_trained(std::string_view workspace_id, std::string_view category, std::uint64_t through_seq);

    ImportReport import_labels(std::string_view workspace_id, std::string_view csv_bytes);
    std::string export_labels(std::string_view workspace_id) const;

    std::vector<LabelRecord> records(std::string_view workspace_id) const;

private:
    struct State;
    State& state(std::string_view workspace_id) const;

    std::filesystem::path root_;
    std::shared_ptr<corpus::DatasetCatalog> datasets_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::unique_ptr<State>, std::less<>> workspaces_;
};

} // namespace labelkit::store
