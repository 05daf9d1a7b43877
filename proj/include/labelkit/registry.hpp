#pragma once

#include "labelkit/learning.hpp"
#include "labelkit/store.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace labelkit::registry {

enum class ModelStatus { training, ready, failed };

std::string_view to_string(ModelStatus s);
ModelStatus parse_model_status(std::string_view s);

struct ModelRecord {
    std::string model_id;
    std::string workspace_id;
    std::string category_id;
    std::uint64_t iteration = 0;
    ModelStatus status = ModelStatus::training;
    std::string flavor;
    std::size_t train_set_size = 0;
    std::int64_t created_at_ns = 0;
    /// Label-log seq of the snapshot the model was trained on.
    std::uint64_t label_seq = 0;
    std::string error;

    bool operator==(const ModelRecord&) const = default;
};

/// An activated model with its prediction cache over the whole dataset.
struct ActiveModel {
    ModelRecord record;
    std::shared_ptr<const learning::Classifier> classifier;
    /// Indexed like the workspace dataset's elements.
    std::vector<learning::Prediction> predictions;
    /// Label Next list, frozen at activation.
    std::vector<std::string> label_next;
};

/// Builds the Label Next list from the fresh prediction cache.
using LabelNextFn = std::function<std::vector<std::string>(const std::vector<learning::Prediction>&)>;

/// Versioned models under `<root>/workspaces/<ws>/models/`. One directory per
/// model id holds meta.json, params.json and vocabulary.txt; the active model
/// per category is named by `active-<category>.json`.
class ModelRegistry {
public:
    /// Loads existing records. Models still marked training (a crash
    /// interrupted them) become failed; active models are reloaded and their
    /// caches recomputed.
    ModelRegistry(std::filesystem::path root, std::shared_ptr<const store::WorkspaceStore> store,
                  std::shared_ptr<const learning::EmbeddingTable> embeddings);

    /// Allocate the next iteration for (workspace, category). Throws
    /// InvalidArgument when a model for the pair is already training.
    ModelRecord begin_training(std::string_view workspace_id, std::string_view category_id, std::string_view flavor,
                               std::uint64_t label_seq);
    ModelRecord complete(const ModelRecord& record, const learning::Classifier& classifier,
                         std::size_t train_set_size);
    ModelRecord fail(const ModelRecord& record, std::string_view message);

    /// Compute the prediction cache, persist the activation, then swap the
    /// current model. ModelNotReady unless the model is ready.
    std::shared_ptr<const ActiveModel> activate(std::string_view workspace_id, std::string_view category_id,
                                                std::uint64_t iteration, const LabelNextFn& label_next = {});

    /// Null when no model has been activated.
    std::shared_ptr<const ActiveModel> active(std::string_view workspace_id, std::string_view category_id) const;

    std::vector<ModelRecord> models(std::string_view workspace_id, std::string_view category_id) const;
    ModelRecord record(std::string_view workspace_id, std::string_view category_id, std::uint64_t iteration) const;
    std::shared_ptr<const learning::Classifier> load_classifier(std::string_view workspace_id,
                                                                std::string_view category_id,
                                                                std::uint64_t iteration) const;

    std::filesystem::path model_dir(const ModelRecord& record) const;

private:
    using Key = std::pair<std::string, std::string>;
    struct Slot {
        std::map<std::uint64_t, ModelRecord> records;
        std::shared_ptr<const ActiveModel> active;
    };

    std::filesystem::path models_root(std::string_view workspace_id) const;
    void write_meta(const ModelRecord& record) const;
    void load_existing();
    std::shared_ptr<const ActiveModel> build_active(const ModelRecord& record,
                                                    std::shared_ptr<const learning::Classifier> classifier,
                                                    std::vector<std::string> label_next,
                                                    const LabelNextFn& fn) const;

    std::filesystem::path root_;
    std::shared_ptr<const store::WorkspaceStore> store_;
    std::shared_ptr<const learning::EmbeddingTable> embeddings_;
    mutable std::mutex mutex_;
    std::map<Key, Slot> slots_;
};

/// Model id for an iteration: `<category>-<iteration>`.
std::string make_model_id(std::string_view category_id, std::uint64_t iteration);

} // namespace labelkit::registry
