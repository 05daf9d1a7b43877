#include "labelkit/registry.hpp"

#include "labelkit/error.hpp"
#include "labelkit/fsutil.hpp"

#include <chrono>
#include <json.hpp>
#include <spdlog/spdlog.h>

namespace labelkit::registry {

using nlohmann::json;

std::string_view to_string(ModelStatus s) {
    switch (s) {
    case ModelStatus::training: return "training";
    case ModelStatus::ready: return "ready";
    case ModelStatus::failed: return "failed";
    }
    return "failed";
}

ModelStatus parse_model_status(std::string_view s) {
    if (s == "training") return ModelStatus::training;
    if (s == "ready") return ModelStatus::ready;
    if (s == "failed") return ModelStatus::failed;
    fail(ErrorCode::InvalidArgument, "unknown model status '" + std::string(s) + "'");
}

std::string make_model_id(std::string_view category_id, std::uint64_t iteration) {
    return std::string(category_id) + "-" + std::to_string(iteration);
}

namespace {

json to_json(const ModelRecord& r) {
    return {{"model_id", r.model_id},
            {"workspace_id", r.workspace_id},
            {"category_id", r.category_id},
            {"iteration", r.iteration},
            {"status", to_string(r.status)},
            {"flavor", r.flavor},
            {"train_set_size", r.train_set_size},
            {"created_at_ns", r.created_at_ns},
            {"label_seq", r.label_seq},
            {"error", r.error}};
}

ModelRecord record_from_json(const json& j) {
    ModelRecord r;
    r.model_id = j.at("model_id");
    r.workspace_id = j.at("workspace_id");
    r.category_id = j.at("category_id");
    r.iteration = j.at("iteration");
    r.status = parse_model_status(j.at("status").get<std::string>());
    r.flavor = j.at("flavor");
    r.train_set_size = j.at("train_set_size");
    r.created_at_ns = j.at("created_at_ns");
    r.label_seq = j.at("label_seq");
    r.error = j.value("error", "");
    return r;
}

std::int64_t now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

} // namespace

ModelRegistry::ModelRegistry(std::filesystem::path root, std::shared_ptr<const store::WorkspaceStore> store,
                             std::shared_ptr<const learning::EmbeddingTable> embeddings)
    : root_(std::move(root)), store_(std::move(store)), embeddings_(std::move(embeddings)) {
    if (!store_) labelkit::fail(ErrorCode::InvalidArgument, "registry needs a workspace store");
    load_existing();
}

std::filesystem::path ModelRegistry::models_root(std::string_view workspace_id) const {
    return root_ / "workspaces" / std::string(workspace_id) / "models";
}

std::filesystem::path ModelRegistry::model_dir(const ModelRecord& record) const {
    return models_root(record.workspace_id) / record.model_id;
}

void ModelRegistry::write_meta(const ModelRecord& record) const {
    const auto dir = model_dir(record);
    std::filesystem::create_directories(dir);
    fsutil::write_file_atomic(dir / "meta.json", to_json(record).dump(2));
}

void ModelRegistry::load_existing() {
    const auto workspaces = root_ / "workspaces";
    if (!std::filesystem::exists(workspaces)) return;
    for (const auto& ws_entry : std::filesystem::directory_iterator(workspaces)) {
        const auto models = ws_entry.path() / "models";
        if (!std::filesystem::is_directory(models)) continue;
        for (const auto& entry : std::filesystem::directory_iterator(models)) {
            const auto meta = entry.path() / "meta.json";
            if (!entry.is_directory() || !std::filesystem::exists(meta)) continue;
            ModelRecord r;
            try {
                r = record_from_json(json::parse(fsutil::read_file(meta)));
            } catch (const std::exception& e) {
                spdlog::error("skipping unreadable model metadata {}: {}", meta.string(), e.what());
                continue;
            }
            if (r.status == ModelStatus::training) {
                r.status = ModelStatus::failed;
                r.error = "interrupted by restart";
                write_meta(r);
                spdlog::warn("model {} in workspace {} was training at shutdown; marked failed", r.model_id,
                             r.workspace_id);
            }
            slots_[{r.workspace_id, r.category_id}].records[r.iteration] = r;
        }
        for (const auto& entry : std::filesystem::directory_iterator(models)) {
            const auto name = entry.path().filename().string();
            if (!entry.is_regular_file() || !name.starts_with("active-") || !name.ends_with(".json")) continue;
            try {
                const auto j = json::parse(fsutil::read_file(entry.path()));
                const std::string ws = j.at("workspace_id");
                const std::string cat = j.at("category_id");
                const std::uint64_t iteration = j.at("iteration");
                auto& slot = slots_[{ws, cat}];
                const auto it = slot.records.find(iteration);
                if (it == slot.records.end() || it->second.status != ModelStatus::ready) {
                    spdlog::error("active model {} of workspace {} is not a ready model; ignored",
                                  make_model_id(cat, iteration), ws);
                    continue;
                }
                auto classifier = learning::EnsembleModel::load(model_dir(it->second), embeddings_);
                slot.active = build_active(it->second, std::move(classifier),
                                           j.at("label_next").get<std::vector<std::string>>(), {});
            } catch (const std::exception& e) {
                spdlog::error("could not restore active model from {}: {}", entry.path().string(), e.what());
            }
        }
    }
}

std::shared_ptr<const ActiveModel> ModelRegistry::build_active(const ModelRecord& record,
                                                               std::shared_ptr<const learning::Classifier> classifier,
                                                               std::vector<std::string> label_next,
                                                               const LabelNextFn& fn) const {
    const auto dataset = store_->dataset(record.workspace_id);
    auto active = std::make_shared<ActiveModel>();
    active->record = record;
    active->predictions.reserve(dataset->size());
    for (std::size_t i = 0; i < dataset->size(); ++i) active->predictions.push_back(classifier->predict(dataset->tokens(i)));
    active->classifier = std::move(classifier);
    active->label_next = fn ? fn(active->predictions) : std::move(label_next);
    return active;
}

ModelRecord ModelRegistry::begin_training(std::string_view workspace_id, std::string_view category_id,
                                          std::string_view flavor, std::uint64_t label_seq) {
    std::lock_guard lock(mutex_);
    auto& slot = slots_[{std::string(workspace_id), std::string(category_id)}];
    for (const auto& [_, r] : slot.records) {
        if (r.status == ModelStatus::training) {
            labelkit::fail(ErrorCode::InvalidArgument, "model " + r.model_id + " is already training");
        }
    }
    ModelRecord r;
    r.iteration = slot.records.empty() ? 1 : slot.records.rbegin()->first + 1;
    r.model_id = make_model_id(category_id, r.iteration);
    r.workspace_id = workspace_id;
    r.category_id = category_id;
    r.flavor = flavor;
    r.status = ModelStatus::training;
    r.created_at_ns = now_ns();
    r.label_seq = label_seq;
    write_meta(r);
    slot.records[r.iteration] = r;
    return r;
}

ModelRecord ModelRegistry::complete(const ModelRecord& record, const learning::Classifier& classifier,
                                    std::size_t train_set_size) {
    auto r = this->record(record.workspace_id, record.category_id, record.iteration);
    if (r.status != ModelStatus::training) labelkit::fail(ErrorCode::InvalidArgument, "model " + r.model_id + " is not training");
    const auto dir = model_dir(r);
    std::filesystem::create_directories(dir);
    classifier.save(dir);
    r.status = ModelStatus::ready;
    r.train_set_size = train_set_size;
    write_meta(r);
    std::lock_guard lock(mutex_);
    slots_[{r.workspace_id, r.category_id}].records[r.iteration] = r;
    return r;
}

ModelRecord ModelRegistry::fail(const ModelRecord& record, std::string_view message) {
    auto r = this->record(record.workspace_id, record.category_id, record.iteration);
    r.status = ModelStatus::failed;
    r.error = message;
    write_meta(r);
    std::lock_guard lock(mutex_);
    slots_[{r.workspace_id, r.category_id}].records[r.iteration] = r;
    return r;
}

std::shared_ptr<const ActiveModel> ModelRegistry::activate(std::string_view workspace_id,
                                                           std::string_view category_id, std::uint64_t iteration,
                                                           const LabelNextFn& label_next) {
    const auto r = record(workspace_id, category_id, iteration);
    if (r.status != ModelStatus::ready) {
        labelkit::fail(ErrorCode::ModelNotReady, "model " + r.model_id + " is " + std::string(to_string(r.status)));
    }
    auto active = build_active(r, load_classifier(workspace_id, category_id, iteration), {}, label_next);
    fsutil::write_file_atomic(models_root(workspace_id) / ("active-" + std::string(category_id) + ".json"),
                              json{{"workspace_id", r.workspace_id},
                                   {"category_id", r.category_id},
                                   {"iteration", r.iteration},
                                   {"model_id", r.model_id},
                                   {"label_next", active->label_next}}
                                  .dump(2));
    std::lock_guard lock(mutex_);
    slots_[{r.workspace_id, r.category_id}].active = active;
    return active;
}

std::shared_ptr<const ActiveModel> ModelRegistry::active(std::string_view workspace_id,
                                                         std::string_view category_id) const {
    std::lock_guard lock(mutex_);
    const auto it = slots_.find({std::string(workspace_id), std::string(category_id)});
    return it == slots_.end() ? nullptr : it->second.active;
}

std::vector<ModelRecord> ModelRegistry::models(std::string_view workspace_id, std::string_view category_id) const {
    std::lock_guard lock(mutex_);
    std::vector<ModelRecord> out;
    const auto it = slots_.find({std::string(workspace_id), std::string(category_id)});
    if (it == slots_.end()) return out;
    for (const auto& [_, r] : it->second.records) out.push_back(r);
    return out;
}

ModelRecord ModelRegistry::record(std::string_view workspace_id, std::string_view category_id,
                                  std::uint64_t iteration) const {
    std::lock_guard lock(mutex_);
    const auto it = slots_.find({std::string(workspace_id), std::string(category_id)});
    if (it != slots_.end()) {
        const auto r = it->second.records.find(iteration);
        if (r != it->second.records.end()) return r->second;
    }
    labelkit::fail(ErrorCode::UnknownModel, "no model " + make_model_id(category_id, iteration) + " in workspace " +
                                                std::string(workspace_id));
}

std::shared_ptr<const learning::Classifier> ModelRegistry::load_classifier(std::string_view workspace_id,
                                                                           std::string_view category_id,
                                                                           std::uint64_t iteration) const {
    const auto r = record(workspace_id, category_id, iteration);
    if (r.status != ModelStatus::ready) {
        labelkit::fail(ErrorCode::ModelNotReady, "model " + r.model_id + " is " + std::string(to_string(r.status)));
    }
    return learning::EnsembleModel::load(model_dir(r), embeddings_);
}

} // namespace labelkit::registry
