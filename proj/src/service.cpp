#include "labelkit/service.hpp"

#include "labelkit/fsutil.hpp"
#include "labelkit/random.hpp"

#include <algorithm>
#include <cstdlib>
#include <spdlog/spdlog.h>

namespace labelkit::service {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Configuration

std::optional<std::string> getenv_lookup(std::string_view name) {
    const char* v = std::getenv(std::string(name).c_str());
    if (!v) return std::nullopt;
    return std::string(v);
}

namespace {

template <typename T>
void read_field(const json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(ErrorCode::InvalidArgument, std::string("bad value for '") + key + "': " + e.what());
    }
}

std::size_t parse_count(std::string_view name, const std::string& v) {
    try {
        std::size_t used = 0;
        const auto n = std::stoull(v, &used);
        if (used == v.size()) return n;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::InvalidArgument, std::string(name) + " must be a non-negative integer, got '" + v + "'");
}

double parse_real(std::string_view name, const std::string& v) {
    try {
        std::size_t used = 0;
        const auto x = std::stod(v, &used);
        if (used == v.size()) return x;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::InvalidArgument, std::string(name) + " must be a number, got '" + v + "'");
}

std::int64_t now_ns() {
    return std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

} // namespace

policy::PolicyConfig apply_policy_overrides(policy::PolicyConfig base, const json& o) {
    if (!o.is_object()) fail(ErrorCode::InvalidArgument, "policy overrides must be an object");
    read_field(o, "first_model_positive_threshold", base.first_model_positive_threshold);
    read_field(o, "retrain_label_delta", base.retrain_label_delta);
    read_field(o, "negative_ratio", base.negative_ratio);
    read_field(o, "precision_sample_size", base.precision_sample_size);
    read_field(o, "label_next_size", base.label_next_size);
    read_field(o, "seed", base.seed);
    if (o.contains("al_strategy")) base.al_strategy = policy::parse_strategy(o.at("al_strategy").get<std::string>());
    if (o.contains("model_schedule")) base.model_schedule = policy::parse_schedule(o.at("model_schedule").get<std::string>());
    base.validate();
    return base;
}

json policy_to_json(const policy::PolicyConfig& c) {
    return {{"first_model_positive_threshold", c.first_model_positive_threshold},
            {"retrain_label_delta", c.retrain_label_delta},
            {"negative_ratio", c.negative_ratio},
            {"precision_sample_size", c.precision_sample_size},
            {"al_strategy", policy::to_string(c.al_strategy)},
            {"model_schedule", policy::format_schedule(c.model_schedule)},
            {"label_next_size", c.label_next_size},
            {"seed", c.seed}};
}

ServiceConfig load_service_config(const std::optional<std::filesystem::path>& config_file, const EnvLookup& env) {
    ServiceConfig cfg;
    if (config_file) {
        json j;
        try {
            j = json::parse(fsutil::read_file(*config_file));
        } catch (const json::exception& e) {
            fail(ErrorCode::InvalidArgument, "config file " + config_file->string() + ": " + e.what());
        }
        if (j.contains("data_root")) cfg.data_root = j.at("data_root").get<std::string>();
        read_field(j, "host", cfg.host);
        read_field(j, "port", cfg.port);
        if (j.contains("embeddings")) cfg.embeddings_path = j.at("embeddings").get<std::string>();
        read_field(j, "max_features", cfg.max_features);
        read_field(j, "cv_folds", cfg.cv_folds);
        read_field(j, "suspect_limit", cfg.suspect_limit);
        read_field(j, "pair_limit", cfg.pair_limit);
        if (j.contains("svm")) {
            read_field(j.at("svm"), "lambda", cfg.hyper.lambda);
            read_field(j.at("svm"), "epochs", cfg.hyper.epochs);
        }
        if (j.contains("policy")) cfg.policy = apply_policy_overrides(cfg.policy, j.at("policy"));
    }

    if (auto v = env("LABELKIT_DATA_ROOT")) cfg.data_root = *v;
    if (auto v = env("LABELKIT_HOST")) cfg.host = *v;
    if (auto v = env("LABELKIT_PORT")) cfg.port = static_cast<int>(parse_count("LABELKIT_PORT", *v));
    if (auto v = env("LABELKIT_EMBEDDINGS")) cfg.embeddings_path = *v;
    if (auto v = env("LABELKIT_MAX_FEATURES")) cfg.max_features = parse_count("LABELKIT_MAX_FEATURES", *v);

    json overrides = json::object();
    for (const char* count : {"first_model_positive_threshold", "retrain_label_delta", "precision_sample_size",
                              "label_next_size", "seed"}) {
        std::string name = "LABELKIT_";
        for (const char* c = count; *c; ++c) name += static_cast<char>(std::toupper(static_cast<unsigned char>(*c)));
        if (auto v = env(name)) overrides[count] = parse_count(name, *v);
    }
    if (auto v = env("LABELKIT_NEGATIVE_RATIO")) overrides["negative_ratio"] = parse_real("LABELKIT_NEGATIVE_RATIO", *v);
    if (auto v = env("LABELKIT_AL_STRATEGY")) overrides["al_strategy"] = *v;
    if (auto v = env("LABELKIT_MODEL_SCHEDULE")) overrides["model_schedule"] = *v;
    cfg.policy = apply_policy_overrides(cfg.policy, overrides);

    if (cfg.port < 0 || cfg.port > 65535) fail(ErrorCode::InvalidArgument, "port out of range");
    if (cfg.cv_folds < 2) fail(ErrorCode::InvalidArgument, "cv_folds must be at least 2");
    return cfg;
}

// ---------------------------------------------------------------------------
// Events

std::string_view to_string(EventKind k) {
    switch (k) {
    case EventKind::model_training_started: return "model_training_started";
    case EventKind::model_ready: return "model_ready";
    case EventKind::model_failed: return "model_failed";
    case EventKind::evaluation_ready: return "evaluation_ready";
    }
    return "unknown";
}

json to_json(const Event& e) {
    json j{{"id", e.id},
           {"kind", to_string(e.kind)},
           {"workspace_id", e.workspace_id},
           {"category_id", e.category_id},
           {"iteration", e.iteration},
           {"timestamp_ns", e.timestamp_ns}};
    if (!e.message.empty()) j["message"] = e.message;
    return j;
}

Event EventBus::publish(Event e) {
    {
        std::lock_guard lock(mutex_);
        e.id = next_id_++;
        e.timestamp_ns = now_ns();
        events_.push_back(e);
        while (events_.size() > history_) events_.pop_front();
    }
    cv_.notify_all();
    spdlog::info("event {} {} {}/{} iteration {}", e.id, to_string(e.kind), e.workspace_id, e.category_id,
                 e.iteration);
    return e;
}

std::vector<Event> EventBus::since(std::uint64_t after_id) const {
    std::lock_guard lock(mutex_);
    std::vector<Event> out;
    for (const auto& e : events_) {
        if (e.id > after_id) out.push_back(e);
    }
    return out;
}

std::vector<Event> EventBus::wait(std::uint64_t after_id, std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, timeout, [&] { return closed_ || next_id_ - 1 > after_id; });
    std::vector<Event> out;
    for (const auto& e : events_) {
        if (e.id > after_id) out.push_back(e);
    }
    return out;
}

std::uint64_t EventBus::last_id() const {
    std::lock_guard lock(mutex_);
    return next_id_ - 1;
}

void EventBus::close() {
    {
        std::lock_guard lock(mutex_);
        closed_ = true;
    }
    cv_.notify_all();
}

bool EventBus::closed() const {
    std::lock_guard lock(mutex_);
    return closed_;
}

// ---------------------------------------------------------------------------
// Application

namespace {

bool is_human(const store::CurrentLabel& l) { return l.source != store::LabelSource::weak_negative; }

json session_to_json(const eval::PrecisionEvalSession& s) {
    json received = json::object();
    for (const auto& [id, v] : s.received) received[id] = v;
    return {{"session_id", s.session_id},
            {"workspace_id", s.workspace_id},
            {"category_id", s.category_id},
            {"model_iteration", s.model_iteration},
            {"sampled", s.sampled},
            {"received", received},
            {"complete", s.complete},
            {"short_sample", s.short_sample},
            {"requested", s.requested},
            {"precision", s.precision ? json(*s.precision) : json(nullptr)}};
}

eval::PrecisionEvalSession session_from_json(const json& j) {
    eval::PrecisionEvalSession s;
    s.session_id = j.at("session_id");
    s.workspace_id = j.at("workspace_id");
    s.category_id = j.at("category_id");
    s.model_iteration = j.at("model_iteration");
    s.sampled = j.at("sampled").get<std::vector<std::string>>();
    for (const auto& [id, v] : j.at("received").items()) s.received[id] = v.get<bool>();
    s.complete = j.at("complete");
    s.short_sample = j.at("short_sample");
    s.requested = j.at("requested");
    if (!j.at("precision").is_null()) s.precision = j.at("precision").get<double>();
    return s;
}

std::uint64_t session_number(std::string_view id) {
    if (id.size() < 2 || id[0] != 'e') return 0;
    try {
        return std::stoull(std::string(id.substr(1)));
    } catch (const std::exception&) {
        return 0;
    }
}

} // namespace

Application::Application(ServiceConfig config) : config_(std::move(config)) {
    config_.policy.validate();
    std::filesystem::create_directories(config_.data_root);
    if (config_.embeddings_path) {
        embeddings_ = std::make_shared<const learning::EmbeddingTable>(learning::EmbeddingTable::load(*config_.embeddings_path));
        spdlog::info("loaded {} word vectors of dimension {}", embeddings_->size(), embeddings_->dim());
    } else {
        spdlog::warn("no embedding file configured; heavy models and contradiction search are degraded");
    }
    catalog_ = std::make_shared<corpus::DatasetCatalog>(config_.data_root);
    store_ = std::make_shared<store::WorkspaceStore>(config_.data_root, catalog_);
    registry_ = std::make_unique<registry::ModelRegistry>(config_.data_root, store_, embeddings_);
    trainers_["light"] = learning::make_light_trainer(config_.hyper, config_.max_features);
    trainers_["heavy"] = learning::make_heavy_trainer(config_.hyper, embeddings_, config_.max_features);
    load_sessions();
    worker_ = std::thread([this] { worker_loop(); });

    // Labels may have crossed a trigger while the previous process was down
    // or mid-training.
    for (const auto& ws : store_->workspace_ids()) {
        for (const auto& c : store_->workspace(ws).categories) maybe_schedule(ws, c.category_id);
    }
}

Application::~Application() {
    {
        std::lock_guard lock(work_mutex_);
        stopping_ = true;
        queue_.clear();
    }
    work_cv_.notify_all();
    idle_cv_.notify_all();
    events_.close();
    if (worker_.joinable()) worker_.join();
}

corpus::DatasetCatalog::Added Application::add_dataset(std::string_view name, std::string_view csv_bytes) {
    return catalog_->add(name, csv_bytes);
}

std::vector<std::string> Application::datasets() const { return catalog_->names(); }

store::Workspace Application::create_workspace(std::string_view dataset_name, std::string_view workspace_id) {
    return store_->create_workspace(dataset_name, workspace_id);
}

store::Workspace Application::workspace(std::string_view workspace_id) const { return store_->workspace(workspace_id); }

store::Category Application::add_category(std::string_view workspace_id, std::string_view name,
                                          std::string_view description) {
    return store_->add_category(workspace_id, name, description);
}

store::Category Application::resolve_category(std::string_view workspace_id, std::string_view category) const {
    if (!category.empty()) return store_->category(workspace_id, category);
    const auto ws = store_->workspace(workspace_id);
    if (ws.categories.size() == 1) return ws.categories.front();
    if (ws.categories.empty()) fail(ErrorCode::UnknownCategory, "workspace " + ws.workspace_id + " has no categories");
    fail(ErrorCode::InvalidArgument, "workspace " + ws.workspace_id + " has several categories; name one");
}

policy::PolicyConfig Application::policy(std::string_view workspace_id) const {
    std::lock_guard lock(policy_mutex_);
    const auto it = policies_.find(workspace_id);
    if (it != policies_.end()) return it->second;
    auto cfg = config_.policy;
    const auto path = config_.data_root / "workspaces" / std::string(workspace_id) / "policy.json";
    if (std::filesystem::exists(path)) {
        try {
            cfg = apply_policy_overrides(cfg, json::parse(fsutil::read_file(path)));
        } catch (const std::exception& e) {
            spdlog::error("ignoring unreadable policy overrides {}: {}", path.string(), e.what());
        }
    }
    return cfg;
}

policy::PolicyConfig Application::set_policy(std::string_view workspace_id, const json& overrides) {
    store_->workspace(workspace_id);
    const auto path = config_.data_root / "workspaces" / std::string(workspace_id) / "policy.json";
    json stored = json::object();
    if (std::filesystem::exists(path)) stored = json::parse(fsutil::read_file(path));
    for (const auto& [k, v] : overrides.items()) stored[k] = v;
    const auto cfg = apply_policy_overrides(config_.policy, stored);
    fsutil::write_file_atomic(path, stored.dump(2));
    {
        std::lock_guard lock(policy_mutex_);
        policies_[std::string(workspace_id)] = cfg;
    }
    for (const auto& c : store_->workspace(workspace_id).categories) maybe_schedule(workspace_id, c.category_id);
    return cfg;
}

WorkspaceStatus Application::set_label(std::string_view workspace_id, std::string_view category,
                                       std::string_view element_id, store::LabelValue value) {
    const auto cat = resolve_category(workspace_id, category);
    store_->set_label(workspace_id, cat.category_id, element_id, value, store::LabelSource::user);
    maybe_schedule(workspace_id, cat.category_id);
    return status(workspace_id, cat.category_id);
}

WorkspaceStatus Application::status(std::string_view workspace_id, std::string_view category) const {
    const auto cat = resolve_category(workspace_id, category);
    WorkspaceStatus s;
    s.workspace_id = workspace_id;
    s.category_id = cat.category_id;
    const auto snap = store_->snapshot(workspace_id, cat.category_id);
    s.counts = snap.counts;
    s.seq = snap.seq;
    const auto active = registry_->active(workspace_id, cat.category_id);
    if (active) s.active_model = active->record;
    const auto all = registry_->models(workspace_id, cat.category_id);
    if (!all.empty()) s.latest_model = all.back();
    s.progress = policy::training_progress(s.counts, active != nullptr, policy(workspace_id));
    std::lock_guard lock(work_mutex_);
    const Key key{std::string(workspace_id), cat.category_id};
    s.training_in_flight = running_ == key;
    s.pending_tasks = queue_.size() + (running_ ? 1 : 0);
    return s;
}

std::vector<ElementView> Application::views(std::string_view workspace_id, const std::string& category_id,
                                            const std::vector<std::size_t>& indices, const store::LabelMap& labels,
                                            const registry::ActiveModel* model) const {
    (void)category_id;
    const auto dataset = store_->dataset(workspace_id);
    std::vector<ElementView> out;
    out.reserve(indices.size());
    for (const auto i : indices) {
        const auto& e = dataset->element(i);
        ElementView v{e.element_id, e.doc_id, e.position, e.text, std::nullopt, std::nullopt, 0};
        const auto l = labels.find(e.element_id);
        if (l != labels.end() && is_human(l->second)) v.label = l->second.positive;
        if (model && i < model->predictions.size()) v.prediction = model->predictions[i];
        out.push_back(std::move(v));
    }
    return out;
}

ElementList Application::document(std::string_view workspace_id, std::string_view category,
                                  std::string_view doc_id) const {
    const auto dataset = store_->dataset(workspace_id);
    const auto* doc = dataset->document(doc_id);
    if (!doc) fail(ErrorCode::UnknownDocument, "no document '" + std::string(doc_id) + "'");
    const auto cat = resolve_category(workspace_id, category);
    const auto snap = store_->snapshot(workspace_id, cat.category_id);
    const auto active = registry_->active(workspace_id, cat.category_id);
    std::vector<std::size_t> indices;
    for (const auto& e : doc->elements) indices.push_back(*dataset->find(e.element_id));
    ElementList out;
    out.seq = snap.seq;
    out.category_id = cat.category_id;
    if (active) out.model_iteration = active->record.iteration;
    out.items = views(workspace_id, cat.category_id, indices, snap.labels, active.get());
    out.total = out.items.size();
    return out;
}

ElementList Application::search(std::string_view workspace_id, std::string_view category, std::string_view query,
                                std::size_t limit) const {
    const auto dataset = store_->dataset(workspace_id);
    const auto q = corpus::parse_query(query);
    const auto cat = resolve_category(workspace_id, category);
    const auto snap = store_->snapshot(workspace_id, cat.category_id);
    const auto active = registry_->active(workspace_id, cat.category_id);
    const auto all_hits = dataset->search(q, dataset->size());
    std::vector<std::size_t> indices;
    for (std::size_t i = 0; i < all_hits.size() && i < limit; ++i) indices.push_back(all_hits[i].element_index);
    ElementList out;
    out.seq = snap.seq;
    out.category_id = cat.category_id;
    if (active) out.model_iteration = active->record.iteration;
    out.total = all_hits.size();
    out.items = views(workspace_id, cat.category_id, indices, snap.labels, active.get());
    for (std::size_t i = 0; i < out.items.size(); ++i) out.items[i].match_count = all_hits[i].match_count;
    return out;
}

ElementList Application::label_next(std::string_view workspace_id, std::string_view category) const {
    const auto dataset = store_->dataset(workspace_id);
    const auto cat = resolve_category(workspace_id, category);
    const auto snap = store_->snapshot(workspace_id, cat.category_id);
    const auto active = registry_->active(workspace_id, cat.category_id);
    ElementList out;
    out.seq = snap.seq;
    out.category_id = cat.category_id;
    if (!active) return out;
    out.model_iteration = active->record.iteration;
    std::vector<std::size_t> indices;
    for (const auto& id : active->label_next) {
        if (const auto i = dataset->find(id)) indices.push_back(*i);
    }
    out.items = views(workspace_id, cat.category_id, indices, snap.labels, active.get());
    out.total = out.items.size();
    return out;
}

ElementList Application::positive_predictions(std::string_view workspace_id, std::string_view category,
                                              std::size_t offset, std::size_t limit) const {
    const auto dataset = store_->dataset(workspace_id);
    const auto cat = resolve_category(workspace_id, category);
    const auto snap = store_->snapshot(workspace_id, cat.category_id);
    const auto active = registry_->active(workspace_id, cat.category_id);
    if (!active) fail(ErrorCode::NoModel, "no model has been trained for category " + cat.name);
    std::vector<std::size_t> positives;
    for (std::size_t i = 0; i < active->predictions.size(); ++i) {
        if (active->predictions[i].predicted_positive) positives.push_back(i);
    }
    std::stable_sort(positives.begin(), positives.end(), [&](std::size_t a, std::size_t b) {
        const double pa = active->predictions[a].probability, pb = active->predictions[b].probability;
        if (pa != pb) return pa > pb;
        return dataset->element(a).element_id < dataset->element(b).element_id;
    });
    ElementList out;
    out.seq = snap.seq;
    out.category_id = cat.category_id;
    out.model_iteration = active->record.iteration;
    out.total = positives.size();
    const auto begin = std::min(offset, positives.size());
    const auto end = std::min(positives.size(), begin + limit);
    out.items = views(workspace_id, cat.category_id,
                      std::vector<std::size_t>(positives.begin() + static_cast<std::ptrdiff_t>(begin),
                                               positives.begin() + static_cast<std::ptrdiff_t>(end)),
                      snap.labels, active.get());
    return out;
}

// ---------------------------------------------------------------------------
// Precision evaluation

void Application::persist_session(const eval::PrecisionEvalSession& s) const {
    const auto dir = config_.data_root / "workspaces" / s.workspace_id / "evaluations";
    std::filesystem::create_directories(dir);
    fsutil::write_file_atomic(dir / (s.session_id + ".json"), session_to_json(s).dump(2));
}

void Application::load_sessions() {
    for (const auto& ws : store_->workspace_ids()) {
        const auto dir = config_.data_root / "workspaces" / ws / "evaluations";
        if (!std::filesystem::is_directory(dir)) continue;
        for (const auto& entry : std::filesystem::directory_iterator(dir)) {
            if (entry.path().extension() != ".json") continue;
            try {
                auto s = session_from_json(json::parse(fsutil::read_file(entry.path())));
                sessions_[ws][s.session_id] = std::move(s);
            } catch (const std::exception& e) {
                spdlog::error("skipping unreadable evaluation session {}: {}", entry.path().string(), e.what());
            }
        }
    }
}

eval::PrecisionEvalSession Application::start_evaluation(std::string_view workspace_id, std::string_view category,
                                                         std::optional<std::size_t> sample_size) {
    const auto dataset = store_->dataset(workspace_id);
    const auto cat = resolve_category(workspace_id, category);
    const auto active = registry_->active(workspace_id, cat.category_id);
    if (!active) fail(ErrorCode::NoModel, "no model has been trained for category " + cat.name);
    const auto pc = policy(workspace_id);
    const auto n = sample_size.value_or(pc.precision_sample_size);
    if (n < 1) fail(ErrorCode::InvalidArgument, "sample size must be at least 1");

    std::vector<std::string> positives;
    for (std::size_t i = 0; i < active->predictions.size(); ++i) {
        if (active->predictions[i].predicted_positive) positives.push_back(dataset->element(i).element_id);
    }

    std::lock_guard lock(eval_mutex_);
    auto& sessions = sessions_[std::string(workspace_id)];
    std::set<std::string> excluded;
    std::uint64_t last = 0;
    for (const auto& [id, s] : sessions) {
        last = std::max(last, session_number(id));
        if (s.complete && s.category_id == cat.category_id && s.model_iteration == active->record.iteration) {
            for (const auto& [e, _] : s.received) excluded.insert(e);
        }
    }
    eval::PrecisionEvalSession s;
    s.session_id = "e" + std::to_string(last + 1);
    s.workspace_id = workspace_id;
    s.category_id = cat.category_id;
    s.model_iteration = active->record.iteration;
    s.requested = n;
    s.sampled = eval::sample_for_precision(positives, excluded, n, mix_seed(pc.seed, 5000 + last + 1));
    s.short_sample = s.sampled.size() < n;
    persist_session(s);
    sessions[s.session_id] = s;
    return s;
}

EvaluationResult Application::submit_evaluation(std::string_view workspace_id, std::string_view session_id,
                                                const std::map<std::string, bool>& labels) {
    EvaluationResult result;
    {
        std::lock_guard lock(eval_mutex_);
        auto& sessions = sessions_[std::string(workspace_id)];
        const auto it = sessions.find(std::string(session_id));
        if (it == sessions.end()) fail(ErrorCode::UnknownSession, "no evaluation session '" + std::string(session_id) + "'");
        auto updated = it->second;
        result.report = eval::submit_evaluation_labels(updated, labels);

        std::vector<std::pair<std::string, store::LabelValue>> records;
        for (const auto& [id, v] : updated.received) {
            records.emplace_back(id, v ? store::LabelValue::positive : store::LabelValue::negative);
        }
        result.seq = store_->append_labels(workspace_id, updated.category_id, records, store::LabelSource::evaluation);
        persist_session(updated);
        it->second = updated;
        result.session = updated;
    }
    events_.publish({0, EventKind::evaluation_ready, std::string(workspace_id), result.session.category_id,
                     result.session.model_iteration, 0, "precision " + std::to_string(result.report.precision)});
    maybe_schedule(workspace_id, result.session.category_id);
    return result;
}

eval::PrecisionEvalSession Application::evaluation(std::string_view workspace_id, std::string_view session_id) const {
    std::lock_guard lock(eval_mutex_);
    const auto ws = sessions_.find(workspace_id);
    if (ws != sessions_.end()) {
        const auto it = ws->second.find(std::string(session_id));
        if (it != ws->second.end()) return it->second;
    }
    fail(ErrorCode::UnknownSession, "no evaluation session '" + std::string(session_id) + "'");
}

// ---------------------------------------------------------------------------
// Label quality

DisagreementView Application::disagreements(std::string_view workspace_id, std::string_view category) const {
    const auto dataset = store_->dataset(workspace_id);
    const auto cat = resolve_category(workspace_id, category);
    const auto snap = store_->snapshot(workspace_id, cat.category_id);
    std::vector<quality::LabeledText> labeled;
    for (const auto& [id, l] : snap.labels) {
        if (!is_human(l)) continue;
        const auto i = dataset->find(id);
        if (i) labeled.push_back({id, dataset->tokens(*i), l.positive});
    }
    DisagreementView out;
    out.seq = snap.seq;
    out.category_id = cat.category_id;
    out.report = quality::cross_validation_disagreements(labeled, config_.cv_folds, *trainer("light"),
                                                         policy(workspace_id).seed, config_.suspect_limit);
    return out;
}

ContradictionView Application::contradictions(std::string_view workspace_id, std::string_view category) const {
    const auto dataset = store_->dataset(workspace_id);
    const auto cat = resolve_category(workspace_id, category);
    const auto snap = store_->snapshot(workspace_id, cat.category_id);
    ContradictionView out;
    out.seq = snap.seq;
    out.category_id = cat.category_id;
    if (!embeddings_) {
        out.warnings.push_back("no embedding table configured");
        return out;
    }
    std::vector<quality::LabeledText> labeled;
    for (const auto& [id, l] : snap.labels) {
        if (!is_human(l)) continue;
        const auto i = dataset->find(id);
        if (i) labeled.push_back({id, dataset->tokens(*i), l.positive});
    }
    out.pairs = quality::contradicting_pairs(labeled, *embeddings_, config_.pair_limit);
    return out;
}

std::string Application::export_labels(std::string_view workspace_id) const { return store_->export_labels(workspace_id); }

store::ImportReport Application::import_labels(std::string_view workspace_id, std::string_view csv_bytes) {
    auto report = store_->import_labels(workspace_id, csv_bytes);
    for (const auto& c : store_->workspace(workspace_id).categories) maybe_schedule(workspace_id, c.category_id);
    return report;
}

// ---------------------------------------------------------------------------
// Orchestrator

void Application::set_trainer(const std::string& flavor, std::shared_ptr<const learning::Trainer> trainer) {
    std::lock_guard lock(trainers_mutex_);
    trainers_[flavor] = std::move(trainer);
}

std::shared_ptr<const learning::Trainer> Application::trainer(const std::string& flavor) const {
    std::lock_guard lock(trainers_mutex_);
    const auto it = trainers_.find(flavor);
    if (it == trainers_.end() || !it->second) {
        fail(ErrorCode::InvalidArgument, "no trainer registered for model flavor '" + flavor + "'");
    }
    return it->second;
}

bool Application::schedule_locked(const Key& key) {
    if (stopping_ || scheduled_.contains(key)) return false;
    const auto counts = store_->counts(key.first, key.second);
    const bool has_model = registry_->active(key.first, key.second) != nullptr;
    if (!policy::should_train(counts, has_model, policy(key.first))) return false;
    scheduled_.insert(key);
    queue_.push_back(key);
    work_cv_.notify_one();
    return true;
}

void Application::maybe_schedule(std::string_view workspace_id, std::string_view category_id) {
    std::lock_guard lock(work_mutex_);
    schedule_locked({std::string(workspace_id), std::string(category_id)});
}

void Application::wait_idle() {
    std::unique_lock lock(work_mutex_);
    idle_cv_.wait(lock, [&] { return stopping_ || (queue_.empty() && !running_); });
}

void Application::worker_loop() {
    for (;;) {
        Key key;
        {
            std::unique_lock lock(work_mutex_);
            work_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
            if (stopping_) return;
            key = queue_.front();
            queue_.pop_front();
            running_ = key;
        }
        bool ok = false;
        try {
            run_training(key);
            ok = true;
        } catch (const std::exception& e) {
            spdlog::error("training task for {}/{} aborted: {}", key.first, key.second, e.what());
        }
        {
            std::lock_guard lock(work_mutex_);
            running_.reset();
            scheduled_.erase(key);
            // Labels that arrived while training count toward the next
            // trigger; re-check so none is lost. A failed run waits for the
            // next label instead of retrying in a loop.
            if (ok) schedule_locked(key);
        }
        idle_cv_.notify_all();
    }
}

void Application::run_training(const Key& key) {
    const auto& [ws, cat] = key;
    const auto pc = policy(ws);
    const auto dataset = store_->dataset(ws);
    const auto snap = store_->snapshot(ws, cat);

    const auto existing = registry_->models(ws, cat);
    const std::uint64_t next = existing.empty() ? 1 : existing.back().iteration + 1;
    const auto flavor = policy::model_flavor_for(next, pc);
    const auto record = registry_->begin_training(ws, cat, flavor, snap.seq);
    events_.publish({0, EventKind::model_training_started, ws, cat, record.iteration, 0, flavor});

    try {
        std::vector<std::string> pool;
        pool.reserve(dataset->size());
        for (std::size_t i = 0; i < dataset->size(); ++i) {
            const auto& id = dataset->element(i).element_id;
            const auto l = snap.labels.find(id);
            if (l == snap.labels.end() || !is_human(l->second)) pool.push_back(id);
        }
        const auto set = policy::select_training_set(snap.labels, pool, pc, mix_seed(pc.seed, record.iteration));
        const auto weak = set.weak_negatives();
        if (!weak.empty()) {
            std::vector<std::pair<std::string, store::LabelValue>> records;
            records.reserve(weak.size());
            for (const auto& id : weak) records.emplace_back(id, store::LabelValue::negative);
            store_->append_labels(ws, cat, records, store::LabelSource::weak_negative, record.iteration);
        }

        std::vector<learning::TrainingExample> examples;
        examples.reserve(set.entries.size());
        for (const auto& e : set.entries) {
            const auto i = dataset->find(e.element_id);
            if (!i) continue;
            examples.push_back({dataset->tokens(*i), e.label > 0});
        }
        const auto classifier = trainer(flavor)->train(examples);
        const auto ready = registry_->complete(record, *classifier, examples.size());

        registry_->activate(ws, cat, ready.iteration, [&](const std::vector<learning::Prediction>& predictions) {
            const auto current = store_->current_labels(ws, cat);
            std::set<std::string> labeled;
            for (const auto& [id, l] : current) {
                if (is_human(l)) labeled.insert(id);
            }
            std::map<std::string, double> probs;
            for (std::size_t i = 0; i < predictions.size(); ++i) {
                probs.emplace(dataset->element(i).element_id, predictions[i].probability);
            }
            return policy::rank_for_labeling(probs, labeled, pc.al_strategy, pc.label_next_size,
                                             mix_seed(pc.seed, 1000 + ready.iteration));
        });
        store_->mark_trained(ws, cat, snap.seq);
        events_.publish({0, EventKind::model_ready, ws, cat, ready.iteration, 0, flavor});
    } catch (const std::exception& e) {
        registry_->fail(record, e.what());
        events_.publish({0, EventKind::model_failed, ws, cat, record.iteration, 0, e.what()});
        throw;
    }
}

int http_status(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument:
    case ErrorCode::DecodeError:
    case ErrorCode::MissingColumn:
    case ErrorCode::EmptyDataset:
    case ErrorCode::EmptyQuery:
    case ErrorCode::MalformedRow:
    case ErrorCode::EmptyCorpus:
        return 400;
    case ErrorCode::UnknownDataset:
    case ErrorCode::UnknownWorkspace:
    case ErrorCode::UnknownCategory:
    case ErrorCode::UnknownElement:
    case ErrorCode::UnknownDocument:
    case ErrorCode::UnknownModel:
    case ErrorCode::UnknownSession:
        return 404;
    case ErrorCode::IncompleteLabels:
        return 422;
    case ErrorCode::Io:
        return 500;
    default:
        return 409;
    }
}

} // namespace labelkit::service
