#include "labelkit/store.hpp"

#include "labelkit/csv.hpp"
#include "labelkit/error.hpp"
#include "labelkit/fsutil.hpp"
#include "labelkit/text.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <json.hpp>
#include <spdlog/spdlog.h>

namespace labelkit::store {

using nlohmann::json;

std::string_view to_string(LabelValue v) {
    switch (v) {
    case LabelValue::positive: return "positive";
    case LabelValue::negative: return "negative";
    case LabelValue::none: return "none";
    }
    return "none";
}

std::string_view to_string(LabelSource s) {
    switch (s) {
    case LabelSource::user: return "user";
    case LabelSource::weak_negative: return "weak_negative";
    case LabelSource::evaluation: return "evaluation";
    }
    return "user";
}

LabelValue parse_label_value(std::string_view s) {
    if (s == "positive" || s == "true") return LabelValue::positive;
    if (s == "negative" || s == "false") return LabelValue::negative;
    if (s == "none") return LabelValue::none;
    fail(ErrorCode::InvalidArgument, "label value must be positive, negative or none: " + std::string(s));
}

LabelSource parse_label_source(std::string_view s) {
    if (s == "user") return LabelSource::user;
    if (s == "weak_negative") return LabelSource::weak_negative;
    if (s == "evaluation") return LabelSource::evaluation;
    fail(ErrorCode::InvalidArgument, "unknown label source: " + std::string(s));
}

const Category* Workspace::find_category(std::string_view id_or_name) const {
    for (const auto& c : categories) {
        if (c.category_id == id_or_name) return &c;
    }
    for (const auto& c : categories) {
        if (c.name == id_or_name) return &c;
    }
    return nullptr;
}

// ---------------------------------------------------------------------------
// CategoryLabels

void CategoryLabels::apply(const LabelRecord& r) {
    const bool counts_toward_train = r.source != LabelSource::weak_negative;
    if (counts_toward_train && r.seq > trained_through_) counted_seqs_.push_back(r.seq);

    if (r.value == LabelValue::none) {
        slots_.erase(r.element_id);
        if (r.source == LabelSource::user) ++user_records_;
        return;
    }

    const CurrentLabel label{r.value == LabelValue::positive, r.source};
    switch (r.source) {
    case LabelSource::user:
        ++user_records_;
        slots_[r.element_id].user = label;
        break;
    case LabelSource::evaluation:
        slots_[r.element_id].other = label;
        break;
    case LabelSource::weak_negative:
        if (r.iteration < weak_iteration_) return;
        if (r.iteration > weak_iteration_) {
            // A fresh draw replaces every weak label from earlier draws.
            for (auto it = slots_.begin(); it != slots_.end();) {
                auto& slot = it->second;
                if (slot.other && slot.other->source == LabelSource::weak_negative) slot.other.reset();
                it = (!slot.user && !slot.other) ? slots_.erase(it) : std::next(it);
            }
            weak_iteration_ = r.iteration;
        }
        slots_[r.element_id].other = label;
        break;
    }
}

void CategoryLabels::mark_trained(std::uint64_t through_seq) {
    trained_through_ = std::max(trained_through_, through_seq);
    std::erase_if(counted_seqs_, [&](std::uint64_t s) { return s <= trained_through_; });
}

LabelMap CategoryLabels::current() const {
    LabelMap out;
    for (const auto& [id, slot] : slots_) {
        if (slot.user) {
            out.emplace(id, *slot.user);
        } else if (slot.other) {
            out.emplace(id, *slot.other);
        }
    }
    return out;
}

LabelCounts CategoryLabels::counts() const {
    LabelCounts c;
    for (const auto& [id, slot] : slots_) {
        if (!slot.user) continue;
        (slot.user->positive ? c.positives : c.negatives)++;
    }
    c.user_labels_total = user_records_;
    c.labels_since_last_train = counted_seqs_.size();
    return c;
}

// ---------------------------------------------------------------------------
// WorkspaceStore

struct WorkspaceStore::State {
    mutable std::shared_mutex mutex;
    Workspace workspace;
    std::shared_ptr<const corpus::IndexedDataset> dataset;
    std::map<std::string, CategoryLabels> labels;
    std::vector<LabelRecord> records;
    std::uint64_t seq = 0;
    std::int64_t last_ts = 0;
    std::filesystem::path log_path;

    std::uint64_t next_seq() { return ++seq; }

    std::int64_t next_timestamp() {
        const auto now = std::chrono::duration_cast<std::chrono::nanoseconds>(
                             std::chrono::system_clock::now().time_since_epoch())
                             .count();
        last_ts = std::max<std::int64_t>(now, last_ts + 1);
        return last_ts;
    }

    const Category& require_category(std::string_view id_or_name) const {
        const auto* c = workspace.find_category(id_or_name);
        if (!c) fail(ErrorCode::UnknownCategory, "unknown category: " + std::string(id_or_name));
        return *c;
    }

    void apply_category(const Category& c) {
        workspace.categories.push_back(c);
        labels.try_emplace(c.category_id);
    }

    void apply_label(const LabelRecord& r) {
        labels[r.category_id].apply(r);
        records.push_back(r);
    }

    Category append_category(std::string_view name, std::string_view description) {
        if (text::trim(name).empty()) fail(ErrorCode::InvalidArgument, "category name must not be empty");
        for (const auto& c : workspace.categories) {
            if (c.name == name) fail(ErrorCode::DuplicateCategory, "category exists: " + std::string(name));
        }
        const auto s = next_seq();
        Category c{"c" + std::to_string(workspace.categories.size() + 1), std::string(name), std::string(description)};
        fsutil::append_line(log_path, json{{"kind", "category"},
                                           {"seq", s},
                                           {"id", c.category_id},
                                           {"name", c.name},
                                           {"description", c.description}}
                                          .dump());
        apply_category(c);
        return c;
    }

    LabelRecord append_label(const std::string& category_id, std::string element_id, LabelValue value,
                             LabelSource source, std::uint64_t iteration) {
        if (!dataset->find(element_id)) fail(ErrorCode::UnknownElement, "unknown element: " + element_id);
        LabelRecord r;
        r.seq = next_seq();
        r.timestamp_ns = next_timestamp();
        r.element_id = std::move(element_id);
        r.category_id = category_id;
        r.value = value;
        r.source = source;
        r.iteration = iteration;
        fsutil::append_line(log_path, json{{"kind", "label"},
                                           {"seq", r.seq},
                                           {"ts", r.timestamp_ns},
                                           {"element", r.element_id},
                                           {"category", r.category_id},
                                           {"value", to_string(r.value)},
                                           {"source", to_string(r.source)},
                                           {"iteration", r.iteration}}
                                          .dump());
        apply_label(r);
        return r;
    }

    void replay(const std::string& line) {
        const auto j = json::parse(line);
        const auto kind = j.at("kind").get<std::string>();
        seq = std::max(seq, j.at("seq").get<std::uint64_t>());
        if (kind == "category") {
            apply_category(Category{j.at("id"), j.at("name"), j.value("description", "")});
        } else if (kind == "label") {
            LabelRecord r;
            r.seq = j.at("seq");
            r.timestamp_ns = j.at("ts");
            r.element_id = j.at("element");
            r.category_id = j.at("category");
            r.value = parse_label_value(j.at("value").get<std::string>());
            r.source = parse_label_source(j.at("source").get<std::string>());
            r.iteration = j.value("iteration", std::uint64_t{0});
            last_ts = std::max(last_ts, r.timestamp_ns);
            apply_label(r);
        } else if (kind == "trained") {
            labels[j.at("category").get<std::string>()].mark_trained(j.at("through"));
        }
    }
};

WorkspaceStore::WorkspaceStore(std::filesystem::path root, std::shared_ptr<corpus::DatasetCatalog> datasets)
    : root_(std::move(root)), datasets_(std::move(datasets)) {
    const auto dir = root_ / "workspaces";
    std::filesystem::create_directories(dir);
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto meta_path = entry.path() / "workspace.json";
        if (!entry.is_directory() || !std::filesystem::exists(meta_path)) continue;
        try {
            const auto meta = json::parse(fsutil::read_file(meta_path));
            auto st = std::make_unique<State>();
            st->workspace.workspace_id = meta.at("workspace_id");
            st->workspace.dataset_name = meta.at("dataset_name");
            st->dataset = datasets_->get(st->workspace.dataset_name);
            st->log_path = entry.path() / "log.jsonl";
            for (const auto& line : fsutil::read_lines(st->log_path)) st->replay(line);
            const auto id = st->workspace.workspace_id;
            workspaces_.emplace(id, std::move(st));
        } catch (const std::exception& e) {
            spdlog::error("skipping workspace {}: {}", entry.path().string(), e.what());
        }
    }
}

WorkspaceStore::~WorkspaceStore() = default;

WorkspaceStore::State& WorkspaceStore::state(std::string_view workspace_id) const {
    std::shared_lock lock(mutex_);
    const auto it = workspaces_.find(workspace_id);
    if (it == workspaces_.end()) fail(ErrorCode::UnknownWorkspace, "unknown workspace: " + std::string(workspace_id));
    return *it->second;
}

Workspace WorkspaceStore::create_workspace(std::string_view dataset_name, std::string_view workspace_id) {
    if (!fsutil::is_safe_name(workspace_id)) {
        fail(ErrorCode::InvalidArgument, "workspace id must match [A-Za-z0-9._-]+: " + std::string(workspace_id));
    }
    auto dataset = datasets_->get(dataset_name);

    std::unique_lock lock(mutex_);
    if (workspaces_.contains(workspace_id)) {
        fail(ErrorCode::DuplicateWorkspace, "workspace exists: " + std::string(workspace_id));
    }
    const auto dir = root_ / "workspaces" / std::string(workspace_id);
    std::filesystem::create_directories(dir);
    auto st = std::make_unique<State>();
    st->workspace.workspace_id = std::string(workspace_id);
    st->workspace.dataset_name = std::string(dataset_name);
    st->dataset = std::move(dataset);
    st->log_path = dir / "log.jsonl";
    fsutil::write_file_atomic(dir / "workspace.json",
                              json{{"workspace_id", workspace_id}, {"dataset_name", dataset_name}}.dump(2));
    auto ws = st->workspace;
    workspaces_.emplace(std::string(workspace_id), std::move(st));
    return ws;
}

Workspace WorkspaceStore::workspace(std::string_view workspace_id) const {
    auto& st = state(workspace_id);
    std::shared_lock lock(st.mutex);
    return st.workspace;
}

std::vector<std::string> WorkspaceStore::workspace_ids() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [id, _] : workspaces_) out.push_back(id);
    return out;
}

std::shared_ptr<const corpus::IndexedDataset> WorkspaceStore::dataset(std::string_view workspace_id) const {
    return state(workspace_id).dataset;
}

Category WorkspaceStore::add_category(std::string_view workspace_id, std::string_view name,
                                      std::string_view description) {
    auto& st = state(workspace_id);
    std::unique_lock lock(st.mutex);
    return st.append_category(name, description);
}

Category WorkspaceStore::category(std::string_view workspace_id, std::string_view id_or_name) const {
    auto& st = state(workspace_id);
    std::shared_lock lock(st.mutex);
    return st.require_category(id_or_name);
}

LabelCounts WorkspaceStore::set_label(std::string_view workspace_id, std::string_view category,
                                      std::string_view element_id, LabelValue value, LabelSource source,
                                      std::uint64_t iteration) {
    auto& st = state(workspace_id);
    std::unique_lock lock(st.mutex);
    const auto cat_id = st.require_category(category).category_id;
    st.append_label(cat_id, std::string(element_id), value, source, iteration);
    return st.labels.at(cat_id).counts();
}

std::uint64_t WorkspaceStore::append_labels(std::string_view workspace_id, std::string_view category,
                                            const std::vector<std::pair<std::string, LabelValue>>& labels,
                                            LabelSource source, std::uint64_t iteration) {
    auto& st = state(workspace_id);
    std::unique_lock lock(st.mutex);
    const auto cat_id = st.require_category(category).category_id;
    for (const auto& [id, _] : labels) {
        if (!st.dataset->find(id)) fail(ErrorCode::UnknownElement, "unknown element: " + id);
    }
    for (const auto& [id, value] : labels) st.append_label(cat_id, id, value, source, iteration);
    return st.seq;
}

LabelMap WorkspaceStore::current_labels(std::string_view workspace_id, std::string_view category) const {
    return snapshot(workspace_id, category).labels;
}

LabelCounts WorkspaceStore::counts(std::string_view workspace_id, std::string_view category) const {
    auto& st = state(workspace_id);
    std::shared_lock lock(st.mutex);
    return st.labels.at(st.require_category(category).category_id).counts();
}

LabelSnapshot WorkspaceStore::snapshot(std::string_view workspace_id, std::string_view category) const {
    auto& st = state(workspace_id);
    std::shared_lock lock(st.mutex);
    const auto& labels = st.labels.at(st.require_category(category).category_id);
    return LabelSnapshot{st.seq, labels.current(), labels.counts()};
}

std::uint64_t WorkspaceStore::seq(std::string_view workspace_id) const {
    auto& st = state(workspace_id);
    std::shared_lock lock(st.mutex);
    return st.seq;
}

void WorkspaceStore::mark_trained(std::string_view workspace_id, std::string_view category,
                                  std::uint64_t through_seq) {
    auto& st = state(workspace_id);
    std::unique_lock lock(st.mutex);
    const auto cat_id = st.require_category(category).category_id;
    const auto s = st.next_seq();
    fsutil::append_line(st.log_path,
                        json{{"kind", "trained"}, {"seq", s}, {"category", cat_id}, {"through", through_seq}}.dump());
    st.labels[cat_id].mark_trained(through_seq);
}

namespace {

std::optional<bool> parse_bool_label(std::string_view s) {
    std::string v(text::trim(s));
    std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (v == "true" || v == "1" || v == "positive") return true;
    if (v == "false" || v == "0" || v == "negative") return false;
    return std::nullopt;
}

} // namespace

ImportReport WorkspaceStore::import_labels(std::string_view workspace_id, std::string_view csv_bytes) {
    if (!text::is_valid_utf8(csv_bytes)) fail(ErrorCode::DecodeError, "upload is not valid UTF-8");
    const auto table = csv::Table::parse(csv_bytes);
    const auto element_col = table.column("element_id");
    const auto doc_col = table.column("doc_id");
    const auto pos_col = table.column("position");
    const auto cat_col = table.column("category_name");
    const auto label_col = table.column("label");
    if (!cat_col || !label_col || (!element_col && !(doc_col && pos_col))) {
        fail(ErrorCode::MissingColumn,
             "label CSV needs category_name, label and element_id (or doc_id and position) columns");
    }

    auto& st = state(workspace_id);
    std::unique_lock lock(st.mutex);
    ImportReport report;
    std::size_t row_no = 1;
    for (const auto& row : table.rows()) {
        ++row_no;
        std::string element_id;
        if (element_col && !csv::Table::field(row, *element_col).empty()) {
            element_id = std::string(text::trim(csv::Table::field(row, *element_col)));
        } else if (doc_col && pos_col) {
            const auto pos_text = text::trim(csv::Table::field(row, *pos_col));
            std::size_t pos = 0;
            const auto [p, ec] = std::from_chars(pos_text.data(), pos_text.data() + pos_text.size(), pos);
            if (ec != std::errc() || p != pos_text.data() + pos_text.size()) {
                report.errors.push_back({row_no, "bad position: " + std::string(pos_text)});
                continue;
            }
            element_id = corpus::make_element_id(text::trim(csv::Table::field(row, *doc_col)), pos);
        }
        if (element_id.empty() || !st.dataset->find(element_id)) {
            report.errors.push_back({row_no, "unknown element: " + element_id});
            continue;
        }
        const auto label = parse_bool_label(csv::Table::field(row, *label_col));
        if (!label) {
            report.errors.push_back({row_no, "label must be true or false"});
            continue;
        }
        const std::string cat_name(text::trim(csv::Table::field(row, *cat_col)));
        if (cat_name.empty()) {
            report.errors.push_back({row_no, "empty category_name"});
            continue;
        }
        const auto* cat = st.workspace.find_category(cat_name);
        std::string cat_id = cat ? cat->category_id : std::string();
        if (!cat) {
            cat_id = st.append_category(cat_name, "").category_id;
            report.created_categories.push_back(cat_name);
        }
        st.append_label(cat_id, element_id, *label ? LabelValue::positive : LabelValue::negative, LabelSource::user,
                        0);
        ++report.applied;
    }
    for (const auto& c : st.workspace.categories) report.counts[c.name] = st.labels.at(c.category_id).counts();
    report.seq = st.seq;
    return report;
}

std::string WorkspaceStore::export_labels(std::string_view workspace_id) const {
    auto& st = state(workspace_id);
    std::shared_lock lock(st.mutex);
    csv::Writer out;
    out.row({"workspace_id", "category_name", "doc_id", "element_id", "text", "label", "source"});
    for (const auto& c : st.workspace.categories) {
        const auto current = st.labels.at(c.category_id).current();
        for (std::size_t i = 0; i < st.dataset->size(); ++i) {
            const auto& e = st.dataset->element(i);
            const auto it = current.find(e.element_id);
            if (it == current.end() || it->second.source != LabelSource::user) continue;
            out.row({st.workspace.workspace_id, c.name, e.doc_id, e.element_id, e.text,
                     it->second.positive ? "true" : "false", std::string(to_string(it->second.source))});
        }
    }
    return out.str();
}

std::vector<LabelRecord> WorkspaceStore::records(std::string_view workspace_id) const {
    auto& st = state(workspace_id);
    std::shared_lock lock(st.mutex);
    return st.records;
}

} // namespace labelkit::store
