#include "labelkit/api.hpp"

#include <atomic>
#include <httplib.h>
#include <spdlog/spdlog.h>
#include <thread>

namespace labelkit::service {

using nlohmann::json;

namespace {

json to_json(const corpus::IndexedDataset& d) {
    return {{"name", d.name()}, {"elements", d.size()}, {"documents", d.dataset().documents.size()}};
}

json to_json(const store::Category& c) {
    return {{"category_id", c.category_id}, {"name", c.name}, {"description", c.description}};
}

json to_json(const store::Workspace& w) {
    json cats = json::array();
    for (const auto& c : w.categories) cats.push_back(to_json(c));
    return {{"workspace_id", w.workspace_id}, {"dataset", w.dataset_name}, {"categories", cats}};
}

json to_json(const store::LabelCounts& c) {
    return {{"positives", c.positives},
            {"negatives", c.negatives},
            {"user_labels_total", c.user_labels_total},
            {"labels_since_last_train", c.labels_since_last_train}};
}

json to_json(const registry::ModelRecord& r) {
    json j{{"model_id", r.model_id},
           {"iteration", r.iteration},
           {"status", registry::to_string(r.status)},
           {"flavor", r.flavor},
           {"train_set_size", r.train_set_size},
           {"created_at_ns", r.created_at_ns},
           {"label_seq", r.label_seq}};
    if (!r.error.empty()) j["error"] = r.error;
    return j;
}

json to_json(const WorkspaceStatus& s) {
    return {{"workspace_id", s.workspace_id},
            {"category_id", s.category_id},
            {"counts", to_json(s.counts)},
            {"progress", s.progress},
            {"active_model", s.active_model ? to_json(*s.active_model) : json(nullptr)},
            {"latest_model", s.latest_model ? to_json(*s.latest_model) : json(nullptr)},
            {"training_in_flight", s.training_in_flight},
            {"pending_tasks", s.pending_tasks},
            {"seq", s.seq}};
}

json to_json(const ElementList& list, bool with_matches = false) {
    json items = json::array();
    for (const auto& v : list.items) {
        json item{{"element_id", v.element_id},
                  {"doc_id", v.doc_id},
                  {"position", v.position},
                  {"text", v.text},
                  {"label", v.label ? json(*v.label) : json(nullptr)}};
        item["prediction"] = v.prediction ? json{{"probability", v.prediction->probability},
                                                 {"predicted_positive", v.prediction->predicted_positive}}
                                          : json(nullptr);
        if (with_matches) item["match_count"] = v.match_count;
        items.push_back(std::move(item));
    }
    return {{"seq", list.seq},
            {"category_id", list.category_id},
            {"model_iteration", list.model_iteration ? json(*list.model_iteration) : json(nullptr)},
            {"total", list.total},
            {"items", items}};
}

json to_json(const eval::PrecisionEvalSession& s) {
    json received = json::object();
    for (const auto& [id, v] : s.received) received[id] = v;
    return {{"session_id", s.session_id},
            {"category_id", s.category_id},
            {"model_iteration", s.model_iteration},
            {"sampled", s.sampled},
            {"requested", s.requested},
            {"short_sample", s.short_sample},
            {"status", s.complete ? "complete" : "open"},
            {"received", received},
            {"precision", s.precision ? json(*s.precision) : json(nullptr)}};
}

json to_json(const store::ImportReport& r) {
    json errors = json::array();
    for (const auto& e : r.errors) errors.push_back({{"row", e.row}, {"message", e.message}});
    json counts = json::object();
    for (const auto& [name, c] : r.counts) counts[name] = to_json(c);
    return {{"applied", r.applied},
            {"errors", errors},
            {"created_categories", r.created_categories},
            {"counts", counts},
            {"seq", r.seq}};
}

std::string param(const httplib::Request& req, const char* name, std::string fallback = {}) {
    return req.has_param(name) ? req.get_param_value(name) : std::move(fallback);
}

std::size_t count_param(const httplib::Request& req, const char* name, std::size_t fallback) {
    if (!req.has_param(name)) return fallback;
    const auto v = req.get_param_value(name);
    try {
        std::size_t used = 0;
        const auto n = std::stoull(v, &used);
        if (used == v.size()) return n;
    } catch (const std::exception&) {
    }
    fail(ErrorCode::InvalidArgument, std::string(name) + " must be a non-negative integer");
}

json body_json(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    auto j = json::parse(req.body);
    if (!j.is_object()) fail(ErrorCode::InvalidArgument, "request body must be a JSON object");
    return j;
}

std::string body_string(const json& j, const char* key, std::string fallback = {}) {
    if (!j.contains(key) || j.at(key).is_null()) return fallback;
    if (!j.at(key).is_string()) fail(ErrorCode::InvalidArgument, std::string(key) + " must be a string");
    return j.at(key).get<std::string>();
}

/// Category from the query string or the JSON body; empty means "the only one".
std::string category_of(const httplib::Request& req, const json& body = json::object()) {
    return param(req, "category", body_string(body, "category"));
}

store::LabelValue label_value(const json& body) {
    const json* v = nullptr;
    if (body.contains("value")) v = &body.at("value");
    else if (body.contains("label")) v = &body.at("label");
    if (!v) fail(ErrorCode::InvalidArgument, "body needs a 'value' of positive, negative or none");
    if (v->is_null()) return store::LabelValue::none;
    if (v->is_boolean()) return v->get<bool>() ? store::LabelValue::positive : store::LabelValue::negative;
    if (v->is_string()) return store::parse_label_value(v->get<std::string>());
    fail(ErrorCode::InvalidArgument, "label value must be a string, boolean or null");
}

/// Upload bytes from a multipart `file` field, or the raw body.
std::string upload_bytes(const httplib::Request& req) {
    if (req.is_multipart_form_data()) {
        if (!req.has_file("file")) fail(ErrorCode::InvalidArgument, "multipart upload needs a 'file' field");
        return req.get_file_value("file").content;
    }
    return req.body;
}

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
    send_json(res, {{"error", code}, {"message", message}}, status);
}

template <typename F>
httplib::Server::Handler guarded(F f) {
    return [f](const httplib::Request& req, httplib::Response& res) {
        try {
            f(req, res);
        } catch (const Error& e) {
            send_error(res, http_status(e.code()), to_string(e.code()), e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "InvalidArgument", e.what());
        } catch (const std::exception& e) {
            spdlog::error("{} {}: {}", req.method, req.path, e.what());
            send_error(res, 500, "Internal", e.what());
        }
    };
}

} // namespace

struct HttpServer::Impl {
    std::shared_ptr<Application> app;
    httplib::Server server;
    std::thread thread;
    std::atomic<bool> stopping{false};
    bool bound = false;

    void routes();
};

void HttpServer::Impl::routes() {
    auto& s = server;
    auto* a = app.get();
    s.set_payload_max_length(512ull << 20);

    s.Post("/datasets", guarded([a](const httplib::Request& req, httplib::Response& res) {
        std::string name = param(req, "name");
        if (name.empty() && req.is_multipart_form_data() && req.has_file("name")) name = req.get_file_value("name").content;
        if (name.empty()) fail(ErrorCode::InvalidArgument, "dataset upload needs a name");
        const auto added = a->add_dataset(name, upload_bytes(req));
        auto body = to_json(*added.dataset);
        body["skipped_rows"] = added.skipped_rows;
        send_json(res, body, 201);
    }));
    s.Get("/datasets", guarded([a](const httplib::Request&, httplib::Response& res) {
        json list = json::array();
        for (const auto& name : a->datasets()) list.push_back(name);
        send_json(res, {{"datasets", list}});
    }));

    s.Post("/workspaces", guarded([a](const httplib::Request& req, httplib::Response& res) {
        const auto body = body_json(req);
        const auto ws = a->create_workspace(body_string(body, "dataset"), body_string(body, "workspace_id"));
        send_json(res, to_json(ws), 201);
    }));
    s.Get("/workspaces", guarded([a](const httplib::Request&, httplib::Response& res) {
        json list = json::array();
        for (const auto& id : a->store().workspace_ids()) list.push_back(to_json(a->workspace(id)));
        send_json(res, {{"workspaces", list}});
    }));
    s.Get("/workspaces/:w", guarded([a](const httplib::Request& req, httplib::Response& res) {
        const auto& w = req.path_params.at("w");
        auto body = to_json(a->workspace(w));
        body["seq"] = a->store().seq(w);
        send_json(res, body);
    }));
    s.Post("/workspaces/:w/categories", guarded([a](const httplib::Request& req, httplib::Response& res) {
        const auto body = body_json(req);
        const auto c = a->add_category(req.path_params.at("w"), body_string(body, "name"),
                                       body_string(body, "description"));
        send_json(res, to_json(c), 201);
    }));
    s.Get("/workspaces/:w/policy", guarded([a](const httplib::Request& req, httplib::Response& res) {
        a->workspace(req.path_params.at("w"));
        send_json(res, policy_to_json(a->policy(req.path_params.at("w"))));
    }));
    s.Put("/workspaces/:w/policy", guarded([a](const httplib::Request& req, httplib::Response& res) {
        send_json(res, policy_to_json(a->set_policy(req.path_params.at("w"), body_json(req))));
    }));

    s.Put("/workspaces/:w/elements/:e/label", guarded([a](const httplib::Request& req, httplib::Response& res) {
        const auto body = body_json(req);
        const auto st = a->set_label(req.path_params.at("w"), category_of(req, body), req.path_params.at("e"),
                                     label_value(body));
        send_json(res, to_json(st));
    }));
    s.Get("/workspaces/:w/status", guarded([a](const httplib::Request& req, httplib::Response& res) {
        auto body = to_json(a->status(req.path_params.at("w"), category_of(req)));
        body["last_event_id"] = a->events().last_id();
        send_json(res, body);
    }));
    s.Get("/workspaces/:w/documents/:d", guarded([a](const httplib::Request& req, httplib::Response& res) {
        auto body = to_json(a->document(req.path_params.at("w"), category_of(req), req.path_params.at("d")));
        body["doc_id"] = req.path_params.at("d");
        send_json(res, body);
    }));
    s.Get("/workspaces/:w/search", guarded([a](const httplib::Request& req, httplib::Response& res) {
        const auto list = a->search(req.path_params.at("w"), category_of(req), param(req, "q"),
                                    count_param(req, "limit", 100));
        send_json(res, to_json(list, true));
    }));
    s.Get("/workspaces/:w/label-next", guarded([a](const httplib::Request& req, httplib::Response& res) {
        send_json(res, to_json(a->label_next(req.path_params.at("w"), category_of(req))));
    }));
    s.Get("/workspaces/:w/positive-predictions", guarded([a](const httplib::Request& req, httplib::Response& res) {
        send_json(res, to_json(a->positive_predictions(req.path_params.at("w"), category_of(req),
                                                       count_param(req, "offset", 0), count_param(req, "limit", 100))));
    }));

    s.Post("/workspaces/:w/evaluation", guarded([a](const httplib::Request& req, httplib::Response& res) {
        const auto body = body_json(req);
        std::optional<std::size_t> n;
        if (body.contains("sample_size")) n = body.at("sample_size").get<std::size_t>();
        const auto& w = req.path_params.at("w");
        auto out = to_json(a->start_evaluation(w, category_of(req, body), n));
        out["seq"] = a->store().seq(w);
        send_json(res, out, 201);
    }));
    s.Get("/workspaces/:w/evaluation/:s", guarded([a](const httplib::Request& req, httplib::Response& res) {
        const auto& w = req.path_params.at("w");
        auto out = to_json(a->evaluation(w, req.path_params.at("s")));
        out["seq"] = a->store().seq(w);
        send_json(res, out);
    }));
    s.Put("/workspaces/:w/evaluation/:s", guarded([a](const httplib::Request& req, httplib::Response& res) {
        const auto body = body_json(req);
        if (!body.contains("labels") || !body.at("labels").is_object()) {
            fail(ErrorCode::InvalidArgument, "body needs a 'labels' object of element_id to true/false");
        }
        std::map<std::string, bool> labels;
        for (const auto& [id, v] : body.at("labels").items()) {
            if (v.is_boolean()) labels[id] = v.get<bool>();
            else if (v.is_string()) labels[id] = store::parse_label_value(v.get<std::string>()) == store::LabelValue::positive;
            else fail(ErrorCode::InvalidArgument, "label for " + id + " must be a boolean");
        }
        const auto r = a->submit_evaluation(req.path_params.at("w"), req.path_params.at("s"), labels);
        auto out = to_json(r.session);
        out["seq"] = r.seq;
        send_json(res, out);
    }));

    s.Get("/workspaces/:w/quality/disagreements", guarded([a](const httplib::Request& req, httplib::Response& res) {
        const auto v = a->disagreements(req.path_params.at("w"), category_of(req));
        json items = json::array();
        for (const auto& sl : v.report.suspects) {
            items.push_back({{"element_id", sl.element_id},
                             {"user_label", sl.user_label},
                             {"predicted_positive", sl.predicted_positive},
                             {"probability", sl.probability},
                             {"confidence", sl.confidence},
                             {"fold", sl.fold}});
        }
        send_json(res, {{"seq", v.seq}, {"category_id", v.category_id}, {"items", items}, {"warnings", v.report.warnings}});
    }));
    s.Get("/workspaces/:w/quality/contradictions", guarded([a](const httplib::Request& req, httplib::Response& res) {
        const auto v = a->contradictions(req.path_params.at("w"), category_of(req));
        json items = json::array();
        for (const auto& p : v.pairs) {
            items.push_back({{"element_a", p.element_a},
                             {"element_b", p.element_b},
                             {"label_a", p.label_a},
                             {"label_b", p.label_b},
                             {"distance", p.distance}});
        }
        send_json(res, {{"seq", v.seq}, {"category_id", v.category_id}, {"items", items}, {"warnings", v.warnings}});
    }));

    s.Get("/workspaces/:w/labels/export", guarded([a](const httplib::Request& req, httplib::Response& res) {
        const auto& w = req.path_params.at("w");
        res.set_header("X-Labelkit-Seq", std::to_string(a->store().seq(w)));
        res.set_header("Content-Disposition", "attachment; filename=\"" + w + "-labels.csv\"");
        res.set_content(a->export_labels(w), "text/csv");
    }));
    s.Post("/workspaces/:w/labels/import", guarded([a](const httplib::Request& req, httplib::Response& res) {
        send_json(res, to_json(a->import_labels(req.path_params.at("w"), upload_bytes(req))));
    }));

    s.Get("/workspaces/:w/events", guarded([this, a](const httplib::Request& req, httplib::Response& res) {
        const std::string w = req.path_params.at("w");
        a->workspace(w);
        std::uint64_t cursor = count_param(req, "since", 0);
        if (!req.has_param("since") && req.has_header("Last-Event-ID")) {
            try {
                cursor = std::stoull(req.get_header_value("Last-Event-ID"));
            } catch (const std::exception&) {
            }
        }
        if (req.has_param("poll")) {
            json list = json::array();
            for (const auto& e : a->events().since(cursor)) {
                if (e.workspace_id == w) list.push_back(service::to_json(e));
            }
            send_json(res, {{"events", list}, {"last_event_id", a->events().last_id()}});
            return;
        }
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream", [this, a, w, cursor, idle = 0](std::size_t, httplib::DataSink& sink) mutable {
                if (stopping) return false;
                const auto events = a->events().wait(cursor, std::chrono::milliseconds(250));
                if (stopping || a->events().closed()) {
                    sink.done();
                    return true;
                }
                std::string chunk;
                for (const auto& e : events) {
                    cursor = e.id;
                    if (e.workspace_id != w) continue;
                    chunk += "id: " + std::to_string(e.id) + "\nevent: " + std::string(to_string(e.kind)) +
                             "\ndata: " + service::to_json(e).dump() + "\n\n";
                }
                if (chunk.empty() && ++idle >= 60) chunk = ": keepalive\n\n";
                if (chunk.empty()) return true;
                idle = 0;
                return sink.write(chunk.data(), chunk.size());
            });
    }));
}

HttpServer::HttpServer(std::shared_ptr<Application> app) : impl_(std::make_unique<Impl>()) {
    impl_->app = std::move(app);
    impl_->routes();
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound <= 0) fail(ErrorCode::Io, "could not bind " + host + ":" + std::to_string(port));
    impl_->bound = true;
    return bound;
}

void HttpServer::run() {
    if (!impl_->bound) fail(ErrorCode::InvalidArgument, "bind() before run()");
    impl_->server.listen_after_bind();
}

void HttpServer::start() {
    if (!impl_->bound) fail(ErrorCode::InvalidArgument, "bind() before start()");
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
}

void HttpServer::stop() {
    impl_->stopping = true;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

} // namespace labelkit::service
