// Acceptance runner: one PASS/FAIL line per primary criterion. Exit status is
// non-zero when any criterion fails.

#include "app_fixture.hpp"
#include "labelkit/corpus.hpp"
#include "labelkit/eval.hpp"
#include "labelkit/learning.hpp"
#include "labelkit/policy.hpp"
#include "labelkit/quality.hpp"
#include "labelkit/registry.hpp"
#include "labelkit/service.hpp"
#include "labelkit/store.hpp"
#include "labelkit/synthetic.hpp"
#include "noise_fixture.hpp"
#include "support.hpp"

#include <chrono>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <fmt/core.h>
#include <json.hpp>
#include <numeric>
#include <random>
#include <spdlog/spdlog.h>
#include <sys/wait.h>
#include <unistd.h>

using namespace labelkit;
using nlohmann::json;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

int failures = 0;

void report(const char* name, const Outcome& o, double seconds) {
    std::printf("%s %-28s %6.2fs  %s\n", o.pass ? "PASS" : "FAIL", name, seconds, o.detail.c_str());
    std::fflush(stdout);
    if (!o.pass) ++failures;
}

template <typename F>
void run(const char* name, F f) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
        o = f();
    } catch (const std::exception& e) {
        o = {false, std::string("exception: ") + e.what()};
    }
    report(name, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
}

// ---------------------------------------------------------------------------
// Training trigger

enum class Act { pos, neg, none };

struct Script {
    const char* name;
    std::vector<std::pair<int, Act>> labels; // (element number, action)
    std::vector<std::size_t> expected;       // 1-based label counts at which training fires
};

std::vector<std::pair<int, Act>> run_of(int from, int count, Act a) {
    std::vector<std::pair<int, Act>> out;
    for (int i = 0; i < count; ++i) out.emplace_back(from + i, a);
    return out;
}

template <typename... Parts>
std::vector<std::pair<int, Act>> concat(Parts&&... parts) {
    std::vector<std::pair<int, Act>> out;
    (out.insert(out.end(), parts.begin(), parts.end()), ...);
    return out;
}

std::vector<Script> trigger_scripts() {
    return {
        {"straight", concat(run_of(0, 20, Act::pos), run_of(100, 40, Act::neg)), {20, 40, 60}},
        {"interleaved",
         concat(run_of(100, 10, Act::neg), run_of(0, 19, Act::pos), run_of(110, 1, Act::neg), run_of(19, 1, Act::pos),
                run_of(120, 19, Act::neg), run_of(139, 1, Act::neg)),
         {31, 51}},
        {"relabel and retract",
         concat(run_of(0, 19, Act::pos), run_of(0, 1, Act::neg), run_of(19, 2, Act::pos), run_of(1, 19, Act::none),
                run_of(100, 1, Act::neg)),
         {22, 42}},
        {"nineteen only", concat(run_of(0, 19, Act::pos), run_of(100, 60, Act::neg)), {}},
    };
}

store::LabelValue value_of(Act a) {
    return a == Act::pos ? store::LabelValue::positive
                         : (a == Act::neg ? store::LabelValue::negative : store::LabelValue::none);
}

Outcome trigger_exactness() {
    const auto pos_ids = appfix::weather_ids(), neg_ids = appfix::market_ids();
    auto id_of = [&](int n) { return n < 100 ? pos_ids[n] : neg_ids[n - 100]; };
    std::size_t checked = 0;
    for (const auto& script : trigger_scripts()) {
        // Policy over the store's counts.
        support::TempDir dir("trigger");
        {
            auto catalog = std::make_shared<corpus::DatasetCatalog>(dir.path());
            catalog->add("topics", appfix::topic_csv());
            store::WorkspaceStore st(dir.path(), catalog);
            st.create_workspace("topics", "w");
            const auto cat = st.add_category("w", "Weather").category_id;
            const policy::PolicyConfig pc;
            bool has_model = false;
            std::vector<std::size_t> fired;
            for (std::size_t i = 0; i < script.labels.size(); ++i) {
                st.set_label("w", cat, id_of(script.labels[i].first), value_of(script.labels[i].second));
                if (policy::should_train(st.counts("w", cat), has_model, pc)) {
                    fired.push_back(i + 1);
                    has_model = true;
                    st.mark_trained("w", cat, st.seq("w"));
                }
            }
            if (fired != script.expected) {
                return {false, fmt::format("policy script '{}' fired at {} labels", script.name, json(fired).dump())};
            }
        }
        // The same script through the service orchestrator.
        support::TempDir dir2("trigger-svc");
        service::Application app(appfix::config(dir2.path()));
        appfix::seed_workspace(app);
        std::vector<std::size_t> fired;
        std::size_t seen = 0;
        for (std::size_t i = 0; i < script.labels.size(); ++i) {
            app.set_label("w", "", id_of(script.labels[i].first), value_of(script.labels[i].second));
            app.wait_idle();
            for (const auto& e : app.events().since(seen)) {
                seen = e.id;
                if (e.kind == service::EventKind::model_training_started) fired.push_back(i + 1);
            }
        }
        if (fired != script.expected) {
            return {false, fmt::format("service script '{}' started training at {} labels", script.name,
                                       json(fired).dump())};
        }
        checked += script.labels.size();
    }
    return {true, fmt::format("{} scripts, {} labels, triggers exact in policy and service",
                              trigger_scripts().size(), checked)};
}

// ---------------------------------------------------------------------------
// Weak negatives

Outcome weak_negative_ratio() {
    std::mt19937_64 gen(20240601);
    policy::PolicyConfig pc;
    for (int k = 0; k < 50; ++k) {
        const std::size_t pos = 1 + gen() % 60, neg = gen() % 150, free_pool = gen() % 200;
        store::LabelMap current;
        std::vector<std::string> pool;
        for (std::size_t i = 0; i < pos; ++i) current["p" + std::to_string(i)] = {true, store::LabelSource::user};
        for (std::size_t i = 0; i < neg; ++i) current["n" + std::to_string(i)] = {false, store::LabelSource::user};
        for (std::size_t i = 0; i < free_pool; ++i) pool.push_back("u" + std::to_string(i));
        // Labeled elements also sit in the pool offered to the selector.
        for (const auto& [id, _] : current) {
            if (gen() % 2) pool.push_back(id);
        }
        std::shuffle(pool.begin(), pool.end(), gen);

        const auto set = policy::select_training_set(current, pool, pc, gen());
        const std::size_t target = 2 * pos;
        const std::size_t expected = std::max(neg, std::min(target, neg + free_pool));
        if (set.negatives() != expected || set.positives() != pos) {
            return {false, fmt::format("config {} (pos {}, neg {}, pool {}): {} negatives, expected {}", k, pos, neg,
                                       free_pool, set.negatives(), expected)};
        }
        for (const auto& id : set.weak_negatives()) {
            if (current.contains(id)) return {false, fmt::format("config {}: weak negative {} is user-labeled", k, id)};
        }
    }
    return {true, "50 configurations; negatives == max(user, min(ceil(2p), user + pool)); no labeled picks"};
}

// ---------------------------------------------------------------------------
// Search

Outcome search_oracle() {
    std::mt19937_64 gen(77);
    std::size_t queries = 0, hits = 0;
    for (int c = 0; c < 100; ++c) {
        const corpus::IndexedDataset ds(corpus::ingest_csv(support::random_corpus_csv(gen, 500), "r").dataset);
        for (int q = 0; q < 10; ++q) {
            const auto phrases = support::random_phrases(gen);
            std::vector<std::string> got;
            for (const auto& h : ds.search(corpus::Query{phrases}, ds.size())) got.push_back(ds.element(h.element_index).element_id);
            const auto want = support::brute_force_search(ds.dataset(), phrases, ds.size());
            if (got != want) {
                return {false, fmt::format("corpus {} query {}: index {} hits vs scan {}", c, json(phrases).dump(),
                                           got.size(), want.size())};
            }
            ++queries;
            hits += got.size();
        }
    }
    return {true, fmt::format("100 corpora, {} queries, {} matching elements identical", queries, hits)};
}

// ---------------------------------------------------------------------------
// SVM

Outcome svm_sanity() {
    std::mt19937_64 gen(5150);
    std::normal_distribution<double> nd;
    // Separable instances: labels from a hidden hyperplane, points within 0.5 of it dropped.
    for (int inst = 0; inst < 20; ++inst) {
        const std::size_t dim = 2 + gen() % 19, n = 20 + gen() % 81;
        std::vector<double> truth(dim);
        for (auto& x : truth) x = nd(gen);
        // Unit normal, so the 0.5 gap below is a geometric margin.
        const double len = std::sqrt(std::inner_product(truth.begin(), truth.end(), truth.begin(), 0.0));
        for (auto& x : truth) x /= len;
        const double offset = 0.5 * nd(gen);
        std::vector<learning::LabeledVector> data;
        while (data.size() < n) {
            std::vector<double> x(dim);
            for (auto& v : x) v = nd(gen);
            double m = offset;
            for (std::size_t k = 0; k < dim; ++k) m += truth[k] * x[k];
            if (std::abs(m) < 0.5) continue;
            data.push_back({learning::to_sparse(x), m > 0 ? 1 : -1});
        }
        if (std::all_of(data.begin(), data.end(), [&](const auto& e) { return e.y == data[0].y; })) data[0].y = -data[0].y;
        const auto model = learning::train_linear_svm(data, dim, learning::SvmHyper{0.0, 10, static_cast<std::uint64_t>(inst)});
        std::size_t correct = 0;
        for (const auto& e : data) correct += e.y * model.margin(e.x) > 0 ? 1 : 0;
        if (correct != data.size()) {
            return {false, fmt::format("instance {} (n {}, d {}): {} of {} training points correct", inst, n, dim,
                                       correct, data.size())};
        }
    }

    double worst_rel = 0.0;
    int points = 0;
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<learning::LabeledVector> data;
        for (int i = 0; i < 25; ++i) {
            std::vector<double> x(5);
            for (auto& v : x) v = nd(gen);
            data.push_back({learning::to_sparse(x), i % 2 ? 1 : -1});
        }
        std::vector<double> w(5);
        for (auto& v : w) v = nd(gen);
        const double b = 0.5 * nd(gen), lambda = trial % 2 ? 1e-1 : 1e-3;
        bool kink = false;
        for (const auto& e : data) kink |= std::abs(e.y * (e.x.dot(w) + b) - 1.0) < 1e-3;
        if (kink) continue;
        ++points;
        const auto g = learning::svm_gradient(w, b, lambda, data);
        const double h = 1e-6;
        for (std::size_t k = 0; k <= w.size(); ++k) {
            auto wp = w, wm = w;
            double bp = b, bm = b;
            (k < w.size() ? wp[k] : bp) += h;
            (k < w.size() ? wm[k] : bm) -= h;
            const double fd =
                (learning::svm_objective(wp, bp, lambda, data) - learning::svm_objective(wm, bm, lambda, data)) / (2 * h);
            const double an = k < w.size() ? g.weights[k] : g.bias;
            worst_rel = std::max(worst_rel, std::abs(fd - an) / std::max(1.0, std::abs(an)));
        }
    }
    if (points < 20 || worst_rel > 1e-4) {
        return {false, fmt::format("gradient check: {} points, worst relative error {:.3g}", points, worst_rel)};
    }

    double worst_rise = -INFINITY;
    for (double lambda : {1e-3, 1e-1}) {
        for (int inst = 0; inst < 10; ++inst) {
            std::vector<learning::LabeledVector> data;
            for (int i = 0; i < 80; ++i) {
                const int y = i % 2 ? 1 : -1;
                std::vector<double> x(6);
                for (auto& v : x) v = nd(gen) + 0.4 * y;
                data.push_back({learning::to_sparse(x), y});
            }
            learning::TrainTrace trace;
            learning::train_linear_svm(data, 6, learning::SvmHyper{lambda, 20, static_cast<std::uint64_t>(inst)},
                                       learning::FeatureKind::bow, &trace);
            for (std::size_t e = 1; e < trace.epoch_objective.size(); ++e) {
                worst_rise = std::max(worst_rise, trace.epoch_objective[e] - trace.epoch_objective[e - 1]);
            }
        }
    }
    if (worst_rise > 1e-6) return {false, fmt::format("epoch objective rose by {:.3g}", worst_rise)};
    return {true, fmt::format("20/20 separable fits exact; FD worst rel err {:.2e} over {} points; max epoch "
                              "objective change {:.2e}",
                              worst_rel, points, worst_rise)};
}

// ---------------------------------------------------------------------------
// Precision estimate

Outcome precision_unbiased() {
    std::vector<std::string> pool;
    for (int i = 0; i < 1000; ++i) pool.push_back(fmt::format("e{:04}", i));
    std::string detail;
    bool ok = true;
    for (double p : {0.3, 0.7, 0.9}) {
        // The first round(p * 1000) ids (in id order) are truly positive.
        const auto cutoff = static_cast<int>(std::lround(p * 1000));
        double sum = 0.0;
        for (std::uint64_t k = 0; k < 200; ++k) {
            eval::PrecisionEvalSession s;
            s.sampled = eval::sample_for_precision(pool, {}, 50, mix_seed(2718, k));
            std::map<std::string, bool> labels;
            for (const auto& id : s.sampled) labels[id] = std::stoi(id.substr(1)) < cutoff;
            sum += eval::submit_evaluation_labels(s, labels).precision;
        }
        const double mean = sum / 200.0;
        ok &= std::abs(mean - p) <= 0.05;
        detail += fmt::format("p*={:.1f} mean {:.4f}; ", p, mean);
    }
    return {ok, detail + "tolerance 0.05"};
}

// ---------------------------------------------------------------------------
// Label noise

Outcome noise_recovery() {
    constexpr std::size_t frozen_total = 72; // oracle run, seeds 0..4
    const auto trainer = learning::make_light_trainer(learning::SvmHyper{});
    std::size_t total = 0;
    std::vector<std::size_t> per_seed;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const auto c = noise::make(200, 20, seed);
        const auto r = quality::cross_validation_disagreements(c.labeled, 4, *trainer, seed, 20);
        std::size_t hits = 0;
        for (const auto& s : r.suspects) hits += c.flipped.contains(s.element_id) ? 1 : 0;
        per_seed.push_back(hits);
        total += hits;
    }
    const double fraction = static_cast<double>(total) / 100.0;
    const bool ok = total == frozen_total && fraction >= 3 * 0.10;
    return {ok, fmt::format("flipped in top 20 per seed {}; mean fraction {:.2f} vs 3x base rate 0.30; frozen total {}",
                            json(per_seed).dump(), fraction, frozen_total)};
}

// ---------------------------------------------------------------------------
// Simulation analogue

Outcome schedule_analogue() {
    synthetic::CorpusSpec spec; // 3000 elements, prior 0.08, corpus seed 7
    const auto corpus = synthetic::make_corpus(spec);
    const auto gold = eval::load_gold_corpus(corpus.csv, "gold");
    const auto table = std::make_shared<const learning::EmbeddingTable>(corpus.embeddings);
    const double prior = static_cast<double>(std::count(gold.gold.begin(), gold.gold.end(), true)) / gold.gold.size();

    auto config = [&](const char* schedule, policy::Strategy strategy) {
        eval::SimulationConfig cfg;
        cfg.corpus = gold.dataset;
        cfg.gold = gold.gold;
        cfg.seed_query = corpus::parse_query(spec.query_word);
        cfg.model_schedule = policy::parse_schedule(schedule);
        cfg.al_strategy = strategy;
        cfg.trainers["light"] = learning::make_light_trainer(learning::SvmHyper{});
        cfg.trainers["heavy"] = learning::make_heavy_trainer(learning::SvmHyper{}, table);
        return cfg;
    };
    const auto mixed = eval::run_simulation(config("light:0-4,heavy:5-6", policy::Strategy::uncertainty));
    const auto heavy = eval::run_simulation(config("heavy:0-", policy::Strategy::uncertainty));
    const auto random = eval::run_simulation(config("light:0-4,heavy:5-6", policy::Strategy::random));

    const std::size_t last = 6;
    const double diff = mixed.mean_f1[last] - heavy.mean_f1[last];
    int strict = 0;
    for (std::uint64_t seed = 0; seed < 5; ++seed) strict += mixed.at(seed, last).report.f1 > random.at(seed, last).report.f1;
    const bool ok = prior <= 0.1 && gold.gold.size() == 3000 && std::abs(diff) <= 0.03 &&
                    mixed.mean_f1[last] >= random.mean_f1[last] - 0.01 && strict >= 3;
    return {ok, fmt::format("prior {:.3f}; final F1 mixed {:.4f} heavy {:.4f} (diff {:+.4f}, tol 0.03); uncertainty "
                            "{:.4f} vs random {:.4f}, strictly better in {}/5 seeds",
                            prior, mixed.mean_f1[last], heavy.mean_f1[last], diff, mixed.mean_f1[last],
                            random.mean_f1[last], strict)};
}

// ---------------------------------------------------------------------------
// Crash recovery

json state_of(const store::WorkspaceStore& st, const registry::ModelRegistry& reg, const std::string& cat) {
    json labels = json::object();
    for (const auto& [id, l] : st.current_labels("w", cat)) {
        labels[id] = {l.positive, std::string(store::to_string(l.source))};
    }
    json model = nullptr;
    if (const auto a = reg.active("w", cat)) {
        json probs = json::array();
        for (const auto& p : a->predictions) probs.push_back(p.probability);
        model = {{"model_id", a->record.model_id}, {"iteration", a->record.iteration},
                 {"label_next", a->label_next}, {"predictions", probs}};
    }
    return {{"labels", labels}, {"active", model}};
}

bool write_all(int fd, const std::string& s) {
    std::size_t off = 0;
    while (off < s.size()) {
        const auto n = ::write(fd, s.data() + off, s.size() - off);
        if (n <= 0) return false;
        off += static_cast<std::size_t>(n);
    }
    return true;
}

[[noreturn]] void crash_child(const std::filesystem::path& root, int fd) {
    try {
        service::Application app(appfix::config(root));
        appfix::seed_workspace(app);
        const auto pos = appfix::weather_ids(), neg = appfix::market_ids();
        for (std::size_t i = 0; i < 20; ++i) app.set_label("w", "", pos[i], store::LabelValue::positive);
        for (std::size_t i = 0; i < 10; ++i) app.set_label("w", "", neg[i], store::LabelValue::negative);
        app.wait_idle();

        auto gated = std::make_shared<appfix::GatedTrainer>(learning::make_light_trainer(learning::SvmHyper{}));
        gated->gate(true);
        const auto cat = app.resolve_category("w", "").category_id;
        gated->on_enter([&] {
            // Training of the second model is under way and its weak
            // negatives are in the log. Report what is durable, then hang.
            const auto snapshot = state_of(app.store(), app.models(), cat).dump() + "\n";
            write_all(fd, snapshot);
        });
        app.set_trainer("light", gated);
        for (std::size_t i = 20; i < 30; ++i) app.set_label("w", "", pos[i], store::LabelValue::positive);
        for (std::size_t i = 10; i < 20; ++i) app.set_label("w", "", neg[i], store::LabelValue::negative);
        for (;;) ::pause();
    } catch (const std::exception& e) {
        write_all(fd, std::string("error ") + e.what() + "\n");
    }
    ::_exit(3);
}

Outcome crash_recovery() {
    support::TempDir dir("crash");
    int fds[2];
    if (::pipe(fds) != 0) return {false, "pipe failed"};
    const pid_t pid = ::fork();
    if (pid < 0) return {false, "fork failed"};
    if (pid == 0) {
        ::close(fds[0]);
        crash_child(dir.path(), fds[1]);
    }
    ::close(fds[1]);
    std::string line;
    char buf[4096];
    while (line.find('\n') == std::string::npos) {
        const auto n = ::read(fds[0], buf, sizeof buf);
        if (n <= 0) break;
        line.append(buf, static_cast<std::size_t>(n));
    }
    ::kill(pid, SIGKILL);
    int status = 0;
    ::waitpid(pid, &status, 0);
    ::close(fds[0]);
    if (line.empty() || line.starts_with("error")) return {false, "child did not reach training: " + line};
    const auto before = json::parse(line);

    // Restart from disk alone.
    auto catalog = std::make_shared<corpus::DatasetCatalog>(dir.path());
    auto st = std::make_shared<store::WorkspaceStore>(dir.path(), catalog);
    const auto cat = st->category("w", "Weather").category_id;
    const registry::ModelRegistry reg(dir.path(), st, nullptr);
    const auto after = state_of(*st, reg, cat);
    if (after != before) {
        return {false, fmt::format("state differs after restart: {} labels before, {} after; active {} vs {}",
                                   before["labels"].size(), after["labels"].size(), before["active"]["model_id"].dump(),
                                   after["active"]["model_id"].dump())};
    }
    if (reg.record("w", cat, 2).status != registry::ModelStatus::failed) {
        return {false, "interrupted model was not marked failed"};
    }

    // The service resumes the pending trigger after restart.
    service::Application app(appfix::config(dir.path()));
    app.wait_idle();
    const auto resumed = app.status("w", "");
    const bool ok = resumed.active_model && resumed.active_model->iteration == 3;
    return {ok, fmt::format("killed while training model 2; {} labels and active model {} identical after replay; "
                            "model 2 marked failed; service retrained as iteration {}",
                            after["labels"].size(), after["active"]["model_id"].get<std::string>(),
                            resumed.active_model ? resumed.active_model->iteration : 0)};
}

// ---------------------------------------------------------------------------
// Build contents

Outcome no_secondary_build() {
    namespace fs = std::filesystem;
    const fs::path build(LABELKIT_BUILD_DIR);
    std::size_t files = 0;
    for (const auto& entry : fs::recursive_directory_iterator(build, fs::directory_options::skip_permission_denied)) {
        ++files;
        const auto name = entry.path().filename().string();
        const auto ext = entry.path().extension().string();
        if (name == "node_modules" || name == "package.json" || name.find("webui") != std::string::npos ||
            ext == ".js" || ext == ".ts" || ext == ".tsx" || ext == ".html") {
            return {false, "secondary artifact in build tree: " + entry.path().string()};
        }
    }
    return {true, fmt::format("build tree ({} entries) holds only the C++ library, CLI and tests", files)};
}

} // namespace

int main() {
    spdlog::set_level(spdlog::level::err);
    // Forks first, while this process has no other threads.
    run("crash-recovery", crash_recovery);
    run("trigger-exactness", trigger_exactness);
    run("weak-negative-ratio", weak_negative_ratio);
    run("search-oracle", search_oracle);
    run("svm-sanity", svm_sanity);
    run("precision-unbiased", precision_unbiased);
    run("label-noise-recovery", noise_recovery);
    run("schedule-analogue", schedule_analogue);
    run("no-secondary-component", no_secondary_build);
    std::printf("%s: %d failed\n", failures ? "FAIL" : "PASS", failures);
    return failures ? 1 : 0;
}
