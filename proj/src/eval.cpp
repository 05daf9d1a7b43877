#include "labelkit/eval.hpp"

#include "labelkit/csv.hpp"
#include "labelkit/error.hpp"
#include "labelkit/random.hpp"
#include "labelkit/text.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace labelkit::eval {

EvalReport report_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    EvalReport r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.precision = tp + fp ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r.recall = tp + fn ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
    return r;
}

EvalReport compute_report(const std::vector<bool>& predicted, const std::vector<bool>& gold) {
    if (predicted.size() != gold.size()) fail(ErrorCode::InvalidArgument, "prediction and gold sizes differ");
    std::size_t tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        if (predicted[i] && gold[i]) ++tp;
        if (predicted[i] && !gold[i]) ++fp;
        if (!predicted[i] && gold[i]) ++fn;
    }
    return report_from_counts(tp, fp, fn);
}

std::vector<std::string> sample_for_precision(std::span<const std::string> positive_predicted,
                                              const std::set<std::string>& excluded, std::size_t n,
                                              std::uint64_t seed) {
    std::vector<std::string> pool;
    for (const auto& id : positive_predicted) {
        if (!excluded.contains(id)) pool.push_back(id);
    }
    if (pool.empty()) fail(ErrorCode::NoPositivePredictions, "no positive predictions available to evaluate");
    std::sort(pool.begin(), pool.end());
    pool.erase(std::unique(pool.begin(), pool.end()), pool.end());

    const std::size_t take = std::min(n, pool.size());
    Rng rng(seed);
    for (std::size_t i = 0; i < take; ++i) std::swap(pool[i], pool[i + rng.index(pool.size() - i)]);
    pool.resize(take);
    return pool;
}

EvalReport submit_evaluation_labels(PrecisionEvalSession& session, const std::map<std::string, bool>& labels) {
    if (session.complete) fail(ErrorCode::SessionClosed, "evaluation session already submitted");
    std::size_t missing = 0;
    for (const auto& id : session.sampled) missing += labels.contains(id) ? 0 : 1;
    if (missing) {
        fail(ErrorCode::IncompleteLabels, std::to_string(missing) + " of " + std::to_string(session.sampled.size()) +
                                              " sampled elements are unlabeled");
    }
    std::size_t positives = 0;
    session.received.clear();
    for (const auto& id : session.sampled) {
        const bool v = labels.at(id);
        session.received.emplace(id, v);
        positives += v ? 1 : 0;
    }
    auto report = report_from_counts(positives, session.sampled.size() - positives, 0);
    report.recall = 0.0;
    report.f1 = 0.0;
    session.precision = report.precision;
    session.complete = true;
    return report;
}

// ---------------------------------------------------------------------------
// Simulation

const IterationResult& SimulationResult::at(std::uint64_t seed, std::size_t iteration) const {
    for (const auto& r : rows) {
        if (r.seed == seed && r.iteration == iteration) return r;
    }
    fail(ErrorCode::InvalidArgument, "no simulation row for that seed and iteration");
}

std::vector<std::size_t> stratified_test_split(const std::vector<bool>& gold, double fraction, std::uint64_t seed) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < gold.size(); ++i) (gold[i] ? pos : neg).push_back(i);
    Rng rng(seed);
    std::vector<std::size_t> test;
    for (auto* group : {&pos, &neg}) {
        rng.shuffle(std::span(*group));
        const auto take = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(group->size())));
        test.insert(test.end(), group->begin(), group->begin() + static_cast<std::ptrdiff_t>(take));
    }
    std::sort(test.begin(), test.end());
    return test;
}

namespace {

struct Arm {
    const SimulationConfig& cfg;
    std::uint64_t seed;
    SimulationResult& out;

    std::vector<bool> in_test;
    std::vector<bool> labeled;
    std::vector<std::size_t> labeled_order;

    const learning::Trainer& trainer_for(const std::string& flavor) const {
        const auto it = cfg.trainers.find(flavor);
        if (it == cfg.trainers.end() || !it->second) {
            fail(ErrorCode::InvalidArgument, "no trainer registered for model flavor '" + flavor + "'");
        }
        return *it->second;
    }

    void label(std::size_t idx) {
        labeled[idx] = true;
        labeled_order.push_back(idx);
    }

    void seed_phase() {
        const auto& corpus = *cfg.corpus;
        std::vector<std::size_t> hits;
        for (const auto& h : corpus.search(cfg.seed_query, corpus.size())) {
            if (!in_test[h.element_index]) hits.push_back(h.element_index);
        }
        const auto available = static_cast<std::size_t>(
            std::count_if(hits.begin(), hits.end(), [&](std::size_t i) { return cfg.gold[i]; }));
        if (available < cfg.seed_positive_target) {
            fail(ErrorCode::SeedQueryTooSparse, "seed query yields " + std::to_string(available) +
                                                    " positives in the training split, need " +
                                                    std::to_string(cfg.seed_positive_target));
        }
        std::sort(hits.begin(), hits.end());
        Rng rng(mix_seed(seed, 2));
        rng.shuffle(std::span(hits));
        std::size_t positives = 0;
        for (const auto idx : hits) {
            label(idx);
            if (cfg.gold[idx] && ++positives == cfg.seed_positive_target) break;
        }
        out.seed_phase_size[seed] = labeled_order.size();
    }

    std::shared_ptr<const learning::Classifier> train(std::size_t iteration, const std::string& flavor,
                                                      std::vector<std::string>* ids, std::size_t& set_size) {
        const auto& corpus = *cfg.corpus;
        store::LabelMap current;
        for (const auto idx : labeled_order) {
            current.emplace(corpus.element(idx).element_id, store::CurrentLabel{cfg.gold[idx], store::LabelSource::user});
        }
        std::vector<std::string> pool;
        if (cfg.negative_ratio > 0.0) {
            for (std::size_t i = 0; i < corpus.size(); ++i) {
                if (!in_test[i] && !labeled[i]) pool.push_back(corpus.element(i).element_id);
            }
        }
        policy::PolicyConfig pc;
        pc.negative_ratio = cfg.negative_ratio > 0.0 ? cfg.negative_ratio : 1.0;
        const auto set = policy::select_training_set(current, pool, pc, mix_seed(seed, 100 + iteration));

        std::vector<learning::TrainingExample> examples;
        examples.reserve(set.entries.size());
        for (const auto& e : set.entries) {
            if (e.provenance == store::LabelSource::weak_negative && cfg.negative_ratio <= 0.0) continue;
            const auto idx = *corpus.find(e.element_id);
            examples.push_back({corpus.tokens(idx), e.label > 0});
            if (ids) ids->push_back(e.element_id);
        }
        set_size = examples.size();
        return trainer_for(flavor).train(examples);
    }

    void run() {
        const auto& corpus = *cfg.corpus;
        in_test.assign(corpus.size(), false);
        labeled.assign(corpus.size(), false);
        const auto test = stratified_test_split(cfg.gold, cfg.test_fraction, mix_seed(seed, 1));
        for (const auto i : test) in_test[i] = true;
        if (cfg.record_training_ids) {
            auto& ids = out.test_ids[seed];
            for (const auto i : test) ids.push_back(corpus.element(i).element_id);
        }

        seed_phase();

        std::shared_ptr<const learning::Classifier> model;
        for (std::size_t iteration = 0; iteration <= cfg.iterations; ++iteration) {
            if (iteration > 0) {
                std::map<std::string, double> predictions;
                for (std::size_t i = 0; i < corpus.size(); ++i) {
                    if (!in_test[i] && !labeled[i]) predictions.emplace(corpus.element(i).element_id, model->probability(corpus.tokens(i)));
                }
                const auto batch = policy::rank_for_labeling(predictions, {}, cfg.al_strategy, cfg.batch_size,
                                                             mix_seed(seed, 200 + iteration));
                for (const auto& id : batch) label(*corpus.find(id));
            }

            IterationResult row;
            row.seed = seed;
            row.iteration = iteration;
            policy::PolicyConfig pc;
            pc.model_schedule = cfg.model_schedule;
            row.flavor = policy::model_flavor_for(iteration, pc);
            std::vector<std::string> ids;
            model = train(iteration, row.flavor, cfg.record_training_ids ? &ids : nullptr, row.training_set_size);
            row.train_size = labeled_order.size();

            std::size_t tp = 0, fp = 0, fn = 0;
            for (const auto i : test) {
                const bool predicted = model->predict(corpus.tokens(i)).predicted_positive;
                tp += predicted && cfg.gold[i];
                fp += predicted && !cfg.gold[i];
                fn += !predicted && cfg.gold[i];
            }
            row.report = report_from_counts(tp, fp, fn);
            out.rows.push_back(row);
            if (cfg.record_training_ids) out.training_ids.push_back(std::move(ids));
        }
    }
};

} // namespace

SimulationResult run_simulation(const SimulationConfig& cfg) {
    if (!cfg.corpus) fail(ErrorCode::InvalidArgument, "simulation needs a corpus");
    if (cfg.gold.size() != cfg.corpus->size()) fail(ErrorCode::InvalidArgument, "gold labels must cover the corpus");
    if (cfg.seed_positive_target < 1 || cfg.batch_size < 1) fail(ErrorCode::InvalidArgument, "targets must be >= 1");
    if (cfg.seeds.empty()) fail(ErrorCode::InvalidArgument, "simulation needs at least one seed");
    if (!(cfg.test_fraction > 0.0 && cfg.test_fraction < 1.0)) fail(ErrorCode::InvalidArgument, "test_fraction in (0,1)");

    SimulationResult result;
    for (const auto seed : cfg.seeds) Arm{cfg, seed, result, {}, {}, {}}.run();

    result.mean_f1.assign(cfg.iterations + 1, 0.0);
    result.std_f1.assign(cfg.iterations + 1, 0.0);
    const double n = static_cast<double>(cfg.seeds.size());
    for (const auto& r : result.rows) result.mean_f1[r.iteration] += r.report.f1 / n;
    for (const auto& r : result.rows) {
        const double d = r.report.f1 - result.mean_f1[r.iteration];
        result.std_f1[r.iteration] += d * d / n;
    }
    for (auto& s : result.std_f1) s = std::sqrt(s);
    return result;
}

GoldCorpus load_gold_corpus(std::string_view csv_bytes, std::string_view gold_column, std::string_view name) {
    auto ingested = corpus::ingest_csv(csv_bytes, name);
    const auto table = csv::Table::parse(csv_bytes);
    const auto col = table.column(gold_column);
    if (!col) fail(ErrorCode::MissingColumn, "CSV header has no `" + std::string(gold_column) + "` column");

    GoldCorpus out;
    out.dataset = std::make_shared<const corpus::IndexedDataset>(std::move(ingested.dataset));
    out.gold.assign(out.dataset->size(), false);
    for (std::size_t r = 0; r < table.rows().size(); ++r) {
        const auto& id = ingested.row_elements[r];
        if (id.empty()) continue;
        std::string v(text::trim(csv::Table::field(table.rows()[r], *col)));
        std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
        bool positive = false;
        if (v == "true" || v == "1" || v == "positive" || v == "yes") positive = true;
        else if (v == "false" || v == "0" || v == "negative" || v == "no") positive = false;
        else fail(ErrorCode::MalformedRow, "row " + std::to_string(r + 2) + ": gold label '" + v + "' is not boolean");
        out.gold[*out.dataset->find(id)] = positive;
    }
    return out;
}

namespace {

std::string fmt_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

} // namespace

std::string simulation_csv(const SimulationResult& result) {
    csv::Writer w;
    w.row({"seed", "iteration", "precision", "recall", "f1", "train_size"});
    for (const auto& r : result.rows) {
        w.row({std::to_string(r.seed), std::to_string(r.iteration), fmt_double(r.report.precision),
               fmt_double(r.report.recall), fmt_double(r.report.f1), std::to_string(r.train_size)});
    }
    return w.str();
}

std::string simulation_summary_csv(const SimulationResult& result) {
    csv::Writer w;
    w.row({"iteration", "mean_f1", "std_f1"});
    for (std::size_t i = 0; i < result.mean_f1.size(); ++i) {
        w.row({std::to_string(i), fmt_double(result.mean_f1[i]), fmt_double(result.std_f1[i])});
    }
    return w.str();
}

} // namespace labelkit::eval
