#include "labelkit/csv.hpp"
#include "labelkit/error.hpp"
#include "labelkit/random.hpp"
#include "labelkit/eval.hpp"
#include "labelkit/synthetic.hpp"

#include <doctest.h>
#include <random>

using namespace labelkit;
using namespace labelkit::eval;

namespace {

ErrorCode code_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return ErrorCode::InvalidArgument;
}

std::vector<std::string> ids(std::size_t n, const std::string& prefix = "e") {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
    return out;
}

SimulationConfig small_config(std::size_t elements = 800) {
    synthetic::CorpusSpec spec;
    spec.elements = elements;
    const auto c = synthetic::make_corpus(spec);
    auto gold = load_gold_corpus(c.csv, "gold");
    SimulationConfig cfg;
    cfg.corpus = gold.dataset;
    cfg.gold = gold.gold;
    cfg.seed_query = corpus::parse_query(spec.query_word);
    cfg.seed_positive_target = 10;
    cfg.batch_size = 20;
    cfg.iterations = 3;
    cfg.seeds = {0, 1};
    cfg.trainers["light"] = learning::make_light_trainer(learning::SvmHyper{});
    return cfg;
}

} // namespace

TEST_CASE("report formulas") {
    const auto r = report_from_counts(2, 1, 2);
    CHECK(r.precision == doctest::Approx(2.0 / 3));
    CHECK(r.recall == doctest::Approx(0.5));
    CHECK(r.f1 == doctest::Approx(4.0 / 7));
    CHECK(compute_report({true, false, true}, {true, false, true}).f1 == 1.0);
    const auto none = compute_report({false, false}, {true, false});
    CHECK(none.precision == 0.0);
    CHECK(none.recall == 0.0);
    CHECK(none.f1 == 0.0);
}

TEST_CASE("report matches a confusion-matrix recomputation") {
    std::mt19937_64 gen(3);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 1 + gen() % 40;
        std::vector<bool> p(n), g(n);
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < n; ++i) {
            p[i] = gen() % 2;
            g[i] = gen() % 3 == 0;
            tp += p[i] && g[i];
            fp += p[i] && !g[i];
            fn += !p[i] && g[i];
        }
        const double prec = tp + fp > 0 ? tp / (tp + fp) : 0, rec = tp + fn > 0 ? tp / (tp + fn) : 0;
        const double f1 = tp > 0 ? 2 * tp / (2 * tp + fp + fn) : 0;
        const auto r = compute_report(p, g);
        CHECK(r.precision == doctest::Approx(prec));
        CHECK(r.recall == doctest::Approx(rec));
        CHECK(r.f1 == doctest::Approx(f1));
    }
}

TEST_CASE("precision sample size") {
    const auto many = ids(500);
    const auto s = sample_for_precision(many, {}, 50, 1);
    CHECK(s.size() == 50);
    CHECK(std::set<std::string>(s.begin(), s.end()).size() == 50);
    const auto few = ids(12);
    CHECK(sample_for_precision(few, {}, 50, 1).size() == 12);
    const std::set<std::string> all(few.begin(), few.end());
    CHECK(code_of([&] { sample_for_precision(few, all, 50, 1); }) == ErrorCode::NoPositivePredictions);
    const std::set<std::string> some{"e0", "e1"};
    for (const auto& id : sample_for_precision(few, some, 50, 2)) CHECK_FALSE(some.contains(id));
}

TEST_CASE("precision submission") {
    PrecisionEvalSession s;
    s.sampled = ids(50);
    std::map<std::string, bool> labels;
    for (std::size_t i = 0; i < 50; ++i) labels["e" + std::to_string(i)] = i < 41;
    SUBCASE("41 of 50") {
        CHECK(submit_evaluation_labels(s, labels).precision == doctest::Approx(0.82));
        CHECK(s.complete);
        CHECK(s.precision == doctest::Approx(0.82));
        CHECK(code_of([&] { submit_evaluation_labels(s, labels); }) == ErrorCode::SessionClosed);
    }
    SUBCASE("all positive") {
        for (auto& [_, v] : labels) v = true;
        CHECK(submit_evaluation_labels(s, labels).precision == 1.0);
    }
    SUBCASE("one missing") {
        labels.erase("e7");
        CHECK(code_of([&] { submit_evaluation_labels(s, labels); }) == ErrorCode::IncompleteLabels);
        CHECK_FALSE(s.complete);
    }
}

TEST_CASE("precision estimate is unbiased") {
    // Monte Carlo reference: the mean of 200 sessions deviates from p* with
    // standard deviation about 0.0045 and at most 0.02 over 2000 batches.
    const auto pool = ids(1000);
    for (double p : {0.3, 0.7, 0.9}) {
        double sum = 0.0;
        for (std::uint64_t k = 0; k < 200; ++k) {
            const auto sample = sample_for_precision(pool, {}, 50, mix_seed(99, k));
            std::size_t pos = 0;
            for (const auto& id : sample) pos += std::stoul(id.substr(1)) < p * 1000 ? 1 : 0;
            sum += pos / 50.0;
        }
        CHECK(std::abs(sum / 200 - p) <= 0.05);
    }
}

TEST_CASE("gold corpus loading") {
    const auto g = load_gold_corpus("text,gold\na,true\n,false\nb,NO\nc,1\n", "gold");
    CHECK(g.dataset->size() == 3);
    CHECK(g.gold == std::vector<bool>{true, false, true});
    CHECK(code_of([] { load_gold_corpus("text,gold\na,maybe\n", "gold"); }) == ErrorCode::MalformedRow);
    CHECK(code_of([] { load_gold_corpus("text,label\na,1\n", "gold"); }) == ErrorCode::MissingColumn);
}

TEST_CASE("seed phase stops at the target positive") {
    // 60 query hits alternate positive/negative; the rest never match.
    std::string csv = "text,gold\n";
    for (int i = 0; i < 60; ++i) csv += std::string("health topic w") + std::to_string(i) + (i % 2 ? ",false\n" : ",true\n");
    for (int i = 0; i < 300; ++i) csv += "filler words only x" + std::to_string(i) + (i % 10 ? ",false\n" : ",true\n");
    const auto g = load_gold_corpus(csv, "gold");
    SimulationConfig cfg;
    cfg.corpus = g.dataset;
    cfg.gold = g.gold;
    cfg.seed_query = corpus::parse_query("health");
    cfg.seed_positive_target = 12;
    cfg.iterations = 0;
    cfg.seeds = {0, 1, 2};
    cfg.negative_ratio = 0.0;
    cfg.record_training_ids = true;
    cfg.trainers["light"] = learning::make_light_trainer(learning::SvmHyper{});
    const auto r = run_simulation(cfg);
    for (std::size_t k = 0; k < cfg.seeds.size(); ++k) {
        const auto& seed_ids = r.training_ids[k];
        CHECK(seed_ids.size() == r.seed_phase_size.at(cfg.seeds[k]));
        std::size_t pos = 0;
        for (const auto& id : seed_ids) {
            const auto idx = *g.dataset->find(id);
            CHECK(g.dataset->element(idx).text.starts_with("health"));
            pos += g.gold[idx] ? 1 : 0;
        }
        CHECK(pos == 12);
    }
    cfg.seed_positive_target = 40;
    CHECK(code_of([&] { run_simulation(cfg); }) == ErrorCode::SeedQueryTooSparse);
}

TEST_CASE("simulation arithmetic, schedule and determinism") {
    auto cfg = small_config();
    cfg.model_schedule = policy::parse_schedule("light:0-1,heavy:2-3");
    cfg.trainers["heavy"] = learning::make_heavy_trainer(learning::SvmHyper{}, nullptr);
    cfg.record_training_ids = true;
    const auto a = run_simulation(cfg);
    REQUIRE(a.rows.size() == cfg.seeds.size() * (cfg.iterations + 1));
    for (const auto seed : cfg.seeds) {
        CHECK(a.at(seed, cfg.iterations).train_size == a.seed_phase_size.at(seed) + cfg.iterations * cfg.batch_size);
        CHECK(a.at(seed, 1).flavor == "light");
        CHECK(a.at(seed, 2).flavor == "heavy");
        CHECK(a.at(seed, 3).flavor == "heavy");
    }
    const auto b = run_simulation(cfg);
    REQUIRE(b.rows.size() == a.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].report.f1 == b.rows[i].report.f1);
        CHECK(a.rows[i].train_size == b.rows[i].train_size);
    }
    CHECK(a.training_ids == b.training_ids);
    CHECK(a.mean_f1 == b.mean_f1);
}

TEST_CASE("test split never enters training") {
    auto cfg = small_config();
    cfg.record_training_ids = true;
    for (auto strategy : {policy::Strategy::uncertainty, policy::Strategy::random}) {
        cfg.al_strategy = strategy;
        const auto r = run_simulation(cfg);
        for (std::size_t i = 0; i < r.rows.size(); ++i) {
            const auto& test = r.test_ids.at(r.rows[i].seed);
            const std::set<std::string> test_set(test.begin(), test.end());
            for (const auto& id : r.training_ids[i]) CHECK_FALSE(test_set.contains(id));
            CHECK(r.training_ids[i].size() == r.rows[i].training_set_size);
        }
    }
}

TEST_CASE("stratified split keeps the class balance") {
    std::vector<bool> gold(1000, false);
    for (int i = 0; i < 100; ++i) gold[i * 10] = true;
    const auto test = stratified_test_split(gold, 0.3, 4);
    std::size_t pos = 0;
    for (const auto i : test) pos += gold[i];
    CHECK(test.size() == 300);
    CHECK(pos == 30);
}

TEST_CASE("simulation csv columns") {
    auto cfg = small_config(400);
    cfg.iterations = 1;
    cfg.seeds = {0};
    const auto r = run_simulation(cfg);
    const auto rows = csv::parse(simulation_csv(r));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == csv::Row{"seed", "iteration", "precision", "recall", "f1", "train_size"});
    CHECK(csv::parse(simulation_summary_csv(r))[0] == csv::Row{"iteration", "mean_f1", "std_f1"});
}
