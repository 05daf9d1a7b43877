#pragma once

#include "labelkit/corpus.hpp"
#include "labelkit/learning.hpp"
#include "labelkit/policy.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace labelkit::eval {

struct EvalReport {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
};

/// Ratios default to 0 when their denominator is 0.
EvalReport report_from_counts(std::size_t tp, std::size_t fp, std::size_t fn);
EvalReport compute_report(const std::vector<bool>& predicted, const std::vector<bool>& gold);

// ---------------------------------------------------------------------------
// Live precision estimate

struct PrecisionEvalSession {
    std::string session_id;
    std::string workspace_id;
    std::string category_id;
    std::uint64_t model_iteration = 0;
    std::vector<std::string> sampled;
    std::map<std::string, bool> received;
    bool complete = false;
    bool short_sample = false;
    std::size_t requested = 0;
    std::optional<double> precision;
};

/// Uniform seeded sample of min(n, available) ids from `positive_predicted`
/// minus `excluded`. Throws NoPositivePredictions when nothing is available.
std::vector<std::string> sample_for_precision(std::span<const std::string> positive_predicted,
                                              const std::set<std::string>& excluded, std::size_t n,
                                              std::uint64_t seed);

/// Precision = positives / sampled. Requires a label for every sampled id
/// (IncompleteLabels otherwise); marks the session complete.
EvalReport submit_evaluation_labels(PrecisionEvalSession& session, const std::map<std::string, bool>& labels);

// ---------------------------------------------------------------------------
// Simulation harness

struct SimulationConfig {
    std::shared_ptr<const corpus::IndexedDataset> corpus;
    /// Gold label per element, in corpus element order.
    std::vector<bool> gold;
    corpus::Query seed_query;
    std::size_t seed_positive_target = 30;
    std::size_t batch_size = 30;
    std::size_t iterations = 6;
    policy::ModelSchedule model_schedule;
    policy::Strategy al_strategy = policy::Strategy::uncertainty;
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    double test_fraction = 0.3;
    /// Weak negatives top up each training set to this negatives:positives
    /// ratio; 0 disables them.
    double negative_ratio = 2.0;
    /// Trainer per model flavor named in the schedule (and "light").
    std::map<std::string, std::shared_ptr<const learning::Trainer>> trainers;
    bool record_training_ids = false;
};

struct IterationResult {
    std::uint64_t seed = 0;
    std::size_t iteration = 0;
    std::string flavor;
    EvalReport report;
    /// Gold-labeled examples so far (seed phase plus batches).
    std::size_t train_size = 0;
    /// Examples the model was fit on, including weak negatives.
    std::size_t training_set_size = 0;
};

struct SimulationResult {
    std::vector<IterationResult> rows;
    std::vector<double> mean_f1;
    std::vector<double> std_f1;
    std::map<std::uint64_t, std::size_t> seed_phase_size;
    /// Filled when record_training_ids is set: per row, and per seed.
    std::vector<std::vector<std::string>> training_ids;
    std::map<std::uint64_t, std::vector<std::string>> test_ids;

    const IterationResult& at(std::uint64_t seed, std::size_t iteration) const;
};

/// Indices of the held-out test split, stratified by gold label.
std::vector<std::size_t> stratified_test_split(const std::vector<bool>& gold, double fraction, std::uint64_t seed);

SimulationResult run_simulation(const SimulationConfig& cfg);

struct GoldCorpus {
    std::shared_ptr<const corpus::IndexedDataset> dataset;
    /// Gold label per element, in dataset element order.
    std::vector<bool> gold;
};

/// Ingest a CSV with a `text` column and a gold label column (true/false,
/// 1/0, positive/negative, yes/no). MalformedRow on an unreadable label.
GoldCorpus load_gold_corpus(std::string_view csv_bytes, std::string_view gold_column,
                            std::string_view name = "corpus");

std::string simulation_csv(const SimulationResult& result);
/// iteration,mean_f1,std_f1 table.
std::string simulation_summary_csv(const SimulationResult& result);

} // namespace labelkit::eval
