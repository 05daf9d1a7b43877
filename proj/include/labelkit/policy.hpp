#pragma once

#include "labelkit/store.hpp"

#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace labelkit::policy {

enum class Strategy { uncertainty, random };

std::string_view to_string(Strategy s);
Strategy parse_strategy(std::string_view s);

/// Inclusive iteration range mapped to a model flavor ("light", "heavy", ...).
struct ScheduleEntry {
    std::uint64_t first = 0;
    std::uint64_t last = 0;
    std::string flavor;

    bool operator==(const ScheduleEntry&) const = default;
};

using ModelSchedule = std::vector<ScheduleEntry>;

/// Parse `light:0-4,heavy:5-6`. A range may be a single number (`heavy:7`)
/// or open-ended (`heavy:5-`).
ModelSchedule parse_schedule(std::string_view text);
std::string format_schedule(const ModelSchedule& schedule);

struct PolicyConfig {
    std::size_t first_model_positive_threshold = 20;
    std::size_t retrain_label_delta = 20;
    double negative_ratio = 2.0;
    std::size_t precision_sample_size = 50;
    Strategy al_strategy = Strategy::uncertainty;
    ModelSchedule model_schedule;
    std::size_t label_next_size = 30;
    std::uint64_t seed = 0;

    /// Throws Error{InvalidArgument} when a threshold or ratio is out of range.
    void validate() const;
};

bool should_train(const store::LabelCounts& counts, bool has_model, const PolicyConfig& cfg);

/// Fraction of the way to the next training trigger, clamped to [0, 1].
double training_progress(const store::LabelCounts& counts, bool has_model, const PolicyConfig& cfg);

struct TrainingEntry {
    std::string element_id;
    int label = 1; // +1 or -1
    store::LabelSource provenance = store::LabelSource::user;
};

struct TrainingSet {
    std::vector<TrainingEntry> entries;

    std::size_t positives() const;
    std::size_t negatives() const;
    std::vector<std::string> weak_negatives() const;
};

/// Every current user and evaluation label, topped up with seeded uniform
/// picks from `unlabeled_pool` as weak negatives until negatives reach
/// ceil(negative_ratio * positives) or the pool runs out. Existing weak
/// labels in `current` are ignored (they are re-drawn) and pool entries
/// that carry a user or evaluation label are never picked.
TrainingSet select_training_set(const store::LabelMap& current, std::span<const std::string> unlabeled_pool,
                                const PolicyConfig& cfg, std::uint64_t seed);

/// Flavor of the first schedule entry containing `iteration`; "light" when none does.
std::string model_flavor_for(std::uint64_t iteration, const PolicyConfig& cfg);

/// Up to `k` element ids not in `already_labeled`. Uncertainty orders by
/// |p - 0.5| ascending then id; random is a seeded shuffle of the id-sorted
/// candidates.
std::vector<std::string> rank_for_labeling(const std::map<std::string, double>& predictions,
                                           const std::set<std::string>& already_labeled, Strategy strategy,
                                           std::size_t k, std::uint64_t seed);

} // namespace labelkit::policy
