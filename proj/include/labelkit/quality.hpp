#pragma once

#include "labelkit/learning.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace labelkit::quality {

struct LabeledText {
    std::string element_id;
    std::vector<std::string> tokens;
    bool positive = false;
};

struct SuspectLabel {
    std::string element_id;
    bool user_label = false;
    bool predicted_positive = false;
    double probability = 0.5;
    /// |p - 0.5| * 2 of the held-out fold model.
    double confidence = 0.0;
    std::size_t fold = 0;
};

struct DisagreementReport {
    std::vector<SuspectLabel> suspects;
    std::vector<std::string> warnings;
};

/// Seeded stratified k-fold cross-validation over user labels. Each element is
/// predicted by the model trained without its fold; labels the held-out model
/// contradicts are returned, most confident first (ties by element id).
/// `max_results == 0` returns all of them.
DisagreementReport cross_validation_disagreements(std::span<const LabeledText> labeled, std::size_t folds,
                                                  const learning::Trainer& trainer, std::uint64_t seed,
                                                  std::size_t max_results = 0);

/// Fold index (0..k-1) for each input, stratified by label.
std::vector<std::size_t> stratified_folds(std::span<const LabeledText> labeled, std::size_t folds, std::uint64_t seed);

struct ContradictingPair {
    std::string element_a;
    std::string element_b;
    bool label_a = false;
    bool label_b = false;
    double distance = 0.0;
};

/// Oppositely labeled pairs ranked by Euclidean distance between averaged
/// embeddings (closest first). Elements with no in-table token are skipped.
/// Each pair is reported with element_a < element_b.
std::vector<ContradictingPair> contradicting_pairs(std::span<const LabeledText> labeled,
                                                   const learning::EmbeddingTable& embeddings, std::size_t top_n);

} // namespace labelkit::quality
