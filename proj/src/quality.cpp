#include "labelkit/quality.hpp"

#include "labelkit/error.hpp"
#include "labelkit/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <spdlog/spdlog.h>

namespace labelkit::quality {

std::vector<std::size_t> stratified_folds(std::span<const LabeledText> labeled, std::size_t folds, std::uint64_t seed) {
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < labeled.size(); ++i) (labeled[i].positive ? pos : neg).push_back(i);
    Rng rng(seed);
    rng.shuffle(std::span(pos));
    rng.shuffle(std::span(neg));

    std::vector<std::size_t> assignment(labeled.size(), 0);
    std::size_t next = 0;
    for (const auto* group : {&pos, &neg}) {
        for (const auto i : *group) assignment[i] = next++ % folds;
    }
    return assignment;
}

DisagreementReport cross_validation_disagreements(std::span<const LabeledText> labeled, std::size_t folds,
                                                  const learning::Trainer& trainer, std::uint64_t seed,
                                                  std::size_t max_results) {
    if (folds < 2) fail(ErrorCode::InvalidArgument, "cross-validation needs at least 2 folds");
    const auto positives = static_cast<std::size_t>(
        std::count_if(labeled.begin(), labeled.end(), [](const auto& l) { return l.positive; }));
    const auto negatives = labeled.size() - positives;
    if (labeled.size() < folds || positives < 2 || negatives < 2) {
        fail(ErrorCode::InsufficientData, "need at least " + std::to_string(folds) +
                                              " labels and two of each class for cross-validation");
    }

    const auto assignment = stratified_folds(labeled, folds, seed);
    DisagreementReport report;
    for (std::size_t fold = 0; fold < folds; ++fold) {
        std::vector<learning::TrainingExample> train;
        bool has_pos = false, has_neg = false;
        for (std::size_t i = 0; i < labeled.size(); ++i) {
            if (assignment[i] == fold) continue;
            train.push_back({labeled[i].tokens, labeled[i].positive});
            (labeled[i].positive ? has_pos : has_neg) = true;
        }
        if (!has_pos || !has_neg || train.size() < 2) {
            report.warnings.push_back("fold " + std::to_string(fold) + " skipped: training split lacks a class");
            spdlog::warn("{}", report.warnings.back());
            continue;
        }
        const auto model = trainer.train(train);
        for (std::size_t i = 0; i < labeled.size(); ++i) {
            if (assignment[i] != fold) continue;
            const auto prediction = model->predict(labeled[i].tokens);
            if (prediction.predicted_positive == labeled[i].positive) continue;
            report.suspects.push_back({labeled[i].element_id, labeled[i].positive, prediction.predicted_positive,
                                       prediction.probability, std::abs(prediction.probability - 0.5) * 2.0, fold});
        }
    }
    std::sort(report.suspects.begin(), report.suspects.end(), [](const auto& a, const auto& b) {
        if (a.confidence != b.confidence) return a.confidence > b.confidence;
        return a.element_id < b.element_id;
    });
    if (max_results && report.suspects.size() > max_results) report.suspects.resize(max_results);
    return report;
}

std::vector<ContradictingPair> contradicting_pairs(std::span<const LabeledText> labeled,
                                                   const learning::EmbeddingTable& embeddings, std::size_t top_n) {
    struct Embedded {
        const LabeledText* item;
        std::vector<double> vec;
    };
    std::vector<Embedded> pos, neg;
    for (const auto& l : labeled) {
        auto vec = learning::embed_average(std::span<const std::string>(l.tokens), embeddings);
        if (std::all_of(vec.begin(), vec.end(), [](double x) { return x == 0.0; })) continue;
        (l.positive ? pos : neg).push_back({&l, std::move(vec)});
    }

    std::vector<ContradictingPair> pairs;
    pairs.reserve(pos.size() * neg.size());
    for (const auto& p : pos) {
        for (const auto& n : neg) {
            double sq = 0.0;
            for (std::size_t k = 0; k < p.vec.size(); ++k) {
                const double d = p.vec[k] - n.vec[k];
                sq += d * d;
            }
            ContradictingPair pair{p.item->element_id, n.item->element_id, true, false, std::sqrt(sq)};
            if (pair.element_b < pair.element_a) {
                std::swap(pair.element_a, pair.element_b);
                std::swap(pair.label_a, pair.label_b);
            }
            pairs.push_back(std::move(pair));
        }
    }
    const auto take = std::min(top_n, pairs.size());
    std::partial_sort(pairs.begin(), pairs.begin() + static_cast<std::ptrdiff_t>(take), pairs.end(),
                      [](const auto& a, const auto& b) {
                          if (a.distance != b.distance) return a.distance < b.distance;
                          if (a.element_a != b.element_a) return a.element_a < b.element_a;
                          return a.element_b < b.element_b;
                      });
    pairs.resize(take);
    return pairs;
}

} // namespace labelkit::quality
