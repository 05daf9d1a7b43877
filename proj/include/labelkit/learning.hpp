#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace labelkit::learning {

// ---------------------------------------------------------------------------
// Features

class Vocabulary {
public:
    Vocabulary() = default;
    /// Tokens in index order; `max_features` is the cap the vocabulary was fit with.
    Vocabulary(std::vector<std::string> tokens, std::size_t max_features);

    std::size_t size() const { return tokens_.size(); }
    std::size_t max_features() const { return max_features_; }
    const std::vector<std::string>& tokens() const { return tokens_; }
    std::optional<std::uint32_t> index_of(std::string_view token) const;

private:
    std::vector<std::string> tokens_;
    std::size_t max_features_ = 0;
    std::unordered_map<std::string, std::uint32_t> index_;
};

/// Keep the `max_features` tokens with the highest document frequency (ties
/// broken by the lexicographically smaller token). Indices are assigned in
/// lexicographic order of the kept tokens.
Vocabulary fit_vocabulary(std::span<const std::vector<std::string>> tokenized_texts, std::size_t max_features);
Vocabulary fit_vocabulary(std::span<const std::string> texts, std::size_t max_features);

/// Index-sorted sparse vector with unique indices.
struct SparseVector {
    std::vector<std::pair<std::uint32_t, double>> entries;

    bool empty() const { return entries.empty(); }
    double dot(std::span<const double> dense) const;
    bool operator==(const SparseVector&) const = default;
};

SparseVector vectorize_bow(std::span<const std::string> tokens, const Vocabulary& vocab);
SparseVector vectorize_bow(std::string_view text, const Vocabulary& vocab);

/// Word vectors keyed by token. Every vector has the same dimension.
class EmbeddingTable {
public:
    EmbeddingTable() = default;
    explicit EmbeddingTable(std::size_t dim) : dim_(dim) {}

    /// Text format: one token per line followed by `dim` space-separated floats.
    static EmbeddingTable load(const std::filesystem::path& path);
    static EmbeddingTable parse(std::string_view text);

    void add(std::string token, std::vector<double> vector);
    std::size_t dim() const { return dim_; }
    std::size_t size() const { return vectors_.size(); }
    const std::vector<double>* find(std::string_view token) const;

private:
    std::size_t dim_ = 0;
    std::unordered_map<std::string, std::vector<double>> vectors_;
};

/// Mean vector of the in-table tokens; the zero vector when none are known.
std::vector<double> embed_average(std::span<const std::string> tokens, const EmbeddingTable& table);
std::vector<double> embed_average(std::string_view text, const EmbeddingTable& table);

SparseVector to_sparse(std::span<const double> dense);

// ---------------------------------------------------------------------------
// Linear SVM

enum class FeatureKind { bow, embedding };

std::string_view to_string(FeatureKind k);
FeatureKind parse_feature_kind(std::string_view s);

struct LinearModel {
    std::vector<double> weights;
    double bias = 0.0;
    double lambda = 1e-4;
    FeatureKind feature_kind = FeatureKind::bow;

    double margin(const SparseVector& x) const { return x.dot(weights) + bias; }
    bool operator==(const LinearModel&) const = default;
};

struct LabeledVector {
    SparseVector x;
    int y = 1; // +1 or -1
};

struct SvmHyper {
    /// 0 selects 1/n, the primal equivalent of a hinge-loss SVM with C = 1.
    double lambda = 0.0;
    int epochs = 10;
    std::uint64_t seed = 0;
};

/// Objective of the model the trainer holds after each epoch.
struct TrainTrace {
    std::vector<double> epoch_objective;
};

/// lambda/2 |w|^2 + mean hinge(1 - y (w.x + b)); the bias is not regularized.
double svm_objective(std::span<const double> weights, double bias, double lambda,
                     std::span<const LabeledVector> data);

struct ObjectiveGradient {
    std::vector<double> weights;
    double bias = 0.0;
};

/// Gradient of svm_objective, valid where no example sits exactly on the
/// hinge (y (w.x + b) == 1).
ObjectiveGradient svm_gradient(std::span<const double> weights, double bias, double lambda,
                               std::span<const LabeledVector> data);

/// Stochastic subgradient descent on the primal (Pegasos step 1/(lambda t)
/// over seeded shuffled epochs, weights projected onto the ball of radius
/// 1/sqrt(lambda)). The bias is an unregularized coordinate fitted exactly
/// at the end of each epoch by a one-dimensional hinge minimization. The
/// returned model is the best epoch iterate by objective value.
LinearModel train_linear_svm(std::span<const LabeledVector> examples, std::size_t dimension, const SvmHyper& hyper,
                             FeatureKind kind = FeatureKind::bow, TrainTrace* trace = nullptr);

/// Exact minimizer of mean hinge(1 - y (s_i + b)) over b for fixed scores s_i.
double optimal_bias(std::span<const double> scores, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Probabilities and ensembles

/// Logistic link: 1 / (1 + exp(-margin)).
double calibrate(double margin);

struct Prediction {
    double probability = 0.5;
    bool predicted_positive = true;

    static Prediction from_probability(double p) { return {p, p >= 0.5}; }
    bool operator==(const Prediction&) const = default;
};

/// A trained binary classifier over tokenized text.
class Classifier {
public:
    virtual ~Classifier() = default;
    virtual double probability(std::span<const std::string> tokens) const = 0;
    virtual std::string type_name() const = 0;
    /// Write parameters into an existing directory.
    virtual void save(const std::filesystem::path& dir) const = 0;

    Prediction predict(std::span<const std::string> tokens) const {
        return Prediction::from_probability(probability(tokens));
    }
};

/// Mean of members' calibrated probabilities. Bag-of-words members share one
/// vocabulary; embedding members share one table.
class EnsembleModel final : public Classifier {
public:
    EnsembleModel(std::vector<LinearModel> members, std::shared_ptr<const Vocabulary> vocab,
                  std::shared_ptr<const EmbeddingTable> embeddings);

    double probability(std::span<const std::string> tokens) const override;
    std::vector<double> member_probabilities(std::span<const std::string> tokens) const;
    std::string type_name() const override { return "ensemble"; }
    void save(const std::filesystem::path& dir) const override;
    static std::shared_ptr<EnsembleModel> load(const std::filesystem::path& dir,
                                               std::shared_ptr<const EmbeddingTable> embeddings);

    const std::vector<LinearModel>& members() const { return members_; }
    const std::shared_ptr<const Vocabulary>& vocabulary() const { return vocab_; }

private:
    std::vector<LinearModel> members_;
    std::shared_ptr<const Vocabulary> vocab_;
    std::shared_ptr<const EmbeddingTable> embeddings_;
};

struct TrainingExample {
    std::vector<std::string> tokens;
    bool positive = false;
};

/// Pluggable model-building slot. The light flavor is a single bag-of-words
/// SVM; the heavy flavor adds an averaged-embedding SVM member.
class Trainer {
public:
    virtual ~Trainer() = default;
    virtual std::shared_ptr<const Classifier> train(std::span<const TrainingExample> examples) const = 0;
    virtual std::string flavor() const = 0;
};

struct EnsembleTrainerConfig {
    SvmHyper hyper;
    std::size_t max_features = 10000;
    bool use_bow = true;
    bool use_embedding = false;
};

class EnsembleTrainer final : public Trainer {
public:
    EnsembleTrainer(std::string flavor, EnsembleTrainerConfig config, std::shared_ptr<const EmbeddingTable> embeddings);

    std::shared_ptr<const Classifier> train(std::span<const TrainingExample> examples) const override;
    std::string flavor() const override { return flavor_; }

private:
    std::string flavor_;
    EnsembleTrainerConfig config_;
    std::shared_ptr<const EmbeddingTable> embeddings_;
};

std::shared_ptr<Trainer> make_light_trainer(const SvmHyper& hyper, std::size_t max_features = 10000);
/// Falls back to the bag-of-words member alone (with a warning) when no
/// embedding table is available.
std::shared_ptr<Trainer> make_heavy_trainer(const SvmHyper& hyper, std::shared_ptr<const EmbeddingTable> embeddings,
                                            std::size_t max_features = 10000);

} // namespace labelkit::learning
