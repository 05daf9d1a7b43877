#include "labelkit/learning.hpp"

#include "labelkit/error.hpp"
#include "labelkit/fsutil.hpp"
#include "labelkit/random.hpp"
#include "labelkit/text.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <json.hpp>
#include <map>
#include <numeric>
#include <spdlog/spdlog.h>
#include <unordered_set>

namespace labelkit::learning {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Features

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::size_t max_features)
    : tokens_(std::move(tokens)), max_features_(max_features) {
    index_.reserve(tokens_.size());
    for (std::uint32_t i = 0; i < tokens_.size(); ++i) index_.emplace(tokens_[i], i);
}

std::optional<std::uint32_t> Vocabulary::index_of(std::string_view token) const {
    const auto it = index_.find(std::string(token));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

Vocabulary fit_vocabulary(std::span<const std::vector<std::string>> tokenized_texts, std::size_t max_features) {
    if (tokenized_texts.empty()) fail(ErrorCode::EmptyCorpus, "cannot fit a vocabulary on zero texts");
    std::unordered_map<std::string, std::size_t> df;
    for (const auto& toks : tokenized_texts) {
        std::unordered_set<std::string_view> seen;
        for (const auto& t : toks) {
            if (seen.insert(t).second) ++df[t];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(df.begin(), df.end());
    std::sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    if (ranked.size() > max_features) ranked.resize(max_features);

    std::vector<std::string> kept;
    kept.reserve(ranked.size());
    for (auto& [tok, _] : ranked) kept.push_back(std::move(tok));
    std::sort(kept.begin(), kept.end());
    return Vocabulary(std::move(kept), max_features);
}

Vocabulary fit_vocabulary(std::span<const std::string> texts, std::size_t max_features) {
    std::vector<std::vector<std::string>> tokenized;
    tokenized.reserve(texts.size());
    for (const auto& t : texts) tokenized.push_back(text::tokenize(t));
    return fit_vocabulary(std::span<const std::vector<std::string>>(tokenized), max_features);
}

double SparseVector::dot(std::span<const double> dense) const {
    double s = 0.0;
    for (const auto& [i, v] : entries) s += dense[i] * v;
    return s;
}

SparseVector vectorize_bow(std::span<const std::string> tokens, const Vocabulary& vocab) {
    std::map<std::uint32_t, double> counts;
    for (const auto& t : tokens) {
        if (const auto idx = vocab.index_of(t)) counts[*idx] += 1.0;
    }
    SparseVector v;
    v.entries.assign(counts.begin(), counts.end());
    return v;
}

SparseVector vectorize_bow(std::string_view text, const Vocabulary& vocab) {
    const auto tokens = text::tokenize(text);
    return vectorize_bow(std::span<const std::string>(tokens), vocab);
}

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) { return parse(fsutil::read_file(path)); }

EmbeddingTable EmbeddingTable::parse(std::string_view data) {
    EmbeddingTable table;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < data.size()) {
        auto nl = data.find('\n', start);
        if (nl == std::string_view::npos) nl = data.size();
        const auto line = text::trim(data.substr(start, nl - start));
        start = nl + 1;
        ++line_no;
        if (line.empty()) continue;

        std::vector<std::string_view> fields;
        std::size_t p = 0;
        while (p < line.size()) {
            const auto sp = line.find_first_of(" \t", p);
            const auto end = sp == std::string_view::npos ? line.size() : sp;
            if (end > p) fields.push_back(line.substr(p, end - p));
            p = end + 1;
        }
        // word2vec-style "<count> <dim>" header
        if (line_no == 1 && fields.size() == 2 &&
            std::all_of(fields[0].begin(), fields[0].end(), [](char c) { return c >= '0' && c <= '9'; })) {
            continue;
        }
        if (fields.size() < 2) fail(ErrorCode::DecodeError, "embedding line " + std::to_string(line_no) + " has no vector");

        std::vector<double> vec;
        vec.reserve(fields.size() - 1);
        for (std::size_t k = 1; k < fields.size(); ++k) {
            const std::string field(fields[k]);
            char* end = nullptr;
            const double v = std::strtod(field.c_str(), &end);
            if (end != field.c_str() + field.size() || !std::isfinite(v)) {
                fail(ErrorCode::DecodeError, "embedding line " + std::to_string(line_no) + ": bad number " + field);
            }
            vec.push_back(v);
        }
        if (table.dim() != 0 && vec.size() != table.dim()) {
            fail(ErrorCode::DecodeError, "embedding line " + std::to_string(line_no) + " has " +
                                             std::to_string(vec.size()) + " values, expected " +
                                             std::to_string(table.dim()));
        }
        table.add(std::string(fields[0]), std::move(vec));
    }
    return table;
}

void EmbeddingTable::add(std::string token, std::vector<double> vector) {
    if (dim_ == 0) dim_ = vector.size();
    if (vector.size() != dim_ || dim_ == 0) {
        fail(ErrorCode::InvalidArgument, "embedding for '" + token + "' has dimension " +
                                             std::to_string(vector.size()) + ", expected " + std::to_string(dim_));
    }
    vectors_.insert_or_assign(std::move(token), std::move(vector));
}

const std::vector<double>* EmbeddingTable::find(std::string_view token) const {
    const auto it = vectors_.find(std::string(token));
    return it == vectors_.end() ? nullptr : &it->second;
}

std::vector<double> embed_average(std::span<const std::string> tokens, const EmbeddingTable& table) {
    std::vector<double> sum(table.dim(), 0.0);
    std::size_t n = 0;
    for (const auto& t : tokens) {
        if (const auto* v = table.find(t)) {
            for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += (*v)[k];
            ++n;
        }
    }
    if (n > 0) {
        for (auto& x : sum) x /= static_cast<double>(n);
    }
    return sum;
}

std::vector<double> embed_average(std::string_view text, const EmbeddingTable& table) {
    const auto tokens = text::tokenize(text);
    return embed_average(std::span<const std::string>(tokens), table);
}

SparseVector to_sparse(std::span<const double> dense) {
    SparseVector v;
    for (std::uint32_t i = 0; i < dense.size(); ++i) {
        if (dense[i] != 0.0) v.entries.emplace_back(i, dense[i]);
    }
    return v;
}

// ---------------------------------------------------------------------------
// Linear SVM

std::string_view to_string(FeatureKind k) { return k == FeatureKind::bow ? "bow" : "embedding"; }

FeatureKind parse_feature_kind(std::string_view s) {
    if (s == "bow") return FeatureKind::bow;
    if (s == "embedding") return FeatureKind::embedding;
    fail(ErrorCode::InvalidArgument, "unknown feature kind: " + std::string(s));
}

double svm_objective(std::span<const double> weights, double bias, double lambda,
                     std::span<const LabeledVector> data) {
    double sq = 0.0;
    for (double w : weights) sq += w * w;
    double loss = 0.0;
    for (const auto& ex : data) loss += std::max(0.0, 1.0 - ex.y * (ex.x.dot(weights) + bias));
    return 0.5 * lambda * sq + (data.empty() ? 0.0 : loss / static_cast<double>(data.size()));
}

ObjectiveGradient svm_gradient(std::span<const double> weights, double bias, double lambda,
                               std::span<const LabeledVector> data) {
    ObjectiveGradient g;
    g.weights.assign(weights.begin(), weights.end());
    for (auto& w : g.weights) w *= lambda;
    const double inv_n = 1.0 / static_cast<double>(data.size());
    for (const auto& ex : data) {
        if (ex.y * (ex.x.dot(weights) + bias) >= 1.0) continue;
        for (const auto& [i, v] : ex.x.entries) g.weights[i] -= inv_n * ex.y * v;
        g.bias -= inv_n * ex.y;
    }
    return g;
}

double optimal_bias(std::span<const double> scores, std::span<const int> labels) {
    // hinge_i(b) is max(0, c_i - b) for positives and max(0, b - c_i) for
    // negatives, with breakpoint c_i = y_i - s_i. The sum is convex and
    // piecewise linear, so its minimum is attained at a breakpoint.
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        (labels[i] > 0 ? pos : neg).push_back(static_cast<double>(labels[i]) - scores[i]);
    }
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    if (pos.empty()) return neg.empty() ? 0.0 : neg.front();
    if (neg.empty()) return pos.back();

    std::vector<double> pos_prefix(pos.size() + 1, 0.0), neg_prefix(neg.size() + 1, 0.0);
    std::partial_sum(pos.begin(), pos.end(), pos_prefix.begin() + 1);
    std::partial_sum(neg.begin(), neg.end(), neg_prefix.begin() + 1);

    auto loss_at = [&](double b) {
        // positives with c > b contribute c - b
        const auto pi = static_cast<std::size_t>(std::upper_bound(pos.begin(), pos.end(), b) - pos.begin());
        const double pos_loss = (pos_prefix.back() - pos_prefix[pi]) - b * static_cast<double>(pos.size() - pi);
        // negatives with c < b contribute b - c
        const auto ni = static_cast<std::size_t>(std::lower_bound(neg.begin(), neg.end(), b) - neg.begin());
        const double neg_loss = b * static_cast<double>(ni) - neg_prefix[ni];
        return pos_loss + neg_loss;
    };

    std::vector<double> candidates;
    candidates.reserve(pos.size() + neg.size());
    candidates.insert(candidates.end(), pos.begin(), pos.end());
    candidates.insert(candidates.end(), neg.begin(), neg.end());
    std::sort(candidates.begin(), candidates.end());

    double best = std::numeric_limits<double>::infinity();
    std::vector<double> values(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        values[i] = loss_at(candidates[i]);
        best = std::min(best, values[i]);
    }
    // Centre of the flat optimal segment.
    const double tol = 1e-12 * std::max(1.0, std::abs(best));
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        if (values[i] <= best + tol) {
            lo = std::min(lo, candidates[i]);
            hi = std::max(hi, candidates[i]);
        }
    }
    return 0.5 * (lo + hi);
}

LinearModel train_linear_svm(std::span<const LabeledVector> examples, std::size_t dimension, const SvmHyper& hyper,
                             FeatureKind kind, TrainTrace* trace) {
    if (examples.size() < 2) fail(ErrorCode::TooFewExamples, "linear SVM needs at least two examples");
    const bool has_pos = std::any_of(examples.begin(), examples.end(), [](const auto& e) { return e.y > 0; });
    const bool has_neg = std::any_of(examples.begin(), examples.end(), [](const auto& e) { return e.y < 0; });
    if (!has_pos || !has_neg) fail(ErrorCode::SingleClass, "linear SVM needs both classes");
    if (hyper.lambda < 0.0 || !std::isfinite(hyper.lambda) || hyper.epochs < 1) {
        fail(ErrorCode::InvalidArgument, "lambda >= 0 and epochs >= 1");
    }
    for (const auto& ex : examples) {
        if (ex.y != 1 && ex.y != -1) fail(ErrorCode::InvalidArgument, "labels must be +1 or -1");
        for (const auto& [i, v] : ex.x.entries) {
            if (i >= dimension || !std::isfinite(v)) fail(ErrorCode::InvalidArgument, "feature out of range");
        }
    }

    const double lambda = hyper.lambda > 0.0 ? hyper.lambda : 1.0 / static_cast<double>(examples.size());
    const double radius_sq = 1.0 / lambda;
    const std::size_t n = examples.size();

    // w = scale * v keeps the per-step shrink O(1).
    std::vector<double> v(dimension, 0.0);
    double scale = 1.0;
    double v_sq = 0.0;

    std::vector<int> labels(n);
    std::vector<double> scores(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) labels[i] = examples[i].y;
    double bias = optimal_bias(scores, labels);

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(hyper.seed);

    LinearModel best{std::vector<double>(dimension, 0.0), bias, lambda, kind};
    double best_objective = svm_objective(best.weights, best.bias, lambda, examples);

    std::uint64_t t = 0;
    std::vector<double> w(dimension);
    for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        for (const std::size_t i : order) {
            ++t;
            const auto& ex = examples[i];
            const double eta = 1.0 / (lambda * static_cast<double>(t));
            const double m = ex.y * (scale * ex.x.dot(v) + bias);

            const double shrink = 1.0 - eta * lambda;
            if (shrink <= 0.0) {
                std::fill(v.begin(), v.end(), 0.0);
                scale = 1.0;
                v_sq = 0.0;
            } else {
                scale *= shrink;
            }
            if (m < 1.0) {
                const double step = eta * ex.y / scale;
                double vx = 0.0, xx = 0.0;
                for (const auto& [j, xv] : ex.x.entries) {
                    vx += v[j] * xv;
                    xx += xv * xv;
                    v[j] += step * xv;
                }
                v_sq += 2.0 * step * vx + step * step * xx;
            }
            const double w_sq = scale * scale * v_sq;
            if (w_sq > radius_sq) scale *= std::sqrt(radius_sq / w_sq);
            if (scale < 1e-9) {
                for (auto& x : v) x *= scale;
                v_sq *= scale * scale;
                scale = 1.0;
            }
        }

        for (std::size_t k = 0; k < dimension; ++k) w[k] = scale * v[k];
        for (std::size_t i = 0; i < n; ++i) scores[i] = examples[i].x.dot(w);
        bias = optimal_bias(scores, labels);
        const double objective = svm_objective(w, bias, lambda, examples);
        if (objective < best_objective) {
            best_objective = objective;
            best.weights = w;
            best.bias = bias;
        }
        if (trace) trace->epoch_objective.push_back(best_objective);
    }
    return best;
}

// ---------------------------------------------------------------------------
// Probabilities and ensembles

double calibrate(double margin) {
    if (margin >= 0.0) return 1.0 / (1.0 + std::exp(-margin));
    const double e = std::exp(margin);
    return e / (1.0 + e);
}

EnsembleModel::EnsembleModel(std::vector<LinearModel> members, std::shared_ptr<const Vocabulary> vocab,
                             std::shared_ptr<const EmbeddingTable> embeddings)
    : members_(std::move(members)), vocab_(std::move(vocab)), embeddings_(std::move(embeddings)) {
    if (members_.empty()) fail(ErrorCode::InvalidArgument, "ensemble needs at least one member");
    for (const auto& m : members_) {
        if (m.feature_kind == FeatureKind::bow && !vocab_) fail(ErrorCode::InvalidArgument, "bow member needs a vocabulary");
        if (m.feature_kind == FeatureKind::embedding && !embeddings_) {
            fail(ErrorCode::InvalidArgument, "embedding member needs an embedding table");
        }
    }
}

std::vector<double> EnsembleModel::member_probabilities(std::span<const std::string> tokens) const {
    std::optional<SparseVector> bow, emb;
    std::vector<double> out;
    out.reserve(members_.size());
    for (const auto& m : members_) {
        if (m.feature_kind == FeatureKind::bow) {
            if (!bow) bow = vectorize_bow(tokens, *vocab_);
            out.push_back(calibrate(m.margin(*bow)));
        } else {
            if (!emb) emb = to_sparse(embed_average(tokens, *embeddings_));
            out.push_back(calibrate(m.margin(*emb)));
        }
    }
    return out;
}

double EnsembleModel::probability(std::span<const std::string> tokens) const {
    const auto probs = member_probabilities(tokens);
    return std::accumulate(probs.begin(), probs.end(), 0.0) / static_cast<double>(probs.size());
}

void EnsembleModel::save(const std::filesystem::path& dir) const {
    json members = json::array();
    for (const auto& m : members_) {
        members.push_back({{"kind", to_string(m.feature_kind)},
                           {"lambda", m.lambda},
                           {"bias", m.bias},
                           {"weights", m.weights}});
    }
    json params{{"type", type_name()}, {"members", members}};
    if (vocab_) params["max_features"] = vocab_->max_features();
    if (embeddings_) params["embedding_dim"] = embeddings_->dim();
    fsutil::write_file_atomic(dir / "params.json", params.dump());
    if (vocab_) fsutil::write_file_atomic(dir / "vocabulary.txt", text::join(vocab_->tokens(), "\n") + "\n");
}

std::shared_ptr<EnsembleModel> EnsembleModel::load(const std::filesystem::path& dir,
                                                   std::shared_ptr<const EmbeddingTable> embeddings) {
    const auto params = json::parse(fsutil::read_file(dir / "params.json"));
    std::vector<LinearModel> members;
    bool needs_vocab = false;
    for (const auto& j : params.at("members")) {
        LinearModel m;
        m.feature_kind = parse_feature_kind(j.at("kind").get<std::string>());
        m.lambda = j.at("lambda");
        m.bias = j.at("bias");
        m.weights = j.at("weights").get<std::vector<double>>();
        needs_vocab |= m.feature_kind == FeatureKind::bow;
        if (m.feature_kind == FeatureKind::embedding) {
            if (!embeddings) fail(ErrorCode::Io, "model " + dir.string() + " needs an embedding table");
            if (embeddings->dim() != m.weights.size()) {
                fail(ErrorCode::Io, "embedding table dimension does not match model " + dir.string());
            }
        }
        members.push_back(std::move(m));
    }
    std::shared_ptr<const Vocabulary> vocab;
    if (needs_vocab) {
        std::vector<std::string> tokens;
        for (auto& line : fsutil::read_lines(dir / "vocabulary.txt")) tokens.push_back(std::move(line));
        vocab = std::make_shared<const Vocabulary>(std::move(tokens), params.value("max_features", std::size_t{0}));
    }
    return std::make_shared<EnsembleModel>(std::move(members), std::move(vocab), std::move(embeddings));
}

EnsembleTrainer::EnsembleTrainer(std::string flavor, EnsembleTrainerConfig config,
                                 std::shared_ptr<const EmbeddingTable> embeddings)
    : flavor_(std::move(flavor)), config_(config), embeddings_(std::move(embeddings)) {
    if (config_.use_embedding && !embeddings_) {
        spdlog::warn("no embedding table loaded; '{}' models use the bag-of-words member only", flavor_);
        config_.use_embedding = false;
        config_.use_bow = true;
    }
    if (!config_.use_bow && !config_.use_embedding) config_.use_bow = true;
}

std::shared_ptr<const Classifier> EnsembleTrainer::train(std::span<const TrainingExample> examples) const {
    if (examples.size() < 2) fail(ErrorCode::TooFewExamples, "training needs at least two examples");
    std::vector<std::vector<std::string>> tokenized;
    tokenized.reserve(examples.size());
    for (const auto& e : examples) tokenized.push_back(e.tokens);

    std::vector<LinearModel> members;
    std::shared_ptr<const Vocabulary> vocab;
    if (config_.use_bow) {
        vocab = std::make_shared<const Vocabulary>(
            fit_vocabulary(std::span<const std::vector<std::string>>(tokenized), config_.max_features));
        std::vector<LabeledVector> data;
        data.reserve(examples.size());
        for (const auto& e : examples) {
            data.push_back({vectorize_bow(std::span<const std::string>(e.tokens), *vocab), e.positive ? 1 : -1});
        }
        auto hyper = config_.hyper;
        hyper.seed = mix_seed(config_.hyper.seed, 1);
        members.push_back(train_linear_svm(data, vocab->size(), hyper, FeatureKind::bow));
    }
    if (config_.use_embedding) {
        std::vector<LabeledVector> data;
        data.reserve(examples.size());
        for (const auto& e : examples) {
            data.push_back({to_sparse(embed_average(std::span<const std::string>(e.tokens), *embeddings_)),
                            e.positive ? 1 : -1});
        }
        auto hyper = config_.hyper;
        hyper.seed = mix_seed(config_.hyper.seed, 2);
        members.push_back(train_linear_svm(data, embeddings_->dim(), hyper, FeatureKind::embedding));
    }
    return std::make_shared<EnsembleModel>(std::move(members), std::move(vocab),
                                           config_.use_embedding ? embeddings_ : nullptr);
}

std::shared_ptr<Trainer> make_light_trainer(const SvmHyper& hyper, std::size_t max_features) {
    return std::make_shared<EnsembleTrainer>("light", EnsembleTrainerConfig{hyper, max_features, true, false}, nullptr);
}

std::shared_ptr<Trainer> make_heavy_trainer(const SvmHyper& hyper, std::shared_ptr<const EmbeddingTable> embeddings,
                                            std::size_t max_features) {
    return std::make_shared<EnsembleTrainer>("heavy", EnsembleTrainerConfig{hyper, max_features, true, true},
                                             std::move(embeddings));
}

} // namespace labelkit::learning
