#include "labelkit/synthetic.hpp"

#include "labelkit/csv.hpp"
#include "labelkit/error.hpp"
#include "labelkit/random.hpp"

#include <cmath>
#include <cstdio>

namespace labelkit::synthetic {
namespace {

constexpr std::string_view consonants = "bdfgklmnprstvz";
constexpr std::string_view vowels = "aeiou";

double normal(Rng& rng) {
    // Box-Muller; portable unlike std::normal_distribution.
    const double u1 = 1.0 - rng.uniform();
    const double u2 = rng.uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

// Zipf-like pick over [0, n): rank r drawn with weight 1/(r+1).
class Zipf {
public:
    explicit Zipf(std::size_t n) : cdf_(n) {
        double acc = 0.0;
        for (std::size_t r = 0; r < n; ++r) cdf_[r] = acc += 1.0 / static_cast<double>(r + 1);
        for (auto& c : cdf_) c /= acc;
    }

    std::size_t draw(Rng& rng) const {
        const double u = rng.uniform();
        const auto it = std::lower_bound(cdf_.begin(), cdf_.end(), u);
        return it == cdf_.end() ? cdf_.size() - 1 : static_cast<std::size_t>(it - cdf_.begin());
    }

private:
    std::vector<double> cdf_;
};

} // namespace

std::string pseudo_word(std::size_t index) {
    const std::size_t syllables = consonants.size() * vowels.size();
    std::string w;
    // Offset so every word has at least two syllables.
    std::size_t i = index + syllables;
    do {
        const auto s = i % syllables;
        w += consonants[s / vowels.size()];
        w += vowels[s % vowels.size()];
        i /= syllables;
    } while (i > 0);
    return w;
}

Corpus make_corpus(const CorpusSpec& spec) {
    if (spec.elements == 0 || spec.topic_words == 0 || spec.general_vocabulary == 0) {
        fail(ErrorCode::InvalidArgument, "synthetic corpus needs elements and vocabulary");
    }
    Rng rng(spec.seed);
    Corpus out;

    std::vector<std::string> general(spec.general_vocabulary), topic(spec.topic_words);
    for (std::size_t i = 0; i < general.size(); ++i) general[i] = pseudo_word(i);
    for (std::size_t i = 0; i < topic.size(); ++i) topic[i] = pseudo_word(general.size() + 100 + i);

    // Embeddings: topic words cluster around one direction; general words are
    // isotropic noise. The query word sits with the topic words.
    const std::size_t dim = spec.embedding_dim;
    std::vector<double> topic_dir(dim);
    for (auto& x : topic_dir) x = normal(rng);
    double norm = 0.0;
    for (double x : topic_dir) norm += x * x;
    for (auto& x : topic_dir) x *= spec.topic_embedding_strength / std::sqrt(norm);

    out.embeddings = learning::EmbeddingTable(dim);
    auto add_embedding = [&](const std::string& word, bool topical) {
        std::vector<double> v(dim);
        for (std::size_t k = 0; k < dim; ++k) v[k] = (topical ? topic_dir[k] : 0.0) + (topical ? spec.topic_embedding_noise : 1.0) * normal(rng);
        out.embeddings.add(word, std::move(v));
        out.words.push_back(word);
    };
    for (const auto& w : general) add_embedding(w, false);
    for (const auto& w : topic) add_embedding(w, true);
    add_embedding(spec.query_word, true);

    const Zipf general_zipf(general.size());
    const Zipf topic_zipf(topic.size());

    csv::Writer writer;
    writer.row({"document_id", "text", "gold"});
    for (std::size_t i = 0; i < spec.elements; ++i) {
        const bool positive = rng.uniform() < spec.prior;
        const std::size_t length = 6 + rng.index(9);
        std::vector<std::string> words;
        words.reserve(length + 1);
        for (std::size_t k = 0; k < length; ++k) words.push_back(general[general_zipf.draw(rng)]);

        std::size_t topical = 0;
        if (positive) {
            const double u = rng.uniform();
            topical = 1 + (u < 0.5 ? 1 : 0) + (u < 0.2 ? 1 : 0);
        } else if (rng.uniform() < spec.negative_topic_rate) {
            topical = 1;
        }
        for (std::size_t k = 0; k < topical; ++k) words[rng.index(words.size())] = topic[topic_zipf.draw(rng)];

        const double query_rate = positive ? spec.query_rate_positive : spec.query_rate_negative;
        if (rng.uniform() < query_rate) words.insert(words.begin() + static_cast<std::ptrdiff_t>(rng.index(words.size() + 1)), spec.query_word);

        std::string text;
        for (std::size_t k = 0; k < words.size(); ++k) {
            if (k) text += ' ';
            text += words[k];
        }
        text[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(text[0])));
        text += '.';

        const auto doc = "doc" + std::to_string(i / std::max<std::size_t>(1, spec.sentences_per_document));
        writer.row({doc, text, positive ? "true" : "false"});
        out.gold.push_back(positive);
        out.texts.push_back(std::move(text));
    }
    out.csv = writer.str();
    return out;
}

std::string embeddings_to_text(const Corpus& corpus) {
    std::string out;
    char buf[32];
    for (const auto& w : corpus.words) {
        out += w;
        for (double x : *corpus.embeddings.find(w)) {
            std::snprintf(buf, sizeof buf, " %.6f", x);
            out += buf;
        }
        out += '\n';
    }
    return out;
}

} // namespace labelkit::synthetic
