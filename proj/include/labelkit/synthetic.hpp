#pragma once

#include "labelkit/learning.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace labelkit::synthetic {

/// Low-prior binary corpus of pseudo-word sentences. Positive sentences draw
/// one to three words from a small topic lexicon; negatives occasionally
/// borrow one. A query word marks part of the positives (and a few
/// negatives) so a keyword search can seed labeling.
struct CorpusSpec {
    std::size_t elements = 3000;
    double prior = 0.08;
    std::size_t sentences_per_document = 10;
    std::size_t general_vocabulary = 1500;
    std::size_t topic_words = 40;
    double negative_topic_rate = 0.01;
    std::string query_word = "health";
    double query_rate_positive = 0.5;
    double query_rate_negative = 0.02;
    std::size_t embedding_dim = 16;
    /// Length of the shared topic direction relative to unit word noise.
    double topic_embedding_strength = 4.0;
    double topic_embedding_noise = 0.3;
    std::uint64_t seed = 7;
};

struct Corpus {
    /// Columns document_id,text,gold (gold is "true"/"false").
    std::string csv;
    /// Gold label per element in CSV row order.
    std::vector<bool> gold;
    std::vector<std::string> texts;
    learning::EmbeddingTable embeddings;
    /// Every word that has an embedding, in table-file order.
    std::vector<std::string> words;
};

Corpus make_corpus(const CorpusSpec& spec);

/// Deterministic pronounceable pseudo-word for an index.
std::string pseudo_word(std::size_t index);

/// Text-format embedding file (token followed by floats per line).
std::string embeddings_to_text(const Corpus& corpus);

} // namespace labelkit::synthetic
