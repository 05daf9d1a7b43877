#pragma once

// Helpers shared by the unit tests and the acceptance runner.

#include "labelkit/corpus.hpp"
#include "labelkit/random.hpp"
#include "labelkit/text.hpp"

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <unistd.h>
#include <vector>

namespace support {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t") {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("labelkit-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
};

/// Linear scan: element ids whose token list contains any phrase as a
/// contiguous run, ordered by (occurrences desc, doc_id, position).
inline std::vector<std::string> brute_force_search(const labelkit::corpus::Dataset& ds,
                                                   const std::vector<std::string>& phrases, std::size_t limit) {
    struct Hit {
        std::size_t count;
        std::string doc;
        std::size_t pos;
        std::string id;
    };
    std::vector<Hit> hits;
    for (const auto& d : ds.documents) {
        for (const auto& e : d.elements) {
            const auto toks = labelkit::text::tokenize(e.text);
            std::size_t count = 0;
            for (const auto& p : phrases) {
                const auto pt = labelkit::text::tokenize(p);
                if (pt.empty() || pt.size() > toks.size()) continue;
                for (std::size_t i = 0; i + pt.size() <= toks.size(); ++i) {
                    if (std::equal(pt.begin(), pt.end(), toks.begin() + static_cast<std::ptrdiff_t>(i))) ++count;
                }
            }
            if (count > 0) hits.push_back({count, e.doc_id, e.position, e.element_id});
        }
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
        if (a.count != b.count) return a.count > b.count;
        if (a.doc != b.doc) return a.doc < b.doc;
        return a.pos < b.pos;
    });
    std::vector<std::string> out;
    for (std::size_t i = 0; i < hits.size() && i < limit; ++i) out.push_back(hits[i].id);
    return out;
}

/// Random CSV over a tiny vocabulary so phrases recur.
inline std::string random_corpus_csv(std::mt19937_64& gen, std::size_t max_elements) {
    static const std::vector<std::string> words{"wolf", "lives", "in", "the", "forest", "river", "health",
                                                "public", "policy", "night", "Hunts", "RIVER", "a", "b"};
    std::uniform_int_distribution<std::size_t> n_el(1, max_elements), n_doc(1, 12), len(0, 9),
        w(0, words.size() - 1);
    const std::size_t n = n_el(gen), docs = n_doc(gen);
    std::string csv = "document_id,text\n";
    for (std::size_t i = 0; i < n; ++i) {
        std::string text;
        const std::size_t l = len(gen);
        for (std::size_t k = 0; k < l; ++k) text += (k ? (gen() % 4 == 0 ? ", " : " ") : "") + words[w(gen)];
        if (text.empty()) text = "x";
        csv += "doc" + std::to_string(gen() % docs) + ",\"" + text + "\"\n";
    }
    return csv;
}

inline std::vector<std::string> random_phrases(std::mt19937_64& gen) {
    static const std::vector<std::string> words{"wolf", "lives", "in", "the", "forest", "river", "health",
                                                "public", "night", "hunts", "zebra"};
    std::uniform_int_distribution<std::size_t> n_terms(1, 3), len(1, 2), w(0, words.size() - 1);
    std::vector<std::string> out;
    const std::size_t n = n_terms(gen);
    for (std::size_t i = 0; i < n; ++i) {
        std::string p;
        const std::size_t l = len(gen);
        for (std::size_t k = 0; k < l; ++k) p += (k ? " " : "") + words[w(gen)];
        out.push_back(p);
    }
    return out;
}

} // namespace support
