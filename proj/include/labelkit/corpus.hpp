#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace labelkit::corpus {

struct TextElement {
    std::string element_id;
    std::string doc_id;
    std::size_t position = 0;
    std::string text;
};

struct Document {
    std::string doc_id;
    std::vector<TextElement> elements;
};

struct Dataset {
    std::string name;
    std::vector<Document> documents;

    std::size_t element_count() const;
};

struct IngestResult {
    Dataset dataset;
    std::size_t skipped_rows = 0;
    /// Element id per data row; empty for skipped rows.
    std::vector<std::string> row_elements;
};

std::string make_element_id(std::string_view doc_id, std::size_t position);

/// Parse a CSV upload into a dataset. Columns: `text` (required) and
/// `document_id` (optional). Rows whose text is blank are skipped and
/// counted. Documents appear in order of their first row.
IngestResult ingest_csv(std::string_view bytes, std::string_view dataset_name);

std::vector<std::string> tokenize(std::string_view text);

/// Disjunction of phrases, parsed from `a | b c | d`.
struct Query {
    std::vector<std::string> terms;
};

Query parse_query(std::string_view raw);

/// Occurrences of `phrase` as a contiguous run inside `tokens`.
std::size_t count_phrase(const std::vector<std::string>& tokens, const std::vector<std::string>& phrase);

struct SearchHit {
    std::size_t element_index = 0;
    std::size_t match_count = 0;
};

/// A dataset with a flat element table, cached tokens and a positional
/// inverted index. Immutable after construction.
class IndexedDataset {
public:
    explicit IndexedDataset(Dataset dataset);
    IndexedDataset(const IndexedDataset&) = delete;
    IndexedDataset& operator=(const IndexedDataset&) = delete;

    const std::string& name() const { return dataset_.name; }
    const Dataset& dataset() const { return dataset_; }

    std::size_t size() const { return elements_.size(); }
    const TextElement& element(std::size_t index) const { return *elements_[index]; }
    const std::vector<std::string>& tokens(std::size_t index) const { return tokens_[index]; }

    std::optional<std::size_t> find(std::string_view element_id) const;
    const Document* document(std::string_view doc_id) const;

    /// Matches ordered by (match count desc, doc_id, position). A match is
    /// any query phrase appearing as a contiguous token run; the match
    /// count is the total number of such occurrences.
    std::vector<SearchHit> search(const Query& query, std::size_t limit) const;

private:
    struct Posting {
        std::size_t element;
        std::size_t offset;
    };

    Dataset dataset_;
    std::vector<const TextElement*> elements_;
    std::vector<std::vector<std::string>> tokens_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::unordered_map<std::string, std::size_t> by_doc_;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

/// Persistent set of datasets under `<root>/datasets/<name>/`. Each dataset
/// keeps the uploaded bytes; the index is rebuilt from them at startup.
class DatasetCatalog {
public:
    explicit DatasetCatalog(std::filesystem::path root);

    struct Added {
        std::shared_ptr<const IndexedDataset> dataset;
        std::size_t skipped_rows = 0;
    };

    Added add(std::string_view name, std::string_view csv_bytes);
    std::shared_ptr<const IndexedDataset> get(std::string_view name) const;
    bool contains(std::string_view name) const;
    std::vector<std::string> names() const;

private:
    std::filesystem::path root_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::shared_ptr<const IndexedDataset>, std::less<>> datasets_;
    std::set<std::string, std::less<>> ingesting_;
};

} // namespace labelkit::corpus
