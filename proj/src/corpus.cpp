#include "labelkit/corpus.hpp"

#include "labelkit/csv.hpp"
#include "labelkit/error.hpp"
#include "labelkit/fsutil.hpp"
#include "labelkit/text.hpp"

#include <algorithm>
#include <spdlog/spdlog.h>

namespace labelkit::corpus {

std::size_t Dataset::element_count() const {
    std::size_t n = 0;
    for (const auto& d : documents) n += d.elements.size();
    return n;
}

std::string make_element_id(std::string_view doc_id, std::size_t position) {
    return std::string(doc_id) + "-" + std::to_string(position);
}

IngestResult ingest_csv(std::string_view bytes, std::string_view dataset_name) {
    if (text::trim(dataset_name).empty()) fail(ErrorCode::InvalidArgument, "dataset name must not be empty");
    if (!text::is_valid_utf8(bytes)) fail(ErrorCode::DecodeError, "upload is not valid UTF-8");

    const auto table = csv::Table::parse(bytes);
    const auto text_col = table.column("text");
    if (!text_col) fail(ErrorCode::MissingColumn, "CSV header has no `text` column");
    const auto doc_col = table.column("document_id");

    IngestResult result;
    result.dataset.name = std::string(dataset_name);
    const std::string default_doc = std::string(dataset_name) + "-all";
    std::unordered_map<std::string, std::size_t> doc_index;

    for (const auto& row : table.rows()) {
        const auto body = csv::Table::field(row, *text_col);
        if (text::trim(body).empty()) {
            ++result.skipped_rows;
            result.row_elements.emplace_back();
            continue;
        }
        std::string doc_id = doc_col ? std::string(text::trim(csv::Table::field(row, *doc_col))) : default_doc;
        if (doc_id.empty()) doc_id = default_doc;

        auto [it, inserted] = doc_index.try_emplace(doc_id, result.dataset.documents.size());
        if (inserted) result.dataset.documents.push_back(Document{doc_id, {}});
        auto& doc = result.dataset.documents[it->second];
        const std::size_t position = doc.elements.size();
        doc.elements.push_back(TextElement{make_element_id(doc_id, position), doc_id, position, std::string(body)});
        result.row_elements.push_back(doc.elements.back().element_id);
    }
    if (result.dataset.documents.empty()) fail(ErrorCode::EmptyDataset, "dataset has no non-empty rows");
    return result;
}

std::vector<std::string> tokenize(std::string_view input) { return text::tokenize(input); }

Query parse_query(std::string_view raw) {
    Query q;
    std::size_t start = 0;
    while (true) {
        const auto bar = raw.find('|', start);
        const auto piece = text::trim(raw.substr(start, bar == std::string_view::npos ? raw.npos : bar - start));
        if (!piece.empty()) q.terms.emplace_back(piece);
        if (bar == std::string_view::npos) break;
        start = bar + 1;
    }
    if (q.terms.empty()) fail(ErrorCode::EmptyQuery, "query has no terms");
    return q;
}

std::size_t count_phrase(const std::vector<std::string>& tokens, const std::vector<std::string>& phrase) {
    if (phrase.empty() || phrase.size() > tokens.size()) return 0;
    std::size_t count = 0;
    for (std::size_t i = 0; i + phrase.size() <= tokens.size(); ++i) {
        if (std::equal(phrase.begin(), phrase.end(), tokens.begin() + static_cast<std::ptrdiff_t>(i))) ++count;
    }
    return count;
}

IndexedDataset::IndexedDataset(Dataset dataset) : dataset_(std::move(dataset)) {
    for (std::size_t d = 0; d < dataset_.documents.size(); ++d) {
        by_doc_.emplace(dataset_.documents[d].doc_id, d);
        for (const auto& e : dataset_.documents[d].elements) {
            by_id_.emplace(e.element_id, elements_.size());
            elements_.push_back(&e);
        }
    }
    tokens_.reserve(elements_.size());
    for (std::size_t i = 0; i < elements_.size(); ++i) {
        tokens_.push_back(text::tokenize(elements_[i]->text));
        const auto& toks = tokens_.back();
        for (std::size_t off = 0; off < toks.size(); ++off) postings_[toks[off]].push_back({i, off});
    }
}

std::optional<std::size_t> IndexedDataset::find(std::string_view element_id) const {
    const auto it = by_id_.find(std::string(element_id));
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

const Document* IndexedDataset::document(std::string_view doc_id) const {
    const auto it = by_doc_.find(std::string(doc_id));
    return it == by_doc_.end() ? nullptr : &dataset_.documents[it->second];
}

std::vector<SearchHit> IndexedDataset::search(const Query& query, std::size_t limit) const {
    std::unordered_map<std::size_t, std::size_t> counts;
    for (const auto& term : query.terms) {
        const auto phrase = text::tokenize(term);
        if (phrase.empty()) continue;

        // Anchor on the rarest phrase token, then verify the whole run at
        // each posting that could start it.
        const std::vector<Posting>* anchor = nullptr;
        std::size_t anchor_at = 0;
        bool missing = false;
        for (std::size_t k = 0; k < phrase.size(); ++k) {
            const auto it = postings_.find(phrase[k]);
            if (it == postings_.end()) {
                missing = true;
                break;
            }
            if (!anchor || it->second.size() < anchor->size()) {
                anchor = &it->second;
                anchor_at = k;
            }
        }
        if (missing) continue;

        for (const auto& p : *anchor) {
            if (p.offset < anchor_at) continue;
            const std::size_t begin = p.offset - anchor_at;
            const auto& toks = tokens_[p.element];
            if (begin + phrase.size() > toks.size()) continue;
            if (std::equal(phrase.begin(), phrase.end(), toks.begin() + static_cast<std::ptrdiff_t>(begin))) {
                ++counts[p.element];
            }
        }
    }

    std::vector<SearchHit> hits;
    hits.reserve(counts.size());
    for (const auto& [idx, n] : counts) hits.push_back({idx, n});
    std::sort(hits.begin(), hits.end(), [&](const SearchHit& a, const SearchHit& b) {
        if (a.match_count != b.match_count) return a.match_count > b.match_count;
        const auto& ea = *elements_[a.element_index];
        const auto& eb = *elements_[b.element_index];
        if (ea.doc_id != eb.doc_id) return ea.doc_id < eb.doc_id;
        return ea.position < eb.position;
    });
    if (hits.size() > limit) hits.resize(limit);
    return hits;
}

DatasetCatalog::DatasetCatalog(std::filesystem::path root) : root_(std::move(root)) {
    const auto dir = root_ / "datasets";
    std::filesystem::create_directories(dir);
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto source = entry.path() / "source.csv";
        if (!entry.is_directory() || !std::filesystem::exists(source)) continue;
        const auto name = entry.path().filename().string();
        try {
            auto ingested = ingest_csv(fsutil::read_file(source), name);
            datasets_.emplace(name, std::make_shared<const IndexedDataset>(std::move(ingested.dataset)));
        } catch (const std::exception& e) {
            spdlog::error("skipping dataset {}: {}", name, e.what());
        }
    }
}

DatasetCatalog::Added DatasetCatalog::add(std::string_view name, std::string_view csv_bytes) {
    if (!fsutil::is_safe_name(name)) {
        fail(ErrorCode::InvalidArgument, "dataset name must match [A-Za-z0-9._-]+: " + std::string(name));
    }
    {
        std::unique_lock lock(mutex_);
        if (datasets_.contains(name) || ingesting_.contains(name)) {
            fail(ErrorCode::DuplicateDataset, "dataset exists: " + std::string(name));
        }
        ingesting_.emplace(name);
    }
    try {
        auto ingested = ingest_csv(csv_bytes, name);
        const auto dir = root_ / "datasets" / std::string(name);
        std::filesystem::create_directories(dir);
        fsutil::write_file_atomic(dir / "source.csv", csv_bytes);
        auto indexed = std::make_shared<const IndexedDataset>(std::move(ingested.dataset));

        std::unique_lock lock(mutex_);
        ingesting_.erase(ingesting_.find(name));
        datasets_.emplace(std::string(name), indexed);
        return {indexed, ingested.skipped_rows};
    } catch (...) {
        std::unique_lock lock(mutex_);
        ingesting_.erase(ingesting_.find(name));
        throw;
    }
}

std::shared_ptr<const IndexedDataset> DatasetCatalog::get(std::string_view name) const {
    std::shared_lock lock(mutex_);
    const auto it = datasets_.find(name);
    if (it == datasets_.end()) fail(ErrorCode::UnknownDataset, "unknown dataset: " + std::string(name));
    return it->second;
}

bool DatasetCatalog::contains(std::string_view name) const {
    std::shared_lock lock(mutex_);
    return datasets_.contains(name);
}

std::vector<std::string> DatasetCatalog::names() const {
    std::shared_lock lock(mutex_);
    std::vector<std::string> out;
    for (const auto& [name, _] : datasets_) out.push_back(name);
    return out;
}

} // namespace labelkit::corpus
