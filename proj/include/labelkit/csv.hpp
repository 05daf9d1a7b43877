#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace labelkit::csv {

using Row = std::vector<std::string>;

/// RFC 4180 reader. Accepts LF or CRLF line ends, a leading UTF-8 BOM, and
/// quoted fields with embedded separators, quotes ("") and newlines. Blank
/// lines are dropped. Throws Error{DecodeError} on an unterminated quote.
std::vector<Row> parse(std::string_view text);

/// Header-aware view over parsed rows.
class Table {
public:
    static Table parse(std::string_view text);

    const Row& header() const { return header_; }
    const std::vector<Row>& rows() const { return rows_; }
    std::optional<std::size_t> column(std::string_view name) const;

    /// Field of `row` at `column`, empty when the row is short.
    static std::string_view field(const Row& row, std::size_t column);

private:
    Row header_;
    std::vector<Row> rows_;
};

std::string quote(std::string_view field);

class Writer {
public:
    void row(const Row& fields);
    const std::string& str() const { return out_; }

private:
    std::string out_;
};

} // namespace labelkit::csv
