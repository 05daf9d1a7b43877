#include "labelkit/csv.hpp"

#include "labelkit/error.hpp"

namespace labelkit::csv {

std::vector<Row> parse(std::string_view text) {
    if (text.starts_with("\xEF\xBB\xBF")) text.remove_prefix(3);

    std::vector<Row> rows;
    Row row;
    std::string field;
    bool quoted = false;
    bool field_started = false;

    auto end_field = [&] {
        row.push_back(std::move(field));
        field.clear();
        field_started = false;
    };
    auto end_row = [&] {
        end_field();
        const bool blank = row.size() == 1 && row[0].empty();
        if (!blank) rows.push_back(std::move(row));
        row.clear();
    };

    for (std::size_t i = 0; i < text.size(); ++i) {
        const char c = text[i];
        if (quoted) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    field.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                field.push_back(c);
            }
            continue;
        }
        switch (c) {
        case '"':
            if (!field_started && field.empty()) {
                quoted = true;
                field_started = true;
            } else {
                field.push_back(c);
            }
            break;
        case ',':
            end_field();
            break;
        case '\r':
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            end_row();
            break;
        case '\n':
            end_row();
            break;
        default:
            field.push_back(c);
            field_started = true;
        }
    }
    if (quoted) fail(ErrorCode::DecodeError, "unterminated quoted CSV field");
    if (!field.empty() || !row.empty() || field_started) end_row();
    return rows;
}

Table Table::parse(std::string_view text) {
    Table table;
    auto rows = csv::parse(text);
    if (rows.empty()) return table;
    table.header_ = std::move(rows.front());
    table.rows_.assign(std::make_move_iterator(rows.begin() + 1), std::make_move_iterator(rows.end()));
    return table;
}

std::optional<std::size_t> Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header_.size(); ++i) {
        if (header_[i] == name) return i;
    }
    return std::nullopt;
}

std::string_view Table::field(const Row& row, std::size_t column) {
    return column < row.size() ? std::string_view(row[column]) : std::string_view();
}

std::string quote(std::string_view field) {
    if (field.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(field);
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out.push_back('"');
        out.push_back(c);
    }
    out.push_back('"');
    return out;
}

void Writer::row(const Row& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
        if (i) out_.push_back(',');
        out_ += quote(fields[i]);
    }
    out_ += "\r\n";
}

} // namespace labelkit::csv
