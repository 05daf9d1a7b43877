#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace labelkit::text {

bool is_valid_utf8(std::string_view bytes);

std::string_view trim(std::string_view s);

/// Lowercased alphanumeric runs; every other code point (and any invalid
/// UTF-8 byte) separates tokens. Classification uses Unicode character
/// properties, so "Città" and "ЖУК" tokenize as words.
std::vector<std::string> tokenize(std::string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

} // namespace labelkit::text
