#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace labelkit::fsutil {

std::string read_file(const std::filesystem::path& path);

/// Write to a sibling temp file then rename over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

/// Append one line and flush it to the OS before returning.
void append_line(const std::filesystem::path& path, std::string_view line);

/// Complete lines of a line-delimited file. A trailing fragment without a
/// newline (a write torn by a crash) is dropped.
std::vector<std::string> read_lines(const std::filesystem::path& path);

/// Names usable as a single path component: [A-Za-z0-9._-], not "." or "..".
bool is_safe_name(std::string_view name);

} // namespace labelkit::fsutil
