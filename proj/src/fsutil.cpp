#include "labelkit/fsutil.hpp"

#include "labelkit/error.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace labelkit::fsutil {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorCode::Io, "cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return std::move(buf).str();
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCode::Io, "cannot write " + tmp.string());
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) fail(ErrorCode::Io, "short write to " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) fail(ErrorCode::Io, "cannot rename " + tmp.string() + ": " + ec.message());
}

void append_line(const std::filesystem::path& path, std::string_view line) {
    std::FILE* f = std::fopen(path.c_str(), "ab");
    if (!f) fail(ErrorCode::Io, "cannot append to " + path.string());
    const bool ok = std::fwrite(line.data(), 1, line.size(), f) == line.size() && std::fputc('\n', f) != EOF &&
                    std::fflush(f) == 0;
    std::fclose(f);
    if (!ok) fail(ErrorCode::Io, "short write to " + path.string());
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::vector<std::string> lines;
    if (!std::filesystem::exists(path)) return lines;
    const std::string data = read_file(path);
    std::size_t start = 0;
    while (start < data.size()) {
        const auto nl = data.find('\n', start);
        if (nl == std::string::npos) break;
        if (nl > start) lines.emplace_back(data.substr(start, nl - start));
        start = nl + 1;
    }
    return lines;
}

bool is_safe_name(std::string_view name) {
    if (name.empty() || name == "." || name == ".." || name.size() > 200) return false;
    for (char c : name) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                        c == '_' || c == '-';
        if (!ok) return false;
    }
    return true;
}

} // namespace labelkit::fsutil
