// io.hpp: CSV output with a commented header block, written atomically.

#pragma once

#include "spincav/common.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace spincav::io {

/// Shortest round-trip-safe text for a double; fixed format keeps reruns byte-identical.
inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

inline std::string fmt(bool v) { return v ? "1" : "0"; }

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> columns) : columns_(std::move(columns)) {}

    void comment(const std::string& line) { comments_.push_back(line); }

    template <class... Cells>
    void row(const Cells&... cells) {
        std::vector<std::string> r;
        (r.push_back(cell(cells)), ...);
        require(r.size() == columns_.size(), "CSV row width does not match the header");
        rows_.push_back(std::move(r));
    }

    void row_strings(std::vector<std::string> r) {
        require(r.size() == columns_.size(), "CSV row width does not match the header");
        rows_.push_back(std::move(r));
    }

    std::size_t size() const noexcept { return rows_.size(); }

    std::string str() const {
        std::ostringstream os;
        for (const auto& c : comments_) os << "# " << c << '\n';
        for (std::size_t i = 0; i < columns_.size(); ++i) os << (i ? "," : "") << columns_[i];
        os << '\n';
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i) os << (i ? "," : "") << r[i];
            os << '\n';
        }
        return os.str();
    }

private:
    static std::string cell(double v) { return fmt(v); }
    static std::string cell(int v) { return std::to_string(v); }
    static std::string cell(std::size_t v) { return std::to_string(v); }
    static std::string cell(bool v) { return fmt(v); }
    static std::string cell(const std::string& v) { return v; }
    static std::string cell(const char* v) { return v; }

    std::vector<std::string> columns_;
    std::vector<std::string> comments_;
    std::vector<std::vector<std::string>> rows_;
};

/// Writes to a sibling temp file and renames it over the target.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open " + tmp.string() + " for writing");
        out << content;
        out.flush();
        if (!out) {
            std::error_code ec;
            fs::remove(tmp, ec);
            throw Error("write failed for " + tmp.string());
        }
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw Error("cannot rename temp file onto " + path.string());
    }
}

inline void write_csv(const std::filesystem::path& path, const CsvTable& table) { write_atomic(path, table.str()); }

}  // namespace spincav::io
