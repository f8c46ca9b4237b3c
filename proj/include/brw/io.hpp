#pragma once

// CSV tables, atomic file writes and checksums.

#include <boost/crc.hpp>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <stdexcept>
#include <sstream>
#include <string>
#include <type_traits>
#include <vector>

#include "brw/common.hpp"

namespace brw::io {

namespace fs = std::filesystem;

/// Shortest text that parses back to the same double (17 significant digits at most).
inline std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof buf, "%.*g", prec, v);
        if (std::strtod(buf, nullptr) == v) break;
    }
    return buf;
}

inline double parse_double(const std::string& s) {
    if (s == "inf") return std::numeric_limits<double>::infinity();
    if (s == "-inf") return -std::numeric_limits<double>::infinity();
    if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
    // strtod rather than stod: subnormal values must parse, not throw.
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || std::isspace(static_cast<unsigned char>(s[0])))
        throw std::invalid_argument("not a number: '" + s + "'");
    return v;
}

/// RFC 4180 quoting: fields with a comma, quote or line break are quoted, quotes doubled.
inline std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

class CsvTable {
public:
    explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

    class Row {
    public:
        Row& operator<<(const std::string& s) {
            cells_.push_back(s);
            return *this;
        }
        Row& operator<<(const char* s) { return *this << std::string(s); }
        Row& operator<<(double v) { return *this << format_double(v); }
        Row& operator<<(bool v) { return *this << std::string(v ? "true" : "false"); }
        template <class I>
            requires std::is_integral_v<I>
        Row& operator<<(I v) {
            return *this << std::to_string(v);
        }

    private:
        friend class CsvTable;
        std::vector<std::string> cells_;
    };

    void add(const Row& r) {
        require(r.cells_.size() == header_.size(), "CSV row width does not match the header");
        rows_.push_back(r.cells_);
    }

    const std::vector<std::string>& header() const noexcept { return header_; }
    const std::vector<std::vector<std::string>>& rows() const noexcept { return rows_; }

    std::string str() const {
        std::ostringstream os;
        auto line = [&](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) os << (i ? "," : "") << csv_field(cells[i]);
            os << "\r\n";
        };
        line(header_);
        for (const auto& r : rows_) line(r);
        return os.str();
    }

    /// Parses RFC 4180 text; the first record is the header.
    static CsvTable parse(const std::string& text) {
        std::vector<std::vector<std::string>> records;
        std::vector<std::string> rec;
        std::string cell;
        bool quoted = false, any = false;
        for (std::size_t i = 0; i < text.size(); ++i) {
            const char c = text[i];
            if (quoted) {
                if (c == '"' && i + 1 < text.size() && text[i + 1] == '"') {
                    cell += '"';
                    ++i;
                } else if (c == '"') {
                    quoted = false;
                } else {
                    cell += c;
                }
                continue;
            }
            if (c == '"') {
                quoted = true;
                any = true;
            } else if (c == ',') {
                rec.push_back(std::move(cell));
                cell.clear();
                any = true;
            } else if (c == '\r' || c == '\n') {
                if (c == '\r' && i + 1 < text.size() && text[i + 1] == '\n') ++i;
                if (any || !cell.empty()) {
                    rec.push_back(std::move(cell));
                    records.push_back(std::move(rec));
                }
                rec.clear();
                cell.clear();
                any = false;
            } else {
                cell += c;
                any = true;
            }
        }
        if (any || !cell.empty()) {
            rec.push_back(std::move(cell));
            records.push_back(std::move(rec));
        }
        if (records.empty()) throw ParseError("empty CSV", 1, 1);
        CsvTable t(records.front());
        for (std::size_t r = 1; r < records.size(); ++r) {
            if (records[r].size() != t.header_.size())
                throw ParseError("CSV record width differs from header", static_cast<int>(r + 1), 1);
            t.rows_.push_back(std::move(records[r]));
        }
        return t;
    }

    std::size_t column(const std::string& name) const {
        for (std::size_t i = 0; i < header_.size(); ++i)
            if (header_[i] == name) return i;
        throw PreconditionError("CSV has no column '" + name + "'");
    }

private:
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

inline std::uint32_t crc32(const std::string& bytes) {
    boost::crc_32_type crc;
    crc.process_bytes(bytes.data(), bytes.size());
    return crc.checksum();
}

inline std::string crc32_hex(const std::string& bytes) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%08x", crc32(bytes));
    return buf;
}

inline std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    if (!f) throw MissingOutput("cannot read '" + p.string() + "'");
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

/// Writes to a sibling temporary file, flushes, then renames over the target.
inline void write_atomic(const fs::path& p, const std::string& bytes) {
    if (p.has_parent_path()) fs::create_directories(p.parent_path());
    fs::path tmp = p;
    tmp += ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot open '" + tmp.string() + "' for writing");
        f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        f.flush();
        if (!f) throw Error("write failed for '" + tmp.string() + "'");
    }
    fs::rename(tmp, p);
}

}  // namespace brw::io
