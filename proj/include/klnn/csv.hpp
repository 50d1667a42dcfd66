#pragma once

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

#include "klnn/cloud.hpp"
#include "klnn/error.hpp"

namespace klnn {
namespace csv {

inline std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

inline bool parse_double(const std::string& s, double& out) {
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && (*b == ' ' || *b == '\t')) ++b;
    while (e > b && (*(e - 1) == ' ' || *(e - 1) == '\t')) --e;
    if (b == e) return false;
    const auto res = std::from_chars(b, e, out);
    return res.ec == std::errc() && res.ptr == e;
}

/// Round-trip double formatting (shortest representation).
inline std::string format_double(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Reads a sample matrix: one row per sample, comma-separated coordinates.
/// A non-numeric first row is treated as a header and skipped.
inline PointCloud read_cloud(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open '" + path + "'");
    std::string line;
    std::vector<double> values;
    int d = -1;
    int n = 0;
    int lineno = 0;
    bool first_data_row = true;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_fields(line);
        std::vector<double> row(fields.size());
        bool numeric = true;
        for (std::size_t j = 0; j < fields.size(); ++j)
            if (!parse_double(fields[j], row[j])) {
                numeric = false;
                if (!first_data_row)
                    throw ParseError(path + ":" + std::to_string(lineno) + ": field " +
                                     std::to_string(j + 1) + " ('" + fields[j] +
                                     "') is not numeric");
                break;
            }
        if (!numeric) {  // header row
            first_data_row = false;
            continue;
        }
        if (d < 0)
            d = static_cast<int>(fields.size());
        else if (static_cast<int>(fields.size()) != d)
            throw ParseError(path + ":" + std::to_string(lineno) + ": expected " +
                             std::to_string(d) + " columns, got " +
                             std::to_string(fields.size()));
        values.insert(values.end(), row.begin(), row.end());
        ++n;
        first_data_row = false;
    }
    if (n == 0) throw ParseError(path + ": no data rows");
    PointCloud cloud(n, d, std::move(values));
    cloud.check_finite();
    return cloud;
}

inline void write_cloud(const std::string& path, const PointCloud& cloud) {
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open '" + path + "' for writing");
    for (int i = 0; i < cloud.n(); ++i) {
        for (int j = 0; j < cloud.d(); ++j) {
            if (j) out << ',';
            out << format_double(cloud.at(i, j));
        }
        out << '\n';
    }
}

}  // namespace csv
}  // namespace klnn
