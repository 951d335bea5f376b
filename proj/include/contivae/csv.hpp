#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "contivae/common.hpp"

namespace contivae {

/// Shortest decimal form that round-trips to the same double, so emitted
/// CSV files are byte-stable and reloads reproduce values bitwise.
inline std::string format_double(double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    if (ec != std::errc()) throw numeric_error("format_double: conversion failed");
    return std::string(buf, ptr);
}

inline double parse_double(std::string_view s, std::string_view context) {
    double v = 0.0;
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, v);
    if (ec != std::errc() || ptr != last)
        throw io_error("could not parse number '" + std::string(s) + "' in " +
                       std::string(context));
    return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    fields.push_back(cur);
    return fields;
}

class CsvWriter {
   public:
    explicit CsvWriter(const std::filesystem::path& path) : out_(path), path_(path.string()) {
        if (!out_) throw io_error("cannot open for writing: " + path_);
    }

    void row(const std::vector<std::string>& fields) {
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i) out_ << ',';
            out_ << fields[i];
        }
        out_ << '\n';
        if (!out_) throw io_error("write failed: " + path_);
    }

    void numeric_row(std::span<const double> values) {
        std::vector<std::string> fields;
        fields.reserve(values.size());
        for (double v : values) fields.push_back(format_double(v));
        row(fields);
    }

   private:
    std::ofstream out_;
    std::string path_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;
};

/// Reads a numeric CSV. A first line with any non-numeric field is taken
/// as the header.
inline CsvTable read_numeric_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw io_error("cannot open: " + path.string());
    CsvTable table;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        std::vector<double> row;
        row.reserve(fields.size());
        bool numeric = true;
        for (const auto& f : fields) {
            double v = 0.0;
            auto [ptr, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
            if (ec != std::errc() || ptr != f.data() + f.size()) {
                numeric = false;
                break;
            }
            row.push_back(v);
        }
        if (!numeric) {
            if (lineno == 1) {
                table.header = fields;
                continue;
            }
            throw io_error("non-numeric field at " + path.string() + ":" +
                           std::to_string(lineno));
        }
        if (!table.rows.empty() && row.size() != table.rows.front().size())
            throw io_error("ragged row at " + path.string() + ":" + std::to_string(lineno));
        table.rows.push_back(std::move(row));
    }
    return table;
}

}  // namespace contivae
