#pragma once

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hrmeta/meta.hpp"

namespace hrmeta {

struct CsvParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    fields.push_back(cur);
    return fields;
}

inline double parse_double(const std::string& field, std::size_t line_no,
                           const std::string& column) {
    double value;
    const char* begin = field.data();
    const char* end = begin + field.size();
    auto [ptr, ec] = std::from_chars(begin, end, value);
    if (ec != std::errc() || ptr != end)
        throw CsvParseError("line " + std::to_string(line_no) + ", column '" +
                            column + "': not a number: '" + field + "'");
    return value;
}

}  // namespace detail

// Schema: header `study,loghr,se`, one row per study, `.` decimal point.
inline ReferenceSet parse_reference_csv(std::istream& in,
                                        const std::string& source = "<stream>") {
    std::string line;
    if (!std::getline(in, line))
        throw CsvParseError(source + ": empty file");
    {
        auto header = detail::split_csv_line(line);
        if (header.size() != 3 || header[0] != "study" || header[1] != "loghr" ||
            header[2] != "se")
            throw CsvParseError(source + ": line 1: expected header 'study,loghr,se'");
    }

    ReferenceSet set;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        auto fields = detail::split_csv_line(line);
        if (fields.size() != 3)
            throw CsvParseError(source + ": line " + std::to_string(line_no) +
                                ": expected 3 fields, got " +
                                std::to_string(fields.size()));
        LogHREstimate est;
        est.label = fields[0];
        est.estimate = detail::parse_double(fields[1], line_no, "loghr");
        est.se = detail::parse_double(fields[2], line_no, "se");
        if (est.label.empty())
            throw CsvParseError(source + ": line " + std::to_string(line_no) +
                                ", column 'study': empty label");
        if (!(est.se > 0.0))
            throw CsvParseError(source + ": line " + std::to_string(line_no) +
                                ", column 'se': must be > 0");
        for (const auto& s : set.studies)
            if (s.label == est.label)
                throw CsvParseError(source + ": line " + std::to_string(line_no) +
                                    ": duplicate label '" + est.label + "'");
        set.studies.push_back(std::move(est));
    }
    return set;
}

inline ReferenceSet parse_reference_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw CsvParseError("cannot open '" + path + "'");
    return parse_reference_csv(in, path);
}

}  // namespace hrmeta
