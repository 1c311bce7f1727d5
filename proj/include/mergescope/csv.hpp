#pragma once

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "mergescope/errors.hpp"

namespace mergescope {

// Numbers in reports: '.' decimal separator, at most 6 significant digits.
inline std::string format_sig6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

// Undefined cells are written as an explicit marker, never 0 or NaN.
inline std::string format_cell(const std::optional<double> & v) {
    return v ? format_sig6(*v) : "NA";
}

inline std::string csv_escape(const std::string & field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += "\"\"";
        else out += c;
    }
    out += '"';
    return out;
}

// Builds a CSV document in memory: mandatory header row, LF newlines.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) { row(std::move(header)); }

    void row(std::vector<std::string> fields) {
        if (columns_ == 0) {
            columns_ = fields.size();
        } else if (fields.size() != columns_) {
            throw Error("csv row has " + std::to_string(fields.size()) + " fields, header has " +
                        std::to_string(columns_));
        }
        for (std::size_t i = 0; i < fields.size(); ++i) {
            if (i > 0) text_ += ',';
            text_ += csv_escape(fields[i]);
        }
        text_ += '\n';
    }

    const std::string & str() const { return text_; }

private:
    std::string text_;
    std::size_t columns_ = 0;
};

} // namespace mergescope
