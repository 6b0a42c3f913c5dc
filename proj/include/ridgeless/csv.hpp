#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <system_error>
#include <vector>

#include <Eigen/Core>

#include "ridgeless/errors.hpp"

namespace ridgeless {

// Shortest round-trip decimal representation; keeps golden files byte-stable.
[[nodiscard]] inline std::string format_double(double value) {
    if (std::isnan(value)) return "nan";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

[[nodiscard]] inline std::string format_int(std::int64_t value) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, res.ptr);
}

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::vector<std::string>& header)
        : out_(path, std::ios::binary), columns_(header.size()) {
        if (!out_) throw invalid_spec("csv: cannot open " + path + " for writing");
        write_row(header);
    }

    void write_row(const std::vector<std::string>& cells) {
        if (cells.size() != columns_)
            throw invalid_spec("csv: row width " + std::to_string(cells.size()) +
                               " does not match header width " + std::to_string(columns_));
        for (std::size_t i = 0; i < cells.size(); ++i) {
            if (i) out_ << ',';
            out_ << cells[i];
        }
        out_ << '\n';
    }

private:
    std::ofstream out_;
    std::size_t columns_;
};

namespace detail {

inline double parse_cell(const std::string& cell, const std::string& path, std::size_t line) {
    double value = 0.0;
    const char* begin = cell.data();
    const char* end = begin + cell.size();
    while (begin < end && (*begin == ' ' || *begin == '\t')) ++begin;
    const auto res = std::from_chars(begin, end, value);
    if (res.ec != std::errc())
        throw invalid_spec("csv: non-numeric cell '" + cell + "' at " + path + ":" +
                           std::to_string(line));
    return value;
}

}  // namespace detail

// Numeric CSV (comma-separated); a non-numeric first line is treated as a
// header and skipped. Returns a dense row-major matrix.
[[nodiscard]] inline Eigen::MatrixXd read_csv_matrix(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw invalid_spec("csv: cannot open " + path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            const std::size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        if (rows.empty() && line_no == 1) {
            double probe = 0.0;
            const auto res =
                std::from_chars(cells[0].data(), cells[0].data() + cells[0].size(), probe);
            if (res.ec != std::errc()) continue;  // header line
        }
        std::vector<double> row;
        row.reserve(cells.size());
        for (const auto& cell : cells)
            row.push_back(detail::parse_cell(cell, path, line_no));
        if (!rows.empty() && row.size() != rows.front().size())
            throw invalid_spec("csv: ragged row at " + path + ":" + std::to_string(line_no));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw invalid_spec("csv: no data rows in " + path);
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(rows.front().size()));
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
    return m;
}

[[nodiscard]] inline Eigen::VectorXd read_csv_vector(const std::string& path) {
    const Eigen::MatrixXd m = read_csv_matrix(path);
    if (m.cols() == 1) return m.col(0);
    if (m.rows() == 1) return m.row(0);
    throw invalid_spec("csv: " + path + " is not a single row or column");
}

}  // namespace ridgeless
