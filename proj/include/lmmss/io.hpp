#pragma once

// Whitespace-delimited matrix/vector files and comma-delimited tables.

#include "lmmss/error.hpp"
#include "lmmss/types.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace lmmss::io {

/// One matrix row per non-empty line; '#' starts a comment.
inline Matrix read_matrix(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(Errc::io_error, "cannot open " + path);
    }
    std::vector<std::vector<double>> rows;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        std::istringstream ls(line);
        std::vector<double> row;
        std::string tok;
        while (ls >> tok) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(tok, &used));
                if (used != tok.size()) {
                    throw std::invalid_argument(tok);
                }
            } catch (const std::exception&) {
                throw Error(Errc::io_error, path + ":" + std::to_string(lineno) + ": not a number: '" + tok + "'");
            }
        }
        if (row.empty()) {
            continue;
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw Error(Errc::io_error, path + ":" + std::to_string(lineno) + ": expected " +
                                            std::to_string(rows.front().size()) + " columns, got " + std::to_string(row.size()));
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) {
        throw Error(Errc::io_error, path + ": no data");
    }
    Matrix M(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index i = 0; i < M.rows(); ++i) {
        for (Index j = 0; j < M.cols(); ++j) {
            M(i, j) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
        }
    }
    return M;
}

/// Accepts a single row or a single column.
inline Vector read_vector(const std::string& path) {
    const Matrix M = read_matrix(path);
    if (M.cols() == 1) {
        return M.col(0);
    }
    if (M.rows() == 1) {
        return M.row(0).transpose();
    }
    throw Error(Errc::io_error, path + ": expected a vector, got a " + std::to_string(M.rows()) + "x" +
                                    std::to_string(M.cols()) + " matrix");
}

inline void write_matrix(const std::string& path, const Matrix& M) {
    std::ofstream out(path);
    if (!out) {
        throw Error(Errc::io_error, "cannot write " + path);
    }
    char buf[32];
    for (Index i = 0; i < M.rows(); ++i) {
        for (Index j = 0; j < M.cols(); ++j) {
            std::snprintf(buf, sizeof buf, "%.17g", M(i, j));
            out << (j ? " " : "") << buf;
        }
        out << '\n';
    }
}

/// 17 significant digits, so values round-trip exactly.
inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// Comma-delimited table with a provenance comment and a header row.
class CsvTable {
public:
    CsvTable(std::string digest, std::vector<std::string> header) : digest_(std::move(digest)), header_(std::move(header)) {}

    void add_row(std::vector<std::string> cells) {
        require(cells.size() == header_.size(), Errc::invalid_argument, "CsvTable: row width differs from header");
        rows_.push_back(std::move(cells));
    }

    std::size_t rows() const noexcept { return rows_.size(); }

    std::string str() const {
        std::string s = "# config_sha256=" + digest_ + "\n";
        auto line     = [&s](const std::vector<std::string>& cells) {
            for (std::size_t i = 0; i < cells.size(); ++i) {
                s += (i ? "," : "") + cells[i];
            }
            s += '\n';
        };
        line(header_);
        for (const auto& r : rows_) {
            line(r);
        }
        return s;
    }

    void write(const std::string& path) const {
        std::ofstream out(path, std::ios::binary);
        if (!out) {
            throw Error(Errc::io_error, "cannot write " + path);
        }
        out << str();
    }

private:
    std::string digest_;
    std::vector<std::string> header_;
    std::vector<std::vector<std::string>> rows_;
};

} // namespace lmmss::io
