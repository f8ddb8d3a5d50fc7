#include "heartinv/csv.hpp"

#include <cerrno>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace heartinv {

namespace {

std::vector<std::string> split_fields(const std::string& line) {
    std::vector<std::string> fields;
    std::string current;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(current);
            current.clear();
        } else if (c != '\r') {
            current.push_back(c);
        }
    }
    fields.push_back(current);
    return fields;
}

double parse_number(const std::string& field, int lineno) {
    const char* begin = field.c_str();
    while (*begin == ' ' || *begin == '\t') ++begin;
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(begin, &end);
    while (end && (*end == ' ' || *end == '\t')) ++end;
    if (end == begin || (end && *end != '\0') || errno == ERANGE) {
        throw CsvError("line " + std::to_string(lineno) + ": non-numeric field '" + field + "'");
    }
    return v;
}

Eigen::MatrixXd to_matrix(const std::vector<std::vector<double>>& rows) {
    if (rows.empty()) return {};
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
    return m;
}

}  // namespace

std::string format_real(double value, int significant_digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", significant_digits, value);
    return buf;
}

std::string format_labeled_matrix(const Eigen::MatrixXd& m, const std::string& label, int significant_digits) {
    std::string out = label;
    for (Eigen::Index t = 0; t < m.cols(); ++t) out += ",t" + std::to_string(t);
    out += '\n';
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out += std::to_string(i);
        for (Eigen::Index t = 0; t < m.cols(); ++t) {
            out += ',';
            out += format_real(m(i, t), significant_digits);
        }
        out += '\n';
    }
    return out;
}

Eigen::MatrixXd parse_labeled_matrix(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    if (!std::getline(in, line)) throw CsvError("empty CSV");
    ++lineno;
    const std::size_t width = split_fields(line).size();
    if (width < 2) throw CsvError("line 1: header has no value columns");
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_fields(line);
        if (fields.size() != width) {
            throw CsvError("line " + std::to_string(lineno) + ": expected " + std::to_string(width) + " fields, found " +
                           std::to_string(fields.size()));
        }
        std::vector<double> row;
        row.reserve(width - 1);
        for (std::size_t k = 1; k < fields.size(); ++k) row.push_back(parse_number(fields[k], lineno));
        rows.push_back(std::move(row));
    }
    return to_matrix(rows);
}

std::string format_plain_matrix(const Eigen::MatrixXd& m, int significant_digits) {
    std::string out;
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j) out += ',';
            out += format_real(m(i, j), significant_digits);
        }
        out += '\n';
    }
    return out;
}

Eigen::MatrixXd parse_plain_matrix(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    std::size_t width = 0;
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto fields = split_fields(line);
        if (rows.empty()) {
            width = fields.size();
        } else if (fields.size() != width) {
            throw CsvError("line " + std::to_string(lineno) + ": ragged row with " + std::to_string(fields.size()) +
                           " fields, expected " + std::to_string(width));
        }
        std::vector<double> row;
        row.reserve(fields.size());
        for (const auto& f : fields) row.push_back(parse_number(f, lineno));
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw CsvError("empty CSV");
    return to_matrix(rows);
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << text;
    if (!out) throw Error("write failed for " + path.string());
}

}  // namespace heartinv
