#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "heartinv/mesh.hpp"

namespace heartinv {

class CsvError : public Error {
public:
    using Error::Error;
};

/// Formats with the given number of significant digits (printf %.Ng).
std::string format_real(double value, int significant_digits = 9);

/// Rows of a headered matrix CSV: "<label>,t0,t1,..." then "<i>,v0,v1,...".
std::string format_labeled_matrix(const Eigen::MatrixXd& m, const std::string& label, int significant_digits = 9);
Eigen::MatrixXd parse_labeled_matrix(const std::string& text);

/// Plain comma-separated rows, no header.
std::string format_plain_matrix(const Eigen::MatrixXd& m, int significant_digits = 17);
Eigen::MatrixXd parse_plain_matrix(const std::string& text);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace heartinv
