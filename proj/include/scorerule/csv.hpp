#pragma once

#include <string>

#include <Eigen/Dense>

namespace scorerule {

/// Reads a numeric CSV (one observation per row, comma separated, UTF-8).
/// A non-numeric first line is treated as a header and skipped.
Eigen::MatrixXd read_csv(const std::string& path);

Eigen::MatrixXd parse_csv_text(const std::string& text);

}  // namespace scorerule
