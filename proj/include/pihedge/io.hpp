#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

namespace pihedge {

// File helpers; failures raise IoError naming the path.
std::string read_text_file(const std::string& path);
/// Creates missing parent directories.
void write_text_file(const std::string& path, std::string_view text);

std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t value);

/// Shortest text that reads back to the same double.
std::string format_double(double x);

/// Header "t0,t1,..." followed by one row per matrix row.
void write_matrix_csv(std::ostream& out, const Eigen::MatrixXd& m, const std::string& column_prefix = "t");
/// Inverse of write_matrix_csv. Throws ParseError on malformed rows.
Eigen::MatrixXd read_matrix_csv(std::istream& in);
Eigen::MatrixXd read_matrix_csv_file(const std::string& path);

}  // namespace pihedge
