#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace hev {

/// Fixed-point text with `digits` decimals; "-0" is printed as "0" so output
/// does not depend on the sign of rounded zeros.
std::string fmt(double value, int digits);

std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

/// Numeric CSV: one header row, then rows of numbers. Lines starting with '#'
/// and blank lines are skipped.
struct CsvTable {
  std::vector<std::string> header;
  Eigen::MatrixXd data;

  Eigen::Index column(const std::string& name) const;  // -1 if absent
  Eigen::VectorXd col(const std::string& name) const;  // throws if absent
};

CsvTable read_csv(std::istream& is, const std::string& what);
CsvTable read_csv_file(const std::string& path);

/// Comment line written under the header of every output file.
std::string provenance_line(std::uint64_t seed, std::uint64_t params_hash);

}  // namespace hev
