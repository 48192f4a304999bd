#pragma once

// Crosstalk matrix files.
//
//   text:  "D <n>" then n^2 lines "<row> <col> <re> <im>", row-major
//   csv:   "row,col,re,im" then n^2 lines "<row>,<col>,<re>,<im>"
//
// Reals are written with 17 significant digits so binary64 round-trips.

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "superres/crosstalk.hpp"
#include "superres/error.hpp"

namespace superres {

enum class MatrixFileFormat { text, csv };

/// Treated as unitary when ||C^dagger C - I||_max is below this.
inline constexpr double kUnitarityWarnThreshold = 1e-9;

inline std::string format_matrix(const ComplexMatrix& c, MatrixFileFormat format = MatrixFileFormat::text) {
  std::string out;
  char line[128];
  if (format == MatrixFileFormat::text) {
    out += "D " + std::to_string(c.rows()) + "\n";
  } else {
    out += "row,col,re,im\n";
  }
  const char* fmt = format == MatrixFileFormat::text ? "%lld %lld %.17g %.17g\n" : "%lld,%lld,%.17g,%.17g\n";
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 0; j < c.cols(); ++j) {
      std::snprintf(line, sizeof line, fmt, static_cast<long long>(i), static_cast<long long>(j), c(i, j).real(),
                    c(i, j).imag());
      out += line;
    }
  }
  return out;
}

inline void store_matrix(const CrosstalkMatrix& c, const std::string& path,
                         MatrixFileFormat format = MatrixFileFormat::text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("store_matrix: cannot open " + path);
  f << format_matrix(c.entries, format);
  if (!f) throw ConfigError("store_matrix: write failed for " + path);
}

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

struct Entry {
  long long row, col;
  double re, im;
};

inline Entry parse_entry(std::string line, bool csv, int line_no) {
  if (csv)
    for (char& ch : line)
      if (ch == ',') ch = ' ';
  std::istringstream in(line);
  Entry e{};
  std::string extra;
  if (!(in >> e.row >> e.col >> e.re >> e.im) || (in >> extra))
    throw ConfigError("matrix file: malformed entry on line " + std::to_string(line_no));
  if (!std::isfinite(e.re) || !std::isfinite(e.im))
    throw ConfigError("matrix file: non-finite value on line " + std::to_string(line_no));
  return e;
}

}  // namespace detail

/// Parses either format. Non-unitary matrices are accepted (measured
/// matrices include loss); the deviation is recorded in the provenance.
inline CrosstalkMatrix parse_matrix(const std::string& content, const std::string& origin = "<memory>") {
  std::istringstream in(content);
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) {
    line = detail::trim(line);
    if (!line.empty()) lines.push_back(line);
  }
  if (lines.empty()) throw ConfigError("matrix file: empty");

  const bool csv = lines.front() == "row,col,re,im";
  long long dim = 0;
  if (!csv) {
    std::istringstream head(lines.front());
    std::string tag, extra;
    if (!(head >> tag >> dim) || tag != "D" || (head >> extra) || dim < 1)
      throw ConfigError("matrix file: first line must be 'D <integer>' or the CSV header 'row,col,re,im'");
  }
  const long long count = static_cast<long long>(lines.size()) - 1;
  if (csv) {
    dim = std::llround(std::sqrt(static_cast<double>(count)));
    if (count < 1 || dim * dim != count) throw ConfigError("matrix file: CSV entry count is not a perfect square");
  } else if (count != dim * dim) {
    throw ConfigError("matrix file: dimension mismatch, header says D=" + std::to_string(dim) + " but found " +
                      std::to_string(count) + " entries (expected " + std::to_string(dim * dim) + ")");
  }

  ComplexMatrix c = ComplexMatrix::Zero(dim, dim);
  std::vector<char> seen(static_cast<std::size_t>(dim * dim), 0);
  for (long long k = 0; k < count; ++k) {
    const auto e = detail::parse_entry(lines[k + 1], csv, static_cast<int>(k + 2));
    if (e.row < 0 || e.col < 0 || e.row >= dim || e.col >= dim)
      throw ConfigError("matrix file: index out of range on line " + std::to_string(k + 2));
    auto& flag = seen[static_cast<std::size_t>(e.row * dim + e.col)];
    if (flag) throw ConfigError("matrix file: duplicate entry on line " + std::to_string(k + 2));
    flag = 1;
    c(e.row, e.col) = Complex(e.re, e.im);
  }

  const double dev = unitarity_deviation(c);
  return CrosstalkMatrix{std::move(c), LoadedOrigin{origin, dev, !(dev < kUnitarityWarnThreshold)}};
}

inline CrosstalkMatrix load_matrix(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ConfigError("load_matrix: cannot open " + path);
  std::ostringstream buf;
  buf << f.rdbuf();
  return parse_matrix(buf.str(), path);
}

}  // namespace superres
