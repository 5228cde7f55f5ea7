#pragma once

#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gimkit/common.hpp"

namespace gimkit {

/// An iid sample, one observation per row.  Row layouts by problem family:
///   plain samples        (z1,...,zq)
///   regression           (x1,...,xp, y)
///   treatment regimes    (x1, x2, a, y) with a in {0,1}
class Dataset {
 public:
  explicit Dataset(RowMatrix rows) : rows_(std::move(rows)) {
    if (rows_.rows() < 1) throw std::domain_error("Dataset: needs at least one observation");
    if (!rows_.allFinite()) throw std::domain_error("Dataset: entries must be finite");
  }

  static Dataset from_scalars(const std::vector<double>& z) {
    RowMatrix m(static_cast<Eigen::Index>(z.size()), 1);
    for (std::size_t i = 0; i < z.size(); ++i) m(static_cast<Eigen::Index>(i), 0) = z[i];
    return Dataset(std::move(m));
  }

  int n() const { return static_cast<int>(rows_.rows()); }
  int dim() const { return static_cast<int>(rows_.cols()); }
  ConstRowRef row(int i) const { return rows_.row(i).transpose(); }
  const RowMatrix& matrix() const { return rows_; }
  auto col(int j) const { return rows_.col(j); }

 private:
  RowMatrix rows_;
};

enum class SchemaKind { Plain, Regression, Dtr };

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    // trim surrounding blanks
    std::size_t b = cell.find_first_not_of(" \t\r");
    std::size_t e = cell.find_last_not_of(" \t\r");
    out.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline double parse_number(const std::string& cell, int line_no, int col_no) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(cell, &pos);
  } catch (const std::exception&) {
    throw SchemaError("line " + std::to_string(line_no) + ", column " + std::to_string(col_no) +
                      ": cannot parse '" + cell + "' as a number");
  }
  if (pos != cell.size())
    throw SchemaError("line " + std::to_string(line_no) + ", column " + std::to_string(col_no) +
                      ": trailing characters in '" + cell + "'");
  if (!std::isfinite(v))
    throw SchemaError("line " + std::to_string(line_no) + ", column " + std::to_string(col_no) +
                      ": non-finite value");
  return v;
}

inline void check_header(const std::vector<std::string>& header, SchemaKind kind) {
  auto fail = [&](const std::string& want) {
    throw SchemaError("line 1: header mismatch, expected " + want);
  };
  switch (kind) {
    case SchemaKind::Plain:
      if (header.empty()) fail("z1[,z2,...]");
      for (std::size_t j = 0; j < header.size(); ++j)
        if (header[j] != "z" + std::to_string(j + 1)) fail("z1[,z2,...]");
      break;
    case SchemaKind::Regression: {
      if (header.size() < 2 || header.back() != "y") fail("x1,...,xp,y");
      for (std::size_t j = 0; j + 1 < header.size(); ++j)
        if (header[j] != "x" + std::to_string(j + 1)) fail("x1,...,xp,y");
      break;
    }
    case SchemaKind::Dtr:
      if (header != std::vector<std::string>{"x1", "x2", "a", "y"}) fail("x1,x2,a,y");
      break;
  }
}

}  // namespace detail

/// Reads a headered CSV stream in one of the three supported schemas.
/// Leading '#' lines are treated as comments (our own writers emit them).
inline Dataset read_csv(std::istream& in, SchemaKind kind) {
  std::string line;
  int line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line[0] == '#') continue;
    header = detail::split_csv_line(line);
    break;
  }
  if (header.empty()) throw SchemaError("line 1: missing header");
  detail::check_header(header, kind);
  const std::size_t ncol = header.size();

  std::vector<double> values;
  int nrow = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    const auto cells = detail::split_csv_line(line);
    if (cells.size() != ncol)
      throw SchemaError("line " + std::to_string(line_no) + ": expected " + std::to_string(ncol) +
                        " fields, found " + std::to_string(cells.size()));
    for (std::size_t j = 0; j < ncol; ++j) {
      const double v = detail::parse_number(cells[j], line_no, static_cast<int>(j + 1));
      if (kind == SchemaKind::Dtr && j == 2 && v != 0.0 && v != 1.0)
        throw SchemaError("line " + std::to_string(line_no) +
                          ": treatment flag must be exactly 0 or 1");
      values.push_back(v);
    }
    ++nrow;
  }
  if (nrow == 0) throw SchemaError("no data rows after header");

  RowMatrix m(nrow, static_cast<Eigen::Index>(ncol));
  for (int i = 0; i < nrow; ++i)
    for (std::size_t j = 0; j < ncol; ++j)
      m(i, static_cast<Eigen::Index>(j)) = values[static_cast<std::size_t>(i) * ncol + j];
  return Dataset(std::move(m));
}

inline Dataset read_csv_file(const std::string& path, SchemaKind kind) {
  std::ifstream in(path);
  if (!in) throw SchemaError("cannot open '" + path + "'");
  return read_csv(in, kind);
}

}  // namespace gimkit
