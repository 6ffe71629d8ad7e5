#include "cordcov/csv.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <vector>

namespace cordcov {

namespace {

std::vector<std::string> split_line(const std::string& line, char delimiter) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, delimiter)) cells.push_back(cell);
  if (!line.empty() && line.back() == delimiter) cells.emplace_back();
  return cells;
}

double parse_cell(const std::string& cell, const std::string& path, std::size_t line_no,
                  std::size_t col_no) {
  const char* begin = cell.c_str();
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(begin, &end);
  while (end && *end == ' ') ++end;
  if (end == begin || (end && *end != '\0') || errno == ERANGE)
    throw InputError(path + ":" + std::to_string(line_no) + ": column " + std::to_string(col_no) +
                     ": cannot parse '" + cell + "' as a number");
  if (!std::isfinite(v))
    throw InputError(path + ":" + std::to_string(line_no) + ": column " + std::to_string(col_no) +
                     ": non-finite value");
  return v;
}

}  // namespace

Eigen::MatrixXd read_numeric_csv(const std::string& path, bool has_header, char delimiter) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open input file: " + path);

  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line_no == 1 && has_header) continue;
    if (line.empty()) continue;
    std::vector<std::string> cells = split_line(line, delimiter);
    if (width == 0) width = cells.size();
    if (cells.size() != width)
      throw InputError(path + ":" + std::to_string(line_no) + ": expected " + std::to_string(width) +
                       " columns, found " + std::to_string(cells.size()));
    std::vector<double> row(width);
    for (std::size_t c = 0; c < width; ++c)
      row[c] = parse_cell(cells[c], path, line_no, c + 1);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw InputError(path + ": no data rows");

  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < width; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
  return m;
}

PairedSample read_paired_sample(const InputSpec& spec) {
  PairedSample sample;
  if (spec.path_y.empty()) {
    Eigen::MatrixXd all = read_numeric_csv(spec.path_x, spec.has_header, spec.delimiter);
    if (spec.split_col < 1 || spec.split_col >= all.cols())
      throw InputError("split column must satisfy 1 <= px < total columns (" +
                       std::to_string(all.cols()) + ")");
    sample.x = all.leftCols(spec.split_col);
    sample.y = all.rightCols(all.cols() - spec.split_col);
  } else {
    sample.x = read_numeric_csv(spec.path_x, spec.has_header, spec.delimiter);
    sample.y = read_numeric_csv(spec.path_y, spec.has_header, spec.delimiter);
    if (sample.x.rows() != sample.y.rows())
      throw InputError("row counts differ: " + spec.path_x + " has " +
                       std::to_string(sample.x.rows()) + ", " + spec.path_y + " has " +
                       std::to_string(sample.y.rows()));
  }
  return sample;
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << content;
  if (!out) throw std::runtime_error("failed writing " + path);
}

}  // namespace cordcov
