#pragma once

#include <Eigen/Core>
#include <string>

#include "cordcov/dcov.hpp"

namespace cordcov {

// Raised for malformed input files; the CLI maps it to exit code 2.
struct InputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Numeric CSV input: either one file whose first `split_col` columns are X,
// or two files with matching row counts.
struct InputSpec {
  std::string path_x;     // single file, or the X file
  std::string path_y;     // empty in single-file mode
  int split_col = 0;      // number of X columns in single-file mode
  bool has_header = false;
  char delimiter = ',';
};

// Locale-independent numeric CSV reader; errors name the offending line
// (and column for non-numeric or non-finite cells).
Eigen::MatrixXd read_numeric_csv(const std::string& path, bool has_header, char delimiter);

PairedSample read_paired_sample(const InputSpec& spec);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace cordcov
