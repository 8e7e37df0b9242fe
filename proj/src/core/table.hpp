#pragma once

#include <fstream>
#include <string>
#include <vector>

#include "common.hpp"

namespace bondflow {

// Numeric result table. NaN entries mark undefined values (emitted as
// "nan" in CSV and null in JSON). Output is bit-stable: fixed column
// order, %.17g floats, LF line endings.
struct Table {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  std::string to_csv() const;
  std::string to_json() const;
};

// Streaming writer for trajectory-sized emissions, same format contract.
class TableSink {
 public:
  TableSink(const std::string& path, const std::vector<std::string>& columns,
            const std::string& format);
  void row(const double* vals, size_t n);
  void row(const std::vector<double>& vals) { row(vals.data(), vals.size()); }
  void close();
  ~TableSink();

 private:
  std::ofstream f_;
  std::string path_;
  bool json_ = false;
  bool first_row_ = true;
  size_t ncols_ = 0;
  bool closed_ = false;
};

void write_text_file(const std::string& path, const std::string& content);
void ensure_directory(const std::string& path);
std::string join_path(const std::string& dir, const std::string& name);

// log2(err_prev/err_cur) when the parameter halved exactly and both errors
// sit above the noise floor; NaN marker otherwise.
double observed_order(double param_prev, double param_cur, double err_prev, double err_cur);

}  // namespace bondflow
