#include "table.hpp"

#include <cmath>
#include <filesystem>

#include "jsonout.hpp"

namespace bondflow {

namespace {

std::string csv_value(double v) { return std::isnan(v) ? "nan" : fmt_g17(v); }

}  // namespace

std::string Table::to_csv() const {
  std::string out;
  for (size_t c = 0; c < columns.size(); ++c) {
    if (c) out += ',';
    out += columns[c];
  }
  out += '\n';
  for (const auto& r : rows) {
    for (size_t c = 0; c < r.size(); ++c) {
      if (c) out += ',';
      out += csv_value(r[c]);
    }
    out += '\n';
  }
  return out;
}

std::string Table::to_json() const {
  JsonWriter w;
  w.begin_object();
  w.key("columns");
  w.begin_array();
  for (const auto& c : columns) w.value(c);
  w.end();
  w.key("rows");
  w.begin_array();
  for (const auto& r : rows) {
    w.begin_array();
    for (double v : r) w.value(v);
    w.end();
  }
  w.end();
  w.end();
  return w.str();
}

TableSink::TableSink(const std::string& path, const std::vector<std::string>& columns,
                     const std::string& format)
    : path_(path), json_(format == "json"), ncols_(columns.size()) {
  f_.open(path, std::ios::binary);
  if (!f_) throw IoError("cannot open output file: " + path);
  if (json_) {
    JsonWriter w;
    w.begin_array();
    for (const auto& c : columns) w.value(c);
    w.end();
    f_ << "{\"columns\":" << w.str() << ",\"rows\":[";
  } else {
    for (size_t c = 0; c < columns.size(); ++c) {
      if (c) f_ << ',';
      f_ << columns[c];
    }
    f_ << '\n';
  }
}

void TableSink::row(const double* vals, size_t n) {
  if (n != ncols_) throw IoError("row width does not match header: " + path_);
  if (json_) {
    if (!first_row_) f_ << ',';
    f_ << '[';
    for (size_t c = 0; c < n; ++c) {
      if (c) f_ << ',';
      if (std::isnan(vals[c]))
        f_ << "null";
      else
        f_ << fmt_g17(vals[c]);
    }
    f_ << ']';
  } else {
    for (size_t c = 0; c < n; ++c) {
      if (c) f_ << ',';
      f_ << csv_value(vals[c]);
    }
    f_ << '\n';
  }
  first_row_ = false;
}

void TableSink::close() {
  if (closed_) return;
  if (json_) f_ << "]}";
  f_.close();
  if (!f_.good()) throw IoError("write failed: " + path_);
  closed_ = true;
}

TableSink::~TableSink() {
  try {
    close();
  } catch (...) {
  }
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open output file: " + path);
  f << content;
  f.close();
  if (!f.good()) throw IoError("write failed: " + path);
}

void ensure_directory(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw IoError("cannot create directory " + path + ": " + ec.message());
}

std::string join_path(const std::string& dir, const std::string& name) {
  if (dir.empty()) return name;
  if (dir.back() == '/') return dir + name;
  return dir + "/" + name;
}

double observed_order(double param_prev, double param_cur, double err_prev, double err_cur) {
  if (!(param_cur > 0) || !(param_prev > 0)) return std::nan("");
  double ratio = param_prev / param_cur;
  if (std::abs(ratio - 2.0) > 1e-9) return std::nan("");
  if (err_prev < 1e-13 || err_cur < 1e-13) return std::nan("");
  return std::log2(err_prev / err_cur);
}

}  // namespace bondflow
