#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "common.hpp"

namespace bondflow {

// Minimal JSON writer. Numbers are printed with %.17g so emitted values
// reparse to bit-identical doubles; NaN (undefined markers) becomes null.
class JsonWriter {
 public:
  void begin_object() { sep(); out_ += '{'; stack_.push_back('}'); fresh_ = true; }
  void begin_array() { sep(); out_ += '['; stack_.push_back(']'); fresh_ = true; }
  void end() {
    out_ += stack_.back();
    stack_.pop_back();
    fresh_ = false;
  }
  void key(const std::string& k) {
    sep();
    append_string(k);
    out_ += ':';
    fresh_ = true;  // value follows without comma
  }
  void value(double v) {
    sep();
    if (std::isnan(v))
      out_ += "null";
    else
      out_ += fmt_g17(v);
  }
  void value(long v) { sep(); out_ += std::to_string(v); }
  void value(int v) { sep(); out_ += std::to_string(v); }
  void value(bool v) { sep(); out_ += v ? "true" : "false"; }
  void value(const std::string& s) { sep(); append_string(s); }
  void value(const char* s) { sep(); append_string(s); }

  const std::string& str() const { return out_; }

 private:
  std::string out_;
  std::vector<char> stack_;
  bool fresh_ = true;

  void sep() {
    if (!fresh_ && !stack_.empty()) out_ += ',';
    fresh_ = false;
  }
  void append_string(const std::string& s) {
    out_ += '"';
    for (char c : s) {
      switch (c) {
        case '"': out_ += "\\\""; break;
        case '\\': out_ += "\\\\"; break;
        case '\n': out_ += "\\n"; break;
        case '\t': out_ += "\\t"; break;
        case '\r': out_ += "\\r"; break;
        default: out_ += c;
      }
    }
    out_ += '"';
  }
};

}  // namespace bondflow
