#pragma once

#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace bondflow {

// Error taxonomy; the C API maps these onto bf_status codes.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string strfmt(const char* fmt, ...) {
  va_list args;
  va_start(args, fmt);
  char buf[1024];
  std::vsnprintf(buf, sizeof(buf), fmt, args);
  va_end(args);
  return std::string(buf);
}

// 17 significant digits: round-trip exact for IEEE doubles.
inline std::string fmt_g17(double v) { return strfmt("%.17g", v); }

// Neumaier compensated sum. Deterministic for a fixed visit order and
// accurate enough that moment identities hold at the 1e-15 level even for
// age grids with many thousands of cells.
class KahanSum {
 public:
  void add(double x) {
    double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

// 4-point Gauss-Legendre nodes/weights on [0,1].
struct Gauss4 {
  static constexpr double node[4] = {
      0.069431844202973712388026755553595247452,
      0.33000947820757186759866712044837765640,
      0.66999052179242813240133287955162234360,
      0.93056815579702628761197324444640475255};
  static constexpr double weight[4] = {
      0.173927422568726928686531974610999703618,
      0.326072577431273071313468025389000296382,
      0.326072577431273071313468025389000296382,
      0.173927422568726928686531974610999703618};
};

constexpr double kPi = 3.14159265358979323846264338327950288;

}  // namespace bondflow
