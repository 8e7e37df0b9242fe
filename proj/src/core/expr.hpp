#pragma once

#include <memory>
#include <string>
#include <vector>

#include "common.hpp"

namespace bondflow {

// Arithmetic expressions over the variables {x, a, t}.
//
// Grammar (checked against the usual precedence rules):
//   expr   := term (('+'|'-') term)*
//   term   := unary (('*'|'/') unary)*
//   unary  := '-' unary | power
//   power  := atom ('^' unary)?           // right-associative
//   atom   := number | 'pi' | 'x'|'a'|'t' | fun '(' expr [',' expr] ')' | '(' expr ')'
// Functions: sin cos exp sqrt abs (unary), min max (binary).
//
// Evaluation is exact recursive arithmetic compiled to a postfix program;
// identical inputs give bit-identical outputs.
class RateExpr {
 public:
  enum class Var { X = 0, A = 1, T = 2 };

  // Throws ConfigError with a 1-based byte offset on syntax errors,
  // unknown identifiers, and arity mismatches.
  static RateExpr parse(const std::string& src);

  // Throws NumericError (reporting x,a,t) on domain faults: division by
  // zero, sqrt of a negative, invalid powers, or non-finite results.
  double eval(double x, double a, double t) const;

  bool uses(Var v) const { return uses_[static_cast<int>(v)]; }
  bool is_constant() const { return !uses(Var::X) && !uses(Var::A) && !uses(Var::T); }

  // Canonical fully parenthesized form; parse(print()) reproduces the tree.
  std::string print() const;

  int node_count() const { return static_cast<int>(prog_.size()); }
  const std::string& source() const { return src_; }

 private:
  enum class Op : int {
    Num, PushX, PushA, PushT,
    Add, Sub, Mul, Div, Pow, Neg,
    Sin, Cos, Exp, Sqrt, Abs, Min, Max
  };
  struct Instr {
    Op op;
    double value = 0.0;
  };

  std::vector<Instr> prog_;   // postfix program
  bool uses_[3] = {false, false, false};
  int max_stack_ = 0;
  std::string src_;

  friend class ExprParser;
};

}  // namespace bondflow
