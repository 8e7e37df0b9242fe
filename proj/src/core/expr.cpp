#include "expr.hpp"

#include <cctype>
#include <cstdlib>

namespace bondflow {

namespace {

struct Token {
  enum Kind { Number, Ident, Plus, Minus, Star, Slash, Caret, LParen, RParen, Comma, End } kind;
  double value = 0.0;
  std::string text;
  size_t pos = 0;  // 1-based byte offset
};

class Lexer {
 public:
  explicit Lexer(const std::string& src) : src_(src) {}

  Token next() {
    while (i_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[i_]))) ++i_;
    Token tok;
    tok.pos = i_ + 1;
    if (i_ >= src_.size()) {
      tok.kind = Token::End;
      return tok;
    }
    char c = src_[i_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const char* start = src_.c_str() + i_;
      char* end = nullptr;
      tok.value = std::strtod(start, &end);
      if (end == start) throw ConfigError(strfmt("syntax error at offset %zu: bad number", tok.pos));
      i_ += static_cast<size_t>(end - start);
      tok.kind = Token::Number;
      return tok;
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      size_t j = i_;
      while (j < src_.size() &&
             (std::isalnum(static_cast<unsigned char>(src_[j])) || src_[j] == '_'))
        ++j;
      tok.kind = Token::Ident;
      tok.text = src_.substr(i_, j - i_);
      i_ = j;
      return tok;
    }
    ++i_;
    switch (c) {
      case '+': tok.kind = Token::Plus; return tok;
      case '-': tok.kind = Token::Minus; return tok;
      case '*': tok.kind = Token::Star; return tok;
      case '/': tok.kind = Token::Slash; return tok;
      case '^': tok.kind = Token::Caret; return tok;
      case '(': tok.kind = Token::LParen; return tok;
      case ')': tok.kind = Token::RParen; return tok;
      case ',': tok.kind = Token::Comma; return tok;
      default:
        throw ConfigError(strfmt("syntax error at offset %zu: unexpected character '%c'", tok.pos, c));
    }
  }

 private:
  const std::string& src_;
  size_t i_ = 0;
};

}  // namespace

class ExprParser {
 public:
  explicit ExprParser(const std::string& src) : lex_(src) { advance(); }

  RateExpr run(const std::string& src) {
    RateExpr e;
    e.src_ = src;
    parse_expr(e);
    if (cur_.kind != Token::End)
      throw ConfigError(strfmt("syntax error at offset %zu: trailing input", cur_.pos));
    e.max_stack_ = max_depth_;
    return e;
  }

 private:
  Lexer lex_;
  Token cur_;
  int depth_ = 0;
  int max_depth_ = 0;

  void advance() { cur_ = lex_.next(); }

  void push(RateExpr& e, RateExpr::Instr ins, int stack_delta) {
    e.prog_.push_back(ins);
    depth_ += stack_delta;
    if (depth_ > max_depth_) max_depth_ = depth_;
  }

  void parse_expr(RateExpr& e) {
    parse_term(e);
    while (cur_.kind == Token::Plus || cur_.kind == Token::Minus) {
      auto op = cur_.kind == Token::Plus ? RateExpr::Op::Add : RateExpr::Op::Sub;
      advance();
      parse_term(e);
      push(e, {op}, -1);
    }
  }

  void parse_term(RateExpr& e) {
    parse_unary(e);
    while (cur_.kind == Token::Star || cur_.kind == Token::Slash) {
      auto op = cur_.kind == Token::Star ? RateExpr::Op::Mul : RateExpr::Op::Div;
      advance();
      parse_unary(e);
      push(e, {op}, -1);
    }
  }

  void parse_unary(RateExpr& e) {
    if (cur_.kind == Token::Minus) {
      advance();
      parse_unary(e);
      push(e, {RateExpr::Op::Neg}, 0);
      return;
    }
    parse_power(e);
  }

  void parse_power(RateExpr& e) {
    parse_atom(e);
    if (cur_.kind == Token::Caret) {
      advance();
      parse_unary(e);  // right-associative, exponent may carry a sign
      push(e, {RateExpr::Op::Pow}, -1);
    }
  }

  void parse_atom(RateExpr& e) {
    if (cur_.kind == Token::Number) {
      push(e, {RateExpr::Op::Num, cur_.value}, +1);
      advance();
      return;
    }
    if (cur_.kind == Token::LParen) {
      advance();
      parse_expr(e);
      expect_rparen();
      return;
    }
    if (cur_.kind == Token::Ident) {
      std::string name = cur_.text;
      size_t pos = cur_.pos;
      advance();
      if (name == "x") { e.uses_[0] = true; push(e, {RateExpr::Op::PushX}, +1); return; }
      if (name == "a") { e.uses_[1] = true; push(e, {RateExpr::Op::PushA}, +1); return; }
      if (name == "t") { e.uses_[2] = true; push(e, {RateExpr::Op::PushT}, +1); return; }
      if (name == "pi") { push(e, {RateExpr::Op::Num, kPi}, +1); return; }

      RateExpr::Op op;
      int arity;
      if (name == "sin") { op = RateExpr::Op::Sin; arity = 1; }
      else if (name == "cos") { op = RateExpr::Op::Cos; arity = 1; }
      else if (name == "exp") { op = RateExpr::Op::Exp; arity = 1; }
      else if (name == "sqrt") { op = RateExpr::Op::Sqrt; arity = 1; }
      else if (name == "abs") { op = RateExpr::Op::Abs; arity = 1; }
      else if (name == "min") { op = RateExpr::Op::Min; arity = 2; }
      else if (name == "max") { op = RateExpr::Op::Max; arity = 2; }
      else
        throw ConfigError(strfmt("unknown identifier '%s' at offset %zu", name.c_str(), pos));

      if (cur_.kind != Token::LParen)
        throw ConfigError(strfmt("syntax error at offset %zu: expected '(' after '%s'",
                                 cur_.pos, name.c_str()));
      advance();
      parse_expr(e);
      if (arity == 2) {
        if (cur_.kind != Token::Comma)
          throw ConfigError(strfmt("arity mismatch at offset %zu: '%s' takes 2 arguments",
                                   cur_.pos, name.c_str()));
        advance();
        parse_expr(e);
      } else if (cur_.kind == Token::Comma) {
        throw ConfigError(strfmt("arity mismatch at offset %zu: '%s' takes 1 argument",
                                 cur_.pos, name.c_str()));
      }
      expect_rparen();
      push(e, {op}, arity == 2 ? -1 : 0);
      return;
    }
    throw ConfigError(strfmt("syntax error at offset %zu: expected a value", cur_.pos));
  }

  void expect_rparen() {
    if (cur_.kind != Token::RParen)
      throw ConfigError(strfmt("syntax error at offset %zu: expected ')'", cur_.pos));
    advance();
  }
};

RateExpr RateExpr::parse(const std::string& src) {
  if (src.empty()) throw ConfigError("empty expression");
  ExprParser p(src);
  return p.run(src);
}

double RateExpr::eval(double x, double a, double t) const {
  double local[64];
  std::vector<double> heap;
  double* st = local;
  if (max_stack_ > 64) {
    heap.resize(static_cast<size_t>(max_stack_));
    st = heap.data();
  }
  int top = -1;
  auto fault = [&](const char* what) {
    throw NumericError(strfmt("%s while evaluating '%s' at x=%.17g, a=%.17g, t=%.17g",
                              what, src_.c_str(), x, a, t));
  };
  for (const Instr& ins : prog_) {
    switch (ins.op) {
      case Op::Num: st[++top] = ins.value; break;
      case Op::PushX: st[++top] = x; break;
      case Op::PushA: st[++top] = a; break;
      case Op::PushT: st[++top] = t; break;
      case Op::Add: st[top - 1] += st[top]; --top; break;
      case Op::Sub: st[top - 1] -= st[top]; --top; break;
      case Op::Mul: st[top - 1] *= st[top]; --top; break;
      case Op::Div:
        if (st[top] == 0.0) fault("division by zero");
        st[top - 1] /= st[top];
        --top;
        break;
      case Op::Pow: {
        double b = st[top - 1], p = st[top];
        double r = std::pow(b, p);
        if (!std::isfinite(r)) fault("invalid power");
        --top;
        st[top] = r;
        break;
      }
      case Op::Neg: st[top] = -st[top]; break;
      case Op::Sin: st[top] = std::sin(st[top]); break;
      case Op::Cos: st[top] = std::cos(st[top]); break;
      case Op::Exp: st[top] = std::exp(st[top]); break;
      case Op::Sqrt:
        if (st[top] < 0.0) fault("sqrt of negative argument");
        st[top] = std::sqrt(st[top]);
        break;
      case Op::Abs: st[top] = std::abs(st[top]); break;
      case Op::Min: st[top - 1] = std::min(st[top - 1], st[top]); --top; break;
      case Op::Max: st[top - 1] = std::max(st[top - 1], st[top]); --top; break;
    }
  }
  double r = st[0];
  if (!std::isfinite(r)) fault("non-finite result");
  return r;
}

std::string RateExpr::print() const {
  // Rebuild an expression string from the postfix program with full
  // parentheses; reparsing gives the same program back.
  std::vector<std::string> st;
  for (const Instr& ins : prog_) {
    switch (ins.op) {
      case Op::Num: st.push_back(fmt_g17(ins.value)); break;
      case Op::PushX: st.push_back("x"); break;
      case Op::PushA: st.push_back("a"); break;
      case Op::PushT: st.push_back("t"); break;
      case Op::Add:
      case Op::Sub:
      case Op::Mul:
      case Op::Div:
      case Op::Pow: {
        const char* sym = ins.op == Op::Add   ? "+"
                          : ins.op == Op::Sub ? "-"
                          : ins.op == Op::Mul ? "*"
                          : ins.op == Op::Div ? "/"
                                              : "^";
        std::string rhs = st.back(); st.pop_back();
        std::string lhs = st.back(); st.pop_back();
        st.push_back("(" + lhs + sym + rhs + ")");
        break;
      }
      case Op::Neg: {
        std::string v = st.back(); st.pop_back();
        st.push_back("(-" + v + ")");
        break;
      }
      case Op::Sin:
      case Op::Cos:
      case Op::Exp:
      case Op::Sqrt:
      case Op::Abs: {
        const char* name = ins.op == Op::Sin    ? "sin"
                           : ins.op == Op::Cos  ? "cos"
                           : ins.op == Op::Exp  ? "exp"
                           : ins.op == Op::Sqrt ? "sqrt"
                                                : "abs";
        std::string v = st.back(); st.pop_back();
        st.push_back(std::string(name) + "(" + v + ")");
        break;
      }
      case Op::Min:
      case Op::Max: {
        std::string rhs = st.back(); st.pop_back();
        std::string lhs = st.back(); st.pop_back();
        st.push_back(std::string(ins.op == Op::Min ? "min" : "max") + "(" + lhs + "," + rhs + ")");
        break;
      }
    }
  }
  return st.back();
}

}  // namespace bondflow
