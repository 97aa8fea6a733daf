#include "biotstokes/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>

namespace bstok {

// ============================================================================
// Recursive descent parser
// ============================================================================

class ExprParser {
 public:
  explicit ExprParser(const std::string& text) : text_(text) {}

  std::vector<Expr::Instr> run() {
    expression();
    skip_space();
    if (pos_ != text_.size()) {
      fail("unexpected trailing input");
    }
    if (program_.empty()) {
      fail("empty expression");
    }
    return std::move(program_);
  }

 private:
  using Op = Expr::Op;

  const std::string& text_;
  size_t pos_ = 0;
  std::vector<Expr::Instr> program_;

  [[noreturn]] void fail(const std::string& what) const {
    throw ExprError("expression error at position " + std::to_string(pos_) +
                    " of \"" + text_ + "\": " + what);
  }

  void skip_space() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  bool consume(char c) {
    skip_space();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  void expression() {
    term();
    for (;;) {
      if (consume('+')) {
        term();
        program_.push_back({Op::add});
      } else if (consume('-')) {
        term();
        program_.push_back({Op::sub});
      } else {
        return;
      }
    }
  }

  void term() {
    factor();
    for (;;) {
      if (consume('*')) {
        factor();
        program_.push_back({Op::mul});
      } else if (consume('/')) {
        factor();
        program_.push_back({Op::div});
      } else {
        return;
      }
    }
  }

  void factor() {
    if (consume('-')) {
      factor();
      program_.push_back({Op::neg});
      return;
    }
    primary();
  }

  void primary() {
    skip_space();
    if (pos_ >= text_.size()) {
      fail("expected a value");
    }
    const char c = text_[pos_];
    if (c == '(') {
      ++pos_;
      expression();
      if (!consume(')')) {
        fail("expected ')'");
      }
      return;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      number();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      identifier();
      return;
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  void number() {
    const char* start = text_.c_str() + pos_;
    char* end = nullptr;
    const double value = std::strtod(start, &end);
    if (end == start) {
      fail("malformed number");
    }
    pos_ += static_cast<size_t>(end - start);
    program_.push_back({Op::push_const, value});
  }

  void identifier() {
    const size_t start = pos_;
    while (pos_ < text_.size() &&
           std::isalpha(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
    const std::string name = text_.substr(start, pos_ - start);
    if (name == "x") {
      program_.push_back({Op::push_x});
    } else if (name == "y") {
      program_.push_back({Op::push_y});
    } else if (name == "t") {
      program_.push_back({Op::push_t});
    } else if (name == "pi") {
      program_.push_back({Op::push_const, M_PI});
    } else if (name == "sin" || name == "cos") {
      if (!consume('(')) {
        fail("expected '(' after " + name);
      }
      expression();
      if (!consume(')')) {
        fail("expected ')'");
      }
      program_.push_back({name == "sin" ? Op::sin : Op::cos});
    } else {
      fail("unknown name \"" + name + "\"");
    }
  }
};

// ============================================================================
// Expression object
// ============================================================================

Expr Expr::parse(const std::string& text) {
  Expr e;
  e.program_ = std::make_shared<const std::vector<Instr>>(
      ExprParser(text).run());
  e.text_ = text;
  return e;
}

double Expr::operator()(Vec2 x, double t) const {
  double stack[64];
  int top = 0;
  for (const Instr& instr : *program_) {
    switch (instr.op) {
      case Op::push_const:
        stack[top++] = instr.value;
        break;
      case Op::push_x:
        stack[top++] = x.x;
        break;
      case Op::push_y:
        stack[top++] = x.y;
        break;
      case Op::push_t:
        stack[top++] = t;
        break;
      case Op::add:
        --top;
        stack[top - 1] += stack[top];
        break;
      case Op::sub:
        --top;
        stack[top - 1] -= stack[top];
        break;
      case Op::mul:
        --top;
        stack[top - 1] *= stack[top];
        break;
      case Op::div:
        --top;
        stack[top - 1] /= stack[top];
        break;
      case Op::neg:
        stack[top - 1] = -stack[top - 1];
        break;
      case Op::sin:
        stack[top - 1] = std::sin(stack[top - 1]);
        break;
      case Op::cos:
        stack[top - 1] = std::cos(stack[top - 1]);
        break;
    }
    if (top >= 64) {
      throw ExprError("expression too deep: \"" + text_ + "\"");
    }
  }
  return stack[0];
}

ScalarFn Expr::fn() const {
  Expr copy = *this;
  return [copy](Vec2 x, double t) { return copy(x, t); };
}

std::array<Expr, 2> parse_expr_pair(const std::string& text) {
  size_t begin = 0;
  size_t end = text.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(text[begin]))) {
    ++begin;
  }
  while (end > begin && std::isspace(static_cast<unsigned char>(text[end - 1]))) {
    --end;
  }
  if (begin >= end || text[begin] != '(' || text[end - 1] != ')') {
    throw ExprError("vector value must look like \"(ex, ey)\": \"" + text +
                    "\"");
  }
  const std::string inner = text.substr(begin + 1, end - begin - 2);
  int depth = 0;
  size_t split = std::string::npos;
  for (size_t i = 0; i < inner.size(); ++i) {
    if (inner[i] == '(') {
      ++depth;
    } else if (inner[i] == ')') {
      --depth;
    } else if (inner[i] == ',' && depth == 0) {
      if (split != std::string::npos) {
        throw ExprError("vector value needs exactly two components: \"" +
                        text + "\"");
      }
      split = i;
    }
  }
  if (split == std::string::npos) {
    throw ExprError("vector value needs exactly two components: \"" + text +
                    "\"");
  }
  return {Expr::parse(inner.substr(0, split)),
          Expr::parse(inner.substr(split + 1))};
}

}  // namespace bstok
