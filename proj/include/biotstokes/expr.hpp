#pragma once

#include <array>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "biotstokes/types.hpp"

namespace bstok {

struct ExprError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Compiled arithmetic expression over the variables x, y, t with the
// constants and functions pi, sin, cos and the operators + - * / and unary
// minus.  Instances are immutable and cheap to copy; evaluation is
// allocation-free.
class Expr {
 public:
  static Expr parse(const std::string& text);

  double operator()(Vec2 x, double t) const;
  ScalarFn fn() const;
  const std::string& text() const { return text_; }

 private:
  Expr() = default;

  enum class Op : int {
    push_const,
    push_x,
    push_y,
    push_t,
    add,
    sub,
    mul,
    div,
    neg,
    sin,
    cos,
  };
  struct Instr {
    Op op;
    double value = 0.0;
  };

  std::shared_ptr<const std::vector<Instr>> program_;
  std::string text_;

  friend class ExprParser;
};

// Splits "(ex, ey)" at the top-level comma and parses both components; a bare
// scalar expression is rejected so vector and scalar slots cannot be mixed up.
std::array<Expr, 2> parse_expr_pair(const std::string& text);

}  // namespace bstok
