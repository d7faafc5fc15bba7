#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>

namespace stockopt {

/// Arithmetic expression over the variables p1..pN.
///
/// Grammar: + - * / ^ (right associative), unary minus, parentheses, numbers,
/// the constant pi and the functions sin cos exp log sqrt abs min max.
class Expression {
public:
  /// Throws ParseError with the offending position.
  static Expression parse(std::string_view text, int variables);

  double operator()(std::span<const double> p) const;
  const std::string& source() const { return source_; }

  struct Node;

private:
  std::string source_;
  std::shared_ptr<const Node> root_;
};

}  // namespace stockopt
