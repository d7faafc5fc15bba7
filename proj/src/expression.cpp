#include "stockopt/expression.hpp"

#include "stockopt/error.hpp"

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <vector>

namespace stockopt {

struct Expression::Node {
  enum Kind { Number, Variable, Neg, Add, Sub, Mul, Div, Pow, Call } kind;
  double value{0.0};
  int var{0};
  std::string fn;
  std::vector<std::shared_ptr<const Node>> args;

  double eval(std::span<const double> p) const {
    switch (kind) {
      case Number: return value;
      case Variable: return p[var];
      case Neg: return -args[0]->eval(p);
      case Add: return args[0]->eval(p) + args[1]->eval(p);
      case Sub: return args[0]->eval(p) - args[1]->eval(p);
      case Mul: return args[0]->eval(p) * args[1]->eval(p);
      case Div: return args[0]->eval(p) / args[1]->eval(p);
      case Pow: return std::pow(args[0]->eval(p), args[1]->eval(p));
      case Call: break;
    }
    const double a = args[0]->eval(p);
    if (fn == "sin") return std::sin(a);
    if (fn == "cos") return std::cos(a);
    if (fn == "exp") return std::exp(a);
    if (fn == "log") return std::log(a);
    if (fn == "sqrt") return std::sqrt(a);
    if (fn == "abs") return std::abs(a);
    const double b = args[1]->eval(p);
    if (fn == "min") return std::min(a, b);
    return std::max(a, b);
  }
};

namespace {

using NodePtr = std::shared_ptr<const Expression::Node>;
using Node = Expression::Node;

class Parser {
public:
  Parser(std::string_view s, int vars) : s_(s), vars_(vars) {}

  NodePtr parse() {
    auto n = expr();
    skip();
    if (pos_ != s_.size()) fail("unexpected '" + std::string(1, s_[pos_]) + "'");
    return n;
  }

private:
  [[noreturn]] void fail(const std::string& why) const {
    throw ParseError("expression '" + std::string(s_) + "' at " + std::to_string(pos_) + ": " + why);
  }
  void skip() {
    while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
  }
  bool eat(char c) {
    skip();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }
  static NodePtr make(Node::Kind k, std::vector<NodePtr> args) {
    auto n = std::make_shared<Node>();
    n->kind = k;
    n->args = std::move(args);
    return n;
  }

  NodePtr expr() {
    auto lhs = term();
    while (true) {
      if (eat('+')) lhs = make(Node::Add, {lhs, term()});
      else if (eat('-')) lhs = make(Node::Sub, {lhs, term()});
      else return lhs;
    }
  }
  NodePtr term() {
    auto lhs = unary();
    while (true) {
      if (eat('*')) lhs = make(Node::Mul, {lhs, unary()});
      else if (eat('/')) lhs = make(Node::Div, {lhs, unary()});
      else return lhs;
    }
  }
  NodePtr unary() {
    if (eat('-')) return make(Node::Neg, {unary()});
    if (eat('+')) return unary();
    return power();
  }
  NodePtr power() {
    auto base = primary();
    if (eat('^')) return make(Node::Pow, {base, unary()});
    return base;
  }
  NodePtr primary() {
    skip();
    if (pos_ >= s_.size()) fail("unexpected end");
    if (eat('(')) {
      auto n = expr();
      if (!eat(')')) fail("expected ')'");
      return n;
    }
    const char c = s_[pos_];
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      const std::string rest(s_.substr(pos_));
      char* end = nullptr;
      const double v = std::strtod(rest.c_str(), &end);
      if (end == rest.c_str()) fail("bad number");
      pos_ += static_cast<std::size_t>(end - rest.c_str());
      auto n = std::make_shared<Node>();
      n->kind = Node::Number;
      n->value = v;
      return n;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      const std::size_t start = pos_;
      while (pos_ < s_.size() && std::isalnum(static_cast<unsigned char>(s_[pos_]))) ++pos_;
      const std::string name(s_.substr(start, pos_ - start));
      if (name == "pi") {
        auto n = std::make_shared<Node>();
        n->kind = Node::Number;
        n->value = std::acos(-1.0);
        return n;
      }
      if (name.size() > 1 && name[0] == 'p' &&
          name.find_first_not_of("0123456789", 1) == std::string::npos) {
        const int idx = std::atoi(name.c_str() + 1);
        if (idx < 1 || idx > vars_) fail("variable " + name + " out of range p1..p" + std::to_string(vars_));
        auto n = std::make_shared<Node>();
        n->kind = Node::Variable;
        n->var = idx - 1;
        return n;
      }
      int arity = 0;
      if (name == "sin" || name == "cos" || name == "exp" || name == "log" || name == "sqrt" || name == "abs") arity = 1;
      if (name == "min" || name == "max") arity = 2;
      if (arity == 0) fail("unknown identifier '" + name + "'");
      if (!eat('(')) fail("expected '(' after " + name);
      std::vector<NodePtr> args{expr()};
      if (arity == 2) {
        if (!eat(',')) fail("expected ',' in " + name);
        args.push_back(expr());
      }
      if (!eat(')')) fail("expected ')' after arguments of " + name);
      auto n = std::make_shared<Node>();
      n->kind = Node::Call;
      n->fn = name;
      n->args = std::move(args);
      return n;
    }
    fail("unexpected '" + std::string(1, c) + "'");
  }

  std::string_view s_;
  int vars_;
  std::size_t pos_{0};
};

}  // namespace

Expression Expression::parse(std::string_view text, int variables) {
  Expression e;
  e.source_ = std::string(text);
  e.root_ = Parser(text, variables).parse();
  return e;
}

double Expression::operator()(std::span<const double> p) const { return root_->eval(p); }

}  // namespace stockopt
