#pragma once

#include <cctype>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "chernoff/grid.hpp"

namespace chernoff::expr {

// Total, safe coefficient grammar for configuration files:
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*        division by constants only
//   factor := unary ('^' digit)?                integer powers 0..4
//   unary  := '-' unary | primary
//   primary:= number | x | y | pi | (expr) | sin(expr) | cos(expr) | exp(expr)
// Function arguments must be linear polynomials; polynomial degree is capped
// at 4. No other evaluation happens, so configs cannot smuggle in code.

namespace detail_expr {

struct Node {
    enum class Op { Const, VarX, VarY, Add, Sub, Mul, Div, Neg, Pow, Sin, Cos, Exp };
    Op op = Op::Const;
    double value = 0.0;  // Const payload / Pow exponent
    std::shared_ptr<const Node> a, b;

    // degree: polynomial degree when `polynomial`, else just a bound used for
    // the cap (transcendental factors count as degree 0)
    int degree = 0;
    bool polynomial = true;
    int max_var = 0;  // 0: constant, 1: uses x, 2: uses y
};

using NodePtr = std::shared_ptr<const Node>;

inline double eval(const Node& n, Point p) {
    switch (n.op) {
        case Node::Op::Const: return n.value;
        case Node::Op::VarX: return p[0];
        case Node::Op::VarY: return p[1];
        case Node::Op::Add: return eval(*n.a, p) + eval(*n.b, p);
        case Node::Op::Sub: return eval(*n.a, p) - eval(*n.b, p);
        case Node::Op::Mul: return eval(*n.a, p) * eval(*n.b, p);
        case Node::Op::Div: return eval(*n.a, p) / eval(*n.b, p);
        case Node::Op::Neg: return -eval(*n.a, p);
        case Node::Op::Pow: {
            const double base = eval(*n.a, p);
            double r = 1.0;
            for (int k = 0; k < static_cast<int>(n.value); ++k) r *= base;
            return r;
        }
        case Node::Op::Sin: return std::sin(eval(*n.a, p));
        case Node::Op::Cos: return std::cos(eval(*n.a, p));
        case Node::Op::Exp: return std::exp(eval(*n.a, p));
    }
    return 0.0;
}

class Parser {
  public:
    explicit Parser(const std::string& text) : s_(text) {}

    NodePtr parse() {
        NodePtr e = parse_expr();
        skip_ws();
        if (pos_ != s_.size()) fail("unexpected trailing input");
        return e;
    }

  private:
    [[noreturn]] void fail(const std::string& what) const {
        throw std::invalid_argument("expression error at column " + std::to_string(pos_ + 1) + ": " + what +
                                    " in \"" + s_ + "\"");
    }

    void skip_ws() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
    }
    bool eat(char c) {
        skip_ws();
        if (pos_ < s_.size() && s_[pos_] == c) {
            ++pos_;
            return true;
        }
        return false;
    }
    char peek() {
        skip_ws();
        return pos_ < s_.size() ? s_[pos_] : '\0';
    }

    static NodePtr make(Node n) { return std::make_shared<Node>(std::move(n)); }

    static NodePtr combine(Node::Op op, NodePtr a, NodePtr b) {
        Node n;
        n.op = op;
        n.max_var = std::max(a->max_var, b->max_var);
        switch (op) {
            case Node::Op::Add:
            case Node::Op::Sub:
                n.degree = std::max(a->degree, b->degree);
                n.polynomial = a->polynomial && b->polynomial;
                break;
            case Node::Op::Mul:
                n.degree = a->degree + b->degree;
                n.polynomial = a->polynomial && b->polynomial;
                break;
            case Node::Op::Div:  // the parser only admits constant divisors
                n.degree = a->degree;
                n.polynomial = a->polynomial;
                break;
            default:
                n.degree = a->degree;
                n.polynomial = false;
                break;
        }
        n.a = std::move(a);
        n.b = std::move(b);
        return make(std::move(n));
    }

    NodePtr parse_expr() {
        NodePtr e = parse_term();
        while (true) {
            if (eat('+'))
                e = check_degree(combine(Node::Op::Add, e, parse_term()));
            else if (eat('-'))
                e = check_degree(combine(Node::Op::Sub, e, parse_term()));
            else
                return e;
        }
    }

    NodePtr parse_term() {
        NodePtr e = parse_unary();
        while (true) {
            if (eat('*')) {
                e = check_degree(combine(Node::Op::Mul, e, parse_unary()));
            } else if (eat('/')) {
                NodePtr rhs = parse_unary();
                if (rhs->max_var != 0 || !rhs->polynomial) fail("division is only allowed by constants");
                e = check_degree(combine(Node::Op::Div, e, rhs));
            } else {
                return e;
            }
        }
    }

    // unary minus binds looser than '^', so -x^2 means -(x^2)
    NodePtr parse_unary() {
        if (eat('-')) {
            NodePtr inner = parse_unary();
            Node n;
            n.op = Node::Op::Neg;
            n.a = inner;
            n.degree = inner->degree;
            n.polynomial = inner->polynomial;
            n.max_var = inner->max_var;
            return make(std::move(n));
        }
        return parse_factor();
    }

    NodePtr parse_factor() {
        NodePtr base = parse_primary();
        if (eat('^')) {
            skip_ws();
            if (pos_ >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_]))) fail("expected an integer exponent");
            const int k = s_[pos_++] - '0';
            if (k > 4) fail("powers above 4 are not allowed");
            Node n;
            n.op = Node::Op::Pow;
            n.value = k;
            n.a = base;
            n.degree = base->degree * k;
            n.polynomial = base->polynomial;
            n.max_var = base->max_var;
            return check_degree(make(std::move(n)));
        }
        return base;
    }

    NodePtr parse_primary() {
        skip_ws();
        if (pos_ >= s_.size()) fail("unexpected end of expression");
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
        if (c == '(') {
            ++pos_;
            NodePtr e = parse_expr();
            if (!eat(')')) fail("missing ')'");
            return e;
        }
        if (std::isalpha(static_cast<unsigned char>(c))) return parse_name();
        fail(std::string("unexpected character '") + c + "'");
    }

    NodePtr parse_number() {
        const char* begin = s_.c_str() + pos_;
        char* end = nullptr;
        const double v = std::strtod(begin, &end);
        if (end == begin) fail("malformed number");
        pos_ += static_cast<std::size_t>(end - begin);
        Node n;
        n.op = Node::Op::Const;
        n.value = v;
        return make(std::move(n));
    }

    NodePtr parse_name() {
        std::size_t start = pos_;
        while (pos_ < s_.size() && std::isalpha(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        const std::string name = s_.substr(start, pos_ - start);
        if (name == "x" || name == "y") {
            Node n;
            n.op = name == "x" ? Node::Op::VarX : Node::Op::VarY;
            n.degree = 1;
            n.max_var = name == "x" ? 1 : 2;
            return make(std::move(n));
        }
        if (name == "pi") {
            Node n;
            n.op = Node::Op::Const;
            n.value = chernoff::detail::kPi;
            return make(std::move(n));
        }
        if (name == "sin" || name == "cos" || name == "exp") {
            if (!eat('(')) fail(name + " needs a parenthesized argument");
            NodePtr arg = parse_expr();
            if (!eat(')')) fail("missing ')'");
            // sin/cos take linear arguments; exp admits polynomials (degree
            // <= 4) so Gaussian profiles are expressible
            if (!arg->polynomial) fail(name + " takes a polynomial argument");
            if (name != "exp" && arg->degree > 1) fail(name + " takes a linear argument");
            Node n;
            n.op = name == "sin" ? Node::Op::Sin : (name == "cos" ? Node::Op::Cos : Node::Op::Exp);
            n.a = arg;
            n.polynomial = false;
            n.max_var = arg->max_var;
            return make(std::move(n));
        }
        fail("unknown name '" + name + "'");
    }

    NodePtr check_degree(NodePtr n) {
        if (n->polynomial && n->degree > 4) fail("polynomial degree above 4 is not allowed");
        return n;
    }

    const std::string& s_;
    std::size_t pos_ = 0;
};

}  // namespace detail_expr

/// A parsed coefficient expression; evaluate with operator().
class Expression {
  public:
    Expression() = default;
    explicit Expression(detail_expr::NodePtr root, std::string text) : root_(std::move(root)), text_(std::move(text)) {}

    double operator()(Point p) const { return detail_expr::eval(*root_, p); }
    double operator()(double x) const { return detail_expr::eval(*root_, Point{x, 0.0}); }

    /// 0 if constant, 1 if it uses x, 2 if it uses y as well.
    int max_var() const { return root_ ? root_->max_var : 0; }
    bool valid() const { return root_ != nullptr; }
    const std::string& text() const { return text_; }

  private:
    detail_expr::NodePtr root_;
    std::string text_;
};

inline Expression parse(const std::string& text) {
    detail_expr::Parser p(text);
    return Expression(p.parse(), text);
}

}  // namespace chernoff::expr
