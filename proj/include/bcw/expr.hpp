#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "bcw/errors.hpp"
#include "bcw/rational.hpp"

namespace bcw {

// Expression trees over local-model coordinates x1..xm.  Nodes are immutable
// and shared; every structural helper returns a fresh ExprPtr.  The node set
// is deliberately small and closed under the derivative operators used
// elsewhere in the library.
enum class Kind {
  Num,        // rational constant
  Var,        // coordinate x_i
  PowVar,     // x_i^q, q rational (x_i >= 0 understood)
  LogVar,     // log x_i
  LogNegLog,  // log(-log x_i), defined for 0 < x_i < 1
  Add,        // n-ary sum
  Mul,        // n-ary product
  Div,        // quotient u/v with v declared nonvanishing
  IPow,       // e^n, integer n (negative allowed when e nonzero)
  RPow,       // e^q, rational q, base declared positive
  Exp,
  Sin,
  Cos,
};

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

struct Expr {
  Kind kind;
  Rational value{};          // Num payload, or PowVar/RPow exponent
  int var = 0;               // 1-based index for Var/PowVar/LogVar/LogNegLog
  long ipexp = 0;            // IPow exponent
  bool nonvanishing = true;  // Div denominator / RPow base positivity claim
  std::vector<ExprPtr> kids;
  std::uint64_t deps = 0;   // bit i-1 set when the tree mentions x_i
  std::uint32_t size = 1;   // unfolded node count, saturating; shared subtrees
                            // make this much larger than the DAG size

  Expr(Kind k) : kind(k) {}
};

namespace detail {
inline std::uint64_t var_bit(int i) {
  if (i < 1 || i > 64) throw DomainError("variable index out of range: " + std::to_string(i));
  return std::uint64_t{1} << (i - 1);
}
inline std::uint64_t kids_deps(const std::vector<ExprPtr>& kids) {
  std::uint64_t d = 0;
  for (const auto& k : kids) d |= k->deps;
  return d;
}
inline std::uint32_t kids_size(const std::vector<ExprPtr>& kids) {
  std::uint64_t s = 1;
  for (const auto& k : kids) s += k->size;
  return s > 0xffffffffull ? 0xffffffffu : static_cast<std::uint32_t>(s);
}
}  // namespace detail

inline ExprPtr num(const Rational& r) {
  auto e = std::make_shared<Expr>(Kind::Num);
  e->value = r;
  return e;
}
inline ExprPtr num(long long n) { return num(Rational(n)); }

inline ExprPtr var(int i) {
  auto e = std::make_shared<Expr>(Kind::Var);
  e->var = i;
  e->deps = detail::var_bit(i);
  return e;
}

inline ExprPtr pow_var(int i, const Rational& q) {
  if (q.is_zero()) return num(1);
  if (q == Rational(1)) return var(i);
  auto e = std::make_shared<Expr>(Kind::PowVar);
  e->var = i;
  e->value = q;
  e->deps = detail::var_bit(i);
  return e;
}

inline ExprPtr log_var(int i) {
  auto e = std::make_shared<Expr>(Kind::LogVar);
  e->var = i;
  e->deps = detail::var_bit(i);
  return e;
}

inline ExprPtr log_neg_log(int i) {
  auto e = std::make_shared<Expr>(Kind::LogNegLog);
  e->var = i;
  e->deps = detail::var_bit(i);
  return e;
}

inline bool is_num(const ExprPtr& e) { return e->kind == Kind::Num; }
inline bool is_num(const ExprPtr& e, const Rational& r) {
  return e->kind == Kind::Num && e->value == r;
}

// n-ary sum.  Numeric children are folded into a single trailing constant and
// nested sums are spliced; an empty sum is 0.
inline ExprPtr add(std::vector<ExprPtr> kids) {
  std::vector<ExprPtr> out;
  Rational c(0);
  for (auto& k : kids) {
    if (k->kind == Kind::Add) {
      for (const auto& g : k->kids) {
        if (g->kind == Kind::Num)
          c += g->value;
        else
          out.push_back(g);
      }
    } else if (k->kind == Kind::Num) {
      c += k->value;
    } else {
      out.push_back(std::move(k));
    }
  }
  if (!c.is_zero() || out.empty()) out.push_back(num(c));
  if (out.size() == 1) return out[0];
  auto e = std::make_shared<Expr>(Kind::Add);
  e->kids = std::move(out);
  e->deps = detail::kids_deps(e->kids);
  e->size = detail::kids_size(e->kids);
  return e;
}
inline ExprPtr add(ExprPtr a, ExprPtr b) { return add(std::vector<ExprPtr>{std::move(a), std::move(b)}); }

// n-ary product.  Numeric children fold into a single leading coefficient,
// nested products are spliced, and a zero coefficient collapses the product.
inline ExprPtr mul(std::vector<ExprPtr> kids) {
  std::vector<ExprPtr> out;
  Rational c(1);
  for (auto& k : kids) {
    if (k->kind == Kind::Mul) {
      for (const auto& g : k->kids) {
        if (g->kind == Kind::Num)
          c *= g->value;
        else
          out.push_back(g);
      }
    } else if (k->kind == Kind::Num) {
      c *= k->value;
    } else {
      out.push_back(std::move(k));
    }
  }
  if (c.is_zero()) return num(0);
  if (!(c == Rational(1)) || out.empty()) out.insert(out.begin(), num(c));
  if (out.size() == 1) return out[0];
  auto e = std::make_shared<Expr>(Kind::Mul);
  e->kids = std::move(out);
  e->deps = detail::kids_deps(e->kids);
  e->size = detail::kids_size(e->kids);
  return e;
}
inline ExprPtr mul(ExprPtr a, ExprPtr b) { return mul(std::vector<ExprPtr>{std::move(a), std::move(b)}); }

inline ExprPtr neg(ExprPtr a) { return mul(num(-1), std::move(a)); }
inline ExprPtr sub(ExprPtr a, ExprPtr b) { return add(std::move(a), neg(std::move(b))); }

inline ExprPtr div(ExprPtr u, ExprPtr v, bool nonvanishing = true) {
  if (v->kind == Kind::Num) {
    if (v->value.is_zero()) throw DomainError("division by the zero constant");
    return mul(num(Rational(1) / v->value), std::move(u));
  }
  if (is_num(u, Rational(0))) return num(0);
  auto e = std::make_shared<Expr>(Kind::Div);
  e->nonvanishing = nonvanishing;
  e->kids = {std::move(u), std::move(v)};
  e->deps = detail::kids_deps(e->kids);
  e->size = detail::kids_size(e->kids);
  return e;
}

inline ExprPtr ipow(ExprPtr b, long n) {
  if (n == 0) return num(1);
  if (n == 1) return b;
  if (b->kind == Kind::Num) {
    if (b->value.is_zero() && n < 0) throw DomainError("0 raised to a negative power");
    return num(b->value.pow(static_cast<int>(n)));
  }
  if (b->kind == Kind::Var) return pow_var(b->var, Rational(n));
  if (b->kind == Kind::PowVar) return pow_var(b->var, b->value * Rational(n));
  if (b->kind == Kind::IPow) {
    long inner = b->ipexp;
    return ipow(b->kids[0], inner * n);
  }
  auto e = std::make_shared<Expr>(Kind::IPow);
  e->ipexp = n;
  e->kids = {std::move(b)};
  e->deps = e->kids[0]->deps;
  e->size = detail::kids_size(e->kids);
  return e;
}

inline ExprPtr rpow(ExprPtr b, const Rational& q, bool positive = true) {
  if (q.is_zero()) return num(1);
  if (q.is_integer()) return ipow(std::move(b), q.num());
  if (b->kind == Kind::Var) return pow_var(b->var, q);
  if (b->kind == Kind::PowVar) return pow_var(b->var, b->value * q);
  auto e = std::make_shared<Expr>(Kind::RPow);
  e->value = q;
  e->nonvanishing = positive;
  e->kids = {std::move(b)};
  e->deps = e->kids[0]->deps;
  e->size = detail::kids_size(e->kids);
  return e;
}

inline ExprPtr exp_(ExprPtr a) {
  if (is_num(a, Rational(0))) return num(1);
  auto e = std::make_shared<Expr>(Kind::Exp);
  e->kids = {std::move(a)};
  e->deps = e->kids[0]->deps;
  e->size = detail::kids_size(e->kids);
  return e;
}
inline ExprPtr sin_(ExprPtr a) {
  if (is_num(a, Rational(0))) return num(0);
  auto e = std::make_shared<Expr>(Kind::Sin);
  e->kids = {std::move(a)};
  e->deps = e->kids[0]->deps;
  e->size = detail::kids_size(e->kids);
  return e;
}
inline ExprPtr cos_(ExprPtr a) {
  if (is_num(a, Rational(0))) return num(1);
  auto e = std::make_shared<Expr>(Kind::Cos);
  e->kids = {std::move(a)};
  e->deps = e->kids[0]->deps;
  e->size = detail::kids_size(e->kids);
  return e;
}

inline bool equal(const ExprPtr& a, const ExprPtr& b) {
  if (a.get() == b.get()) return true;
  if (a->kind != b->kind || a->var != b->var || a->ipexp != b->ipexp ||
      !(a->value == b->value) || a->kids.size() != b->kids.size())
    return false;
  for (std::size_t i = 0; i < a->kids.size(); ++i)
    if (!equal(a->kids[i], b->kids[i])) return false;
  return true;
}

inline int max_var(const ExprPtr& e) {
  std::uint64_t d = e->deps;
  int m = 0;
  while (d) {
    ++m;
    d >>= 1;
  }
  return m;
}
inline bool depends_on(const ExprPtr& e, int i) { return (e->deps >> (i - 1)) & 1; }

// ------------------------------------------------------------------
// Numeric evaluation at a point of the open local model (all boundary
// coordinates strictly positive).  Boundary values are handled separately by
// the asymptotic engine; here any out-of-domain leaf throws DomainError.
// Large expressions are evaluated with per-node memoization: derivative
// towers share subtrees heavily, and a plain recursion would revisit them
// exponentially often.

namespace detail {

inline double eval_node(const Expr* e, const std::vector<double>& x,
                        std::unordered_map<const Expr*, double>* memo) {
  if (memo) {
    auto it = memo->find(e);
    if (it != memo->end()) return it->second;
  }
  auto coord = [&](int i) -> double {
    if (i < 1 || static_cast<std::size_t>(i) > x.size())
      throw DomainError("evaluation point has no coordinate x" + std::to_string(i));
    return x[static_cast<std::size_t>(i) - 1];
  };
  auto kid = [&](const ExprPtr& k) { return eval_node(k.get(), x, memo); };
  double r = 0;
  switch (e->kind) {
    case Kind::Num:
      r = e->value.to_double();
      break;
    case Kind::Var:
      r = coord(e->var);
      break;
    case Kind::PowVar: {
      double v = coord(e->var);
      if (v < 0) throw DomainError("negative base for fractional power");
      if (v == 0) {
        if (!e->value.is_positive()) throw DomainError("x^q at x=0 with q<=0");
        r = 0.0;
        break;
      }
      r = std::pow(v, e->value.to_double());
      break;
    }
    case Kind::LogVar: {
      double v = coord(e->var);
      if (v <= 0) throw DomainError("log of a non-positive value");
      r = std::log(v);
      break;
    }
    case Kind::LogNegLog: {
      double v = coord(e->var);
      if (v <= 0 || v >= 1) throw DomainError("log(-log x) requires 0<x<1");
      r = std::log(-std::log(v));
      break;
    }
    case Kind::Add:
      for (const auto& k : e->kids) r += kid(k);
      break;
    case Kind::Mul:
      r = 1;
      for (const auto& k : e->kids) r *= kid(k);
      break;
    case Kind::Div: {
      double d = kid(e->kids[1]);
      if (d == 0) throw DomainError("division by zero at sample point");
      r = kid(e->kids[0]) / d;
      break;
    }
    case Kind::IPow: {
      double b = kid(e->kids[0]);
      if (b == 0 && e->ipexp < 0) throw DomainError("zero base with negative power");
      r = std::pow(b, static_cast<double>(e->ipexp));
      break;
    }
    case Kind::RPow: {
      double b = kid(e->kids[0]);
      if (b < 0) throw DomainError("negative base for fractional power");
      if (b == 0) {
        if (!e->value.is_positive())
          throw DomainError("zero base with non-positive fractional power");
        r = 0.0;
        break;
      }
      r = std::pow(b, e->value.to_double());
      break;
    }
    case Kind::Exp:
      r = std::exp(kid(e->kids[0]));
      break;
    case Kind::Sin:
      r = std::sin(kid(e->kids[0]));
      break;
    case Kind::Cos:
      r = std::cos(kid(e->kids[0]));
      break;
  }
  if (memo) memo->emplace(e, r);
  return r;
}

}  // namespace detail

inline double eval(const ExprPtr& e, const std::vector<double>& x) {
  if (e->size <= 256) return detail::eval_node(e.get(), x, nullptr);
  std::unordered_map<const Expr*, double> memo;
  memo.reserve(512);
  return detail::eval_node(e.get(), x, &memo);
}

// ------------------------------------------------------------------
// Substitution x_i -> subs[i-1].  Entries may be null to keep a variable.
// Logarithm leaves only accept plain variables or variable powers, which is
// all the monomial map compositions in this library require.
inline ExprPtr substitute(const ExprPtr& e, const std::vector<ExprPtr>& subs) {
  auto lookup = [&](int i) -> ExprPtr {
    if (i >= 1 && static_cast<std::size_t>(i) <= subs.size() && subs[i - 1]) return subs[i - 1];
    return nullptr;
  };
  switch (e->kind) {
    case Kind::Num:
      return e;
    case Kind::Var: {
      auto s = lookup(e->var);
      return s ? s : e;
    }
    case Kind::PowVar: {
      auto s = lookup(e->var);
      if (!s) return e;
      return rpow(s, e->value);
    }
    case Kind::LogVar: {
      auto s = lookup(e->var);
      if (!s) return e;
      if (s->kind == Kind::Var) return log_var(s->var);
      if (s->kind == Kind::PowVar) return mul(num(s->value), log_var(s->var));
      throw UnsupportedNode("cannot substitute a non-monomial into log");
    }
    case Kind::LogNegLog: {
      auto s = lookup(e->var);
      if (!s) return e;
      if (s->kind == Kind::Var) return log_neg_log(s->var);
      throw UnsupportedNode("cannot substitute a non-variable into loglog");
    }
    default: {
      std::vector<ExprPtr> ks;
      ks.reserve(e->kids.size());
      bool changed = false;
      for (const auto& k : e->kids) {
        auto nk = substitute(k, subs);
        changed = changed || nk.get() != k.get();
        ks.push_back(std::move(nk));
      }
      if (!changed) return e;
      switch (e->kind) {
        case Kind::Add:
          return add(std::move(ks));
        case Kind::Mul:
          return mul(std::move(ks));
        case Kind::Div:
          return div(std::move(ks[0]), std::move(ks[1]), e->nonvanishing);
        case Kind::IPow:
          return ipow(std::move(ks[0]), e->ipexp);
        case Kind::RPow:
          return rpow(std::move(ks[0]), e->value, e->nonvanishing);
        case Kind::Exp:
          return exp_(std::move(ks[0]));
        case Kind::Sin:
          return sin_(std::move(ks[0]));
        case Kind::Cos:
          return cos_(std::move(ks[0]));
        default:
          throw UnsupportedNode("unexpected node in substitute");
      }
    }
  }
}

// ------------------------------------------------------------------
// Prefix s-expression serialization.  Variables print as x1, x2, ...; the
// parser additionally accepts the aliases x, y, z, w for x1..x4.  The
// builders above normalize as they construct, so print-then-parse returns a
// structurally equal tree.

inline void print_to(const ExprPtr& e, std::ostream& os) {
  auto vname = [](int i) { return "x" + std::to_string(i); };
  switch (e->kind) {
    case Kind::Num:
      os << e->value.str();
      return;
    case Kind::Var:
      os << vname(e->var);
      return;
    case Kind::PowVar:
      os << "(pow " << vname(e->var) << " " << e->value.str() << ")";
      return;
    case Kind::LogVar:
      os << "(log " << vname(e->var) << ")";
      return;
    case Kind::LogNegLog:
      os << "(loglog " << vname(e->var) << ")";
      return;
    case Kind::Add:
    case Kind::Mul: {
      os << (e->kind == Kind::Add ? "(+" : "(*");
      for (const auto& k : e->kids) {
        os << " ";
        print_to(k, os);
      }
      os << ")";
      return;
    }
    case Kind::Div:
      os << "(/ ";
      print_to(e->kids[0], os);
      os << " ";
      print_to(e->kids[1], os);
      os << ")";
      return;
    case Kind::IPow:
      os << "(ipow ";
      print_to(e->kids[0], os);
      os << " " << e->ipexp << ")";
      return;
    case Kind::RPow:
      os << "(rpow ";
      print_to(e->kids[0], os);
      os << " " << e->value.str() << ")";
      return;
    case Kind::Exp:
    case Kind::Sin:
    case Kind::Cos: {
      os << (e->kind == Kind::Exp ? "(exp " : e->kind == Kind::Sin ? "(sin " : "(cos ");
      print_to(e->kids[0], os);
      os << ")";
      return;
    }
  }
  throw UnsupportedNode("unknown node kind in print");
}

inline std::string print(const ExprPtr& e) {
  std::ostringstream os;
  print_to(e, os);
  return os.str();
}

namespace detail {

struct Lexer {
  std::string_view s;
  std::size_t pos = 0;

  std::string next() {
    while (pos < s.size() && std::isspace(static_cast<unsigned char>(s[pos]))) ++pos;
    if (pos >= s.size()) return {};
    char c = s[pos];
    if (c == '(' || c == ')') {
      ++pos;
      return std::string(1, c);
    }
    std::size_t start = pos;
    while (pos < s.size() && !std::isspace(static_cast<unsigned char>(s[pos])) && s[pos] != '(' &&
           s[pos] != ')')
      ++pos;
    return std::string(s.substr(start, pos - start));
  }
};

inline bool token_is_number(const std::string& t) {
  if (t.empty()) return false;
  std::size_t i = (t[0] == '-' || t[0] == '+') ? 1 : 0;
  if (i >= t.size()) return false;
  return std::isdigit(static_cast<unsigned char>(t[i]));
}

inline int token_to_var(const std::string& t) {
  if (t == "x") return 1;
  if (t == "y") return 2;
  if (t == "z") return 3;
  if (t == "w") return 4;
  if (t.size() >= 2 && t[0] == 'x') {
    for (std::size_t i = 1; i < t.size(); ++i)
      if (!std::isdigit(static_cast<unsigned char>(t[i]))) return 0;
    int v = std::stoi(t.substr(1));
    return v >= 1 ? v : 0;
  }
  return 0;
}

inline ExprPtr parse_tokens(Lexer& lx, const std::string& first);

inline ExprPtr parse_next(Lexer& lx) {
  std::string t = lx.next();
  if (t.empty()) throw ParseError("unexpected end of expression");
  return parse_tokens(lx, t);
}

inline int expect_var(Lexer& lx, const char* who) {
  std::string t = lx.next();
  int v = token_to_var(t);
  if (v == 0) throw ParseError(std::string(who) + " expects a coordinate, got '" + t + "'");
  return v;
}

inline Rational expect_number(Lexer& lx, const char* who) {
  std::string t = lx.next();
  if (!token_is_number(t)) throw ParseError(std::string(who) + " expects a rational, got '" + t + "'");
  return Rational::parse(t);
}

inline void expect_close(Lexer& lx, const char* who) {
  std::string t = lx.next();
  if (t != ")") throw ParseError(std::string(who) + ": expected ')', got '" + t + "'");
}

inline ExprPtr parse_tokens(Lexer& lx, const std::string& first) {
  if (first != "(") {
    if (first == ")") throw ParseError("unexpected ')'");
    if (token_is_number(first)) return num(Rational::parse(first));
    int v = token_to_var(first);
    if (v != 0) return var(v);
    throw ParseError("unknown token '" + first + "'");
  }
  std::string head = lx.next();
  if (head.empty()) throw ParseError("unterminated list");
  auto parse_args = [&](std::size_t min_n, std::size_t max_n) {
    std::vector<ExprPtr> args;
    for (;;) {
      std::string t = lx.next();
      if (t.empty()) throw ParseError("unterminated (" + head + " ...)");
      if (t == ")") break;
      args.push_back(parse_tokens(lx, t));
    }
    if (args.size() < min_n || args.size() > max_n)
      throw ParseError("(" + head + " ...) has " + std::to_string(args.size()) + " arguments");
    return args;
  };
  if (head == "+") return add(parse_args(1, 1000000));
  if (head == "*") return mul(parse_args(1, 1000000));
  if (head == "-") {
    auto args = parse_args(1, 2);
    if (args.size() == 1) return neg(args[0]);
    return sub(args[0], args[1]);
  }
  if (head == "/") {
    auto args = parse_args(2, 2);
    return div(args[0], args[1]);
  }
  if (head == "pow") {
    auto base = parse_next(lx);
    Rational q = expect_number(lx, "pow");
    expect_close(lx, "pow");
    return rpow(base, q);  // collapses to PowVar for variable bases
  }
  if (head == "ipow") {
    auto base = parse_next(lx);
    Rational n = expect_number(lx, "ipow");
    if (!n.is_integer()) throw ParseError("ipow exponent must be an integer");
    expect_close(lx, "ipow");
    return ipow(base, n.num());
  }
  if (head == "rpow") {
    auto base = parse_next(lx);
    Rational q = expect_number(lx, "rpow");
    expect_close(lx, "rpow");
    return rpow(base, q);
  }
  if (head == "log") {
    int v = expect_var(lx, "log");
    expect_close(lx, "log");
    return log_var(v);
  }
  if (head == "loglog") {
    int v = expect_var(lx, "loglog");
    expect_close(lx, "loglog");
    return log_neg_log(v);
  }
  if (head == "exp" || head == "sin" || head == "cos") {
    auto a = parse_next(lx);
    expect_close(lx, head.c_str());
    if (head == "exp") return exp_(a);
    if (head == "sin") return sin_(a);
    return cos_(a);
  }
  throw ParseError("unknown operator '" + head + "'");
}

}  // namespace detail

inline ExprPtr parse(std::string_view text) {
  detail::Lexer lx{text};
  std::string t = lx.next();
  if (t.empty()) throw ParseError("empty expression");
  ExprPtr e = detail::parse_tokens(lx, t);
  std::string rest = lx.next();
  if (!rest.empty()) throw ParseError("trailing tokens after expression: '" + rest + "'");
  return e;
}

}  // namespace bcw
