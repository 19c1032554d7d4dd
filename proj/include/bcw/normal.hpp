#pragma once

#include <cmath>
#include <cstdio>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bcw/expr.hpp"

namespace bcw {

// ---------------------------------------------------------------------------
// Canonical rational-function normal form.
//
// An expression is flattened into a single fraction N/D where N and D are
// sums of terms
//
//     coeff * prod_i x_i^{q_i} * prod_a atom_a^{n_a} * exp(P)
//
// with rational coeff and q_i, integer atom powers n_a, and P another such
// sum (the merged argument of all exponential factors).  Atoms are opaque
// multiplicative generators -- log x_i, log(-log x_i), sin/cos of a
// normalized argument, fractional powers of non-monomial bases -- keyed by a
// deterministic rendering.  Two expressions are symbolically equal exactly
// when their normalized fractions render identically; an expression is
// symbolically zero when its numerator has no terms.
// ---------------------------------------------------------------------------

struct Poly;
using PolyPtr = std::shared_ptr<const Poly>;

struct NTerm {
  std::map<int, Rational> xp;          // coordinate powers x_i^{q}
  std::map<std::string, long> atoms;   // opaque atom powers, nonzero
  PolyPtr exp_arg;                     // argument of a merged exp factor, or null
};

struct Poly {
  // term key -> (term, coefficient); coefficients are never zero
  std::map<std::string, std::pair<NTerm, Rational>> t;
  bool zero() const { return t.empty(); }
};

struct NF {
  Poly num;
  Poly den;  // never zero; leading coefficient normalized to 1
};

struct NormalCtx {
  std::map<std::string, ExprPtr> payload;  // atom key -> expression for rebuilds
  std::size_t max_terms = 50000;
  // Per-call cache of normal forms of large shared subtrees; without it a
  // derivative tower (a DAG with heavy sharing) would be normalized once per
  // path rather than once per node.
  std::map<const Expr*, NF> memo;
};

inline std::string poly_render(const Poly& p);

inline std::string term_key(const NTerm& term) {
  std::string s;
  char buf[64];
  for (const auto& [i, q] : term.xp) {
    std::snprintf(buf, sizeof buf, "p%02d^", i);
    s += buf;
    s += q.str();
    s += "*";
  }
  for (const auto& [k, n] : term.atoms) {
    s += k;
    s += "^";
    s += std::to_string(n);
    s += "*";
  }
  if (term.exp_arg && !term.exp_arg->zero()) {
    s += "E(";
    s += poly_render(*term.exp_arg);
    s += ")*";
  }
  if (s.empty()) return "1";
  s.pop_back();
  return s;
}

inline std::string poly_render(const Poly& p) {
  if (p.t.empty()) return "0";
  std::string s;
  for (const auto& [k, tc] : p.t) {
    s += "(";
    s += tc.second.str();
    s += ")";
    s += k;
    s += "+";
  }
  s.pop_back();
  return s;
}

inline void poly_insert(Poly& p, NTerm term, const Rational& c) {
  if (c.is_zero()) return;
  if (term.exp_arg && term.exp_arg->zero()) term.exp_arg = nullptr;
  std::string k = term_key(term);
  auto it = p.t.find(k);
  if (it == p.t.end()) {
    p.t.emplace(std::move(k), std::make_pair(std::move(term), c));
  } else {
    it->second.second += c;
    if (it->second.second.is_zero()) p.t.erase(it);
  }
}

inline Poly poly_const(const Rational& c) {
  Poly p;
  poly_insert(p, NTerm{}, c);
  return p;
}
inline Poly poly_one() { return poly_const(Rational(1)); }

inline Poly poly_add(const Poly& a, const Poly& b) {
  Poly r = a;
  for (const auto& [k, tc] : b.t) poly_insert(r, tc.first, tc.second);
  return r;
}

inline Poly poly_scale(const Poly& a, const Rational& c) {
  Poly r;
  if (c.is_zero()) return r;
  for (const auto& [k, tc] : a.t) r.t.emplace(k, std::make_pair(tc.first, tc.second * c));
  return r;
}

inline Poly poly_neg(const Poly& a) { return poly_scale(a, Rational(-1)); }

inline NTerm term_mul(const NTerm& a, const NTerm& b) {
  NTerm r = a;
  for (const auto& [i, q] : b.xp) {
    auto [it, fresh] = r.xp.try_emplace(i, q);
    if (!fresh) {
      it->second += q;
      if (it->second.is_zero()) r.xp.erase(it);
    }
  }
  for (const auto& [k, n] : b.atoms) {
    auto [it, fresh] = r.atoms.try_emplace(k, n);
    if (!fresh) {
      it->second += n;
      if (it->second == 0) r.atoms.erase(it);
    }
  }
  if (b.exp_arg) {
    if (!r.exp_arg)
      r.exp_arg = b.exp_arg;
    else
      r.exp_arg = std::make_shared<Poly>(poly_add(*r.exp_arg, *b.exp_arg));
  }
  return r;
}

inline Poly poly_mul(const Poly& a, const Poly& b, const NormalCtx& ctx) {
  if (a.t.size() * b.t.size() > ctx.max_terms)
    throw NormalFormTooLarge("normal form would exceed " + std::to_string(ctx.max_terms) +
                             " terms");
  Poly r;
  for (const auto& [ka, ta] : a.t)
    for (const auto& [kb, tb] : b.t)
      poly_insert(r, term_mul(ta.first, tb.first), ta.second * tb.second);
  if (r.t.size() > ctx.max_terms)
    throw NormalFormTooLarge("normal form exceeded " + std::to_string(ctx.max_terms) + " terms");
  return r;
}

inline Poly poly_pow(const Poly& a, long n, const NormalCtx& ctx) {
  Poly r = poly_one();
  for (long i = 0; i < n; ++i) r = poly_mul(r, a, ctx);
  return r;
}

// Divide numerator and denominator by their common content: the minimal
// power of each coordinate and atom over all terms of both, plus an
// exponential factor shared verbatim by every term.  This is not a full
// polynomial gcd, but it keeps quotients built from monomial-factored data in
// their reduced form.
inline void nf_content_cancel(NF& f) {
  std::map<int, Rational> vmin;
  std::map<std::string, long> amin;
  const Poly* parts[2] = {&f.num, &f.den};
  for (const Poly* p : parts)
    for (const auto& [k, tc] : p->t) {
      for (const auto& [i, q] : tc.first.xp) vmin.emplace(i, q);
      for (const auto& [a, n] : tc.first.atoms) amin.emplace(a, n);
    }
  const PolyPtr* shared_exp = nullptr;
  bool exp_common = true;
  for (const Poly* p : parts)
    for (const auto& [k, tc] : p->t) {
      for (auto& [i, q] : vmin) {
        auto it = tc.first.xp.find(i);
        Rational have = it == tc.first.xp.end() ? Rational(0) : it->second;
        if (have < q) q = have;
      }
      for (auto& [a, n] : amin) {
        auto it = tc.first.atoms.find(a);
        long have = it == tc.first.atoms.end() ? 0 : it->second;
        if (have < n) n = have;
      }
      if (!tc.first.exp_arg || tc.first.exp_arg->zero())
        exp_common = false;
      else if (!shared_exp)
        shared_exp = &tc.first.exp_arg;
      else if (poly_render(**shared_exp) != poly_render(*tc.first.exp_arg))
        exp_common = false;
    }
  // Only strictly positive content cancels; clearing negative powers here
  // would turn denominator-free sums into fractions and defeat the merged
  // exponential representation.
  std::erase_if(vmin, [](const auto& kv) { return !(kv.second > Rational(0)); });
  std::erase_if(amin, [](const auto& kv) { return kv.second <= 0; });
  exp_common = exp_common && shared_exp != nullptr;
  if (vmin.empty() && amin.empty() && !exp_common) return;
  auto strip = [&](const Poly& p) {
    Poly r;
    for (const auto& [k, tc] : p.t) {
      NTerm t = tc.first;
      for (const auto& [i, q] : vmin) {
        auto it = t.xp.find(i);
        Rational have = it == t.xp.end() ? Rational(0) : it->second;
        have -= q;
        if (have.is_zero()) {
          if (it != t.xp.end()) t.xp.erase(it);
        } else {
          t.xp[i] = have;
        }
      }
      for (const auto& [a, n] : amin) {
        auto it = t.atoms.find(a);
        long have = it == t.atoms.end() ? 0 : it->second;
        have -= n;
        if (have == 0) {
          if (it != t.atoms.end()) t.atoms.erase(it);
        } else {
          t.atoms[a] = have;
        }
      }
      if (exp_common) t.exp_arg = nullptr;
      poly_insert(r, std::move(t), tc.second);
    }
    return r;
  };
  Poly n = strip(f.num), d = strip(f.den);
  f.num = std::move(n);
  f.den = std::move(d);
}

inline void nf_canon(NF& f) {
  if (f.den.zero()) throw DomainError("zero denominator in normal form");
  if (f.num.zero()) {
    f.den = poly_one();
    return;
  }
  nf_content_cancel(f);
  const Rational lead = f.den.t.begin()->second.second;
  if (!(lead == Rational(1))) {
    Rational inv = Rational(1) / lead;
    f.num = poly_scale(f.num, inv);
    f.den = poly_scale(f.den, inv);
  }
  if (poly_render(f.num) == poly_render(f.den)) {
    f.num = poly_one();
    f.den = poly_one();
  }
}

inline NF nf_const(const Rational& c) { return NF{poly_const(c), poly_one()}; }

inline NF nf_add(const NF& a, const NF& b, const NormalCtx& ctx) {
  NF r;
  if (poly_render(a.den) == poly_render(b.den)) {
    r.num = poly_add(a.num, b.num);
    r.den = a.den;
  } else {
    r.num = poly_add(poly_mul(a.num, b.den, ctx), poly_mul(b.num, a.den, ctx));
    r.den = poly_mul(a.den, b.den, ctx);
  }
  nf_canon(r);
  return r;
}

inline NF nf_mul(const NF& a, const NF& b, const NormalCtx& ctx) {
  NF r{poly_mul(a.num, b.num, ctx), poly_mul(a.den, b.den, ctx)};
  nf_canon(r);
  return r;
}

inline NF nf_div(const NF& a, const NF& b, const NormalCtx& ctx) {
  if (b.num.zero()) throw DomainError("division by a symbolically zero expression");
  NF r{poly_mul(a.num, b.den, ctx), poly_mul(a.den, b.num, ctx)};
  nf_canon(r);
  return r;
}

inline NF nf_pow(const NF& a, long n, const NormalCtx& ctx) {
  if (n >= 0) {
    NF r{poly_pow(a.num, n, ctx), poly_pow(a.den, n, ctx)};
    nf_canon(r);
    return r;
  }
  if (a.num.zero()) throw DomainError("negative power of a symbolically zero expression");
  NF r{poly_pow(a.den, -n, ctx), poly_pow(a.num, -n, ctx)};
  nf_canon(r);
  return r;
}

namespace detail {

inline std::string atom_log(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "log#%02d", i);
  return buf;
}
inline std::string atom_llog(int i) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "llog#%02d", i);
  return buf;
}

// exact k-th root of a nonnegative integer, if it exists
inline std::optional<long long> iroot(long long x, long long k) {
  if (x < 0) return std::nullopt;
  if (x == 0 || x == 1 || k == 1) return x;
  long long guess = static_cast<long long>(std::llround(std::pow(static_cast<double>(x), 1.0 / static_cast<double>(k))));
  for (long long r = std::max<long long>(0, guess - 2); r <= guess + 2; ++r) {
    __int128 p = 1;
    for (long long i = 0; i < k; ++i) {
      p *= r;
      if (p > static_cast<__int128>(4) * 1000000000000000000LL) break;
    }
    if (p == static_cast<__int128>(x)) return r;
  }
  return std::nullopt;
}

inline std::optional<Rational> rational_pow_exact(const Rational& c, const Rational& q) {
  // c^q with q = p/k; requires exact k-th roots of numerator and denominator
  if (c.is_negative()) return std::nullopt;
  if (c.is_zero()) return q.is_positive() ? std::optional<Rational>(Rational(0)) : std::nullopt;
  auto rn = iroot(c.num(), q.den());
  auto rd = iroot(c.den(), q.den());
  if (!rn || !rd) return std::nullopt;
  Rational root(*rn, *rd);
  return root.pow(static_cast<int>(q.num()));
}

}  // namespace detail

inline NF normal_form(const ExprPtr& e, NormalCtx& ctx);

namespace detail {

inline NF nf_atom(const std::string& key, ExprPtr payload, NormalCtx& ctx) {
  ctx.payload.emplace(key, std::move(payload));
  NTerm t;
  t.atoms[key] = 1;
  Poly p;
  poly_insert(p, std::move(t), Rational(1));
  return NF{std::move(p), poly_one()};
}

// exp(u):  merge rational multiples of log x_i into coordinate powers and
// integer multiples of log(-log x_i) into log powers, keep the rest as the
// exp slot of a single term.
inline NF nf_exp(const NF& u, const ExprPtr& original, NormalCtx& ctx) {
  bool den_trivial = poly_render(u.den) == poly_render(poly_one());
  if (!den_trivial) {
    std::string key = "expfrac@(" + poly_render(u.num) + ")/(" + poly_render(u.den) + ")";
    return nf_atom(key, original, ctx);
  }
  NTerm out;
  Rational sign(1);
  Poly rest;
  for (const auto& [k, tc] : u.num.t) {
    const NTerm& term = tc.first;
    const Rational& c = tc.second;
    if (!term.exp_arg && term.xp.empty() && term.atoms.size() == 1) {
      const auto& [akey, apow] = *term.atoms.begin();
      if (apow == 1 && akey.rfind("log#", 0) == 0) {
        int i = std::stoi(akey.substr(4));
        auto [it, fresh] = out.xp.try_emplace(i, c);
        if (!fresh) it->second += c;
        continue;
      }
      if (apow == 1 && akey.rfind("llog#", 0) == 0 && c.is_integer()) {
        // exp(n log(-log x)) = (-log x)^n = (-1)^n (log x)^n
        int i = std::stoi(akey.substr(5));
        long n = c.num();
        out.atoms[atom_log(i)] += n;
        if (n % 2 != 0) sign = -sign;
        continue;
      }
    }
    poly_insert(rest, term, c);
  }
  for (auto it = out.xp.begin(); it != out.xp.end();) {
    if (it->second.is_zero())
      it = out.xp.erase(it);
    else
      ++it;
  }
  for (auto it = out.atoms.begin(); it != out.atoms.end();) {
    if (it->second == 0)
      it = out.atoms.erase(it);
    else
      ++it;
  }
  if (!rest.zero()) out.exp_arg = std::make_shared<Poly>(std::move(rest));
  Poly p;
  poly_insert(p, std::move(out), sign);
  return NF{std::move(p), poly_one()};
}

inline NF nf_trig(Kind kind, const ExprPtr& arg, NormalCtx& ctx) {
  NF u = normal_form(arg, ctx);
  if (u.num.zero()) return nf_const(kind == Kind::Sin ? Rational(0) : Rational(1));
  bool flip = u.num.t.begin()->second.second.is_negative();
  ExprPtr parg = flip ? neg(arg) : arg;
  if (flip) {
    u.num = poly_neg(u.num);
    nf_canon(u);
  }
  std::string render = "(" + poly_render(u.num) + ")/(" + poly_render(u.den) + ")";
  std::string key = (kind == Kind::Sin ? "sin@" : "cos@") + render;
  NF a = nf_atom(key, kind == Kind::Sin ? sin_(parg) : cos_(parg), ctx);
  if (kind == Kind::Sin && flip) {
    a.num = poly_neg(a.num);
    nf_canon(a);
  }
  return a;
}

// fractional power of a normalized operand; exact for single terms whose
// pieces admit the root, opaque atom otherwise
inline NF nf_rpow(const ExprPtr& base, const Rational& q, const NF& u, NormalCtx& ctx) {
  auto single_root = [&](const Poly& p) -> std::optional<std::pair<NTerm, Rational>> {
    if (p.t.size() != 1) return std::nullopt;
    const auto& [k, tc] = *p.t.begin();
    const NTerm& term = tc.first;
    auto c = rational_pow_exact(tc.second, q);
    if (!c) return std::nullopt;
    NTerm r;
    for (const auto& [i, e] : term.xp) r.xp[i] = e * q;
    for (const auto& [a, n] : term.atoms) {
      Rational scaled = Rational(n) * q;
      if (!scaled.is_integer()) return std::nullopt;
      r.atoms[a] = scaled.num();
    }
    if (term.exp_arg) r.exp_arg = std::make_shared<Poly>(poly_scale(*term.exp_arg, q));
    return std::make_pair(std::move(r), *c);
  };
  auto rn = single_root(u.num);
  auto rd = single_root(u.den);
  if (rn && rd) {
    Poly n, d;
    poly_insert(n, std::move(rn->first), rn->second);
    poly_insert(d, std::move(rd->first), rd->second);
    NF r{std::move(n), std::move(d)};
    nf_canon(r);
    return r;
  }
  std::string key = "rpow@" + q.str() + "@(" + poly_render(u.num) + ")/(" + poly_render(u.den) + ")";
  return nf_atom(key, rpow(base, q), ctx);
}

}  // namespace detail

namespace detail {

inline NF normal_form_core(const ExprPtr& e, NormalCtx& ctx) {
  switch (e->kind) {
    case Kind::Num:
      return nf_const(e->value);
    case Kind::Var:
    case Kind::PowVar: {
      NTerm t;
      t.xp[e->var] = e->kind == Kind::Var ? Rational(1) : e->value;
      Poly p;
      poly_insert(p, std::move(t), Rational(1));
      return NF{std::move(p), poly_one()};
    }
    case Kind::LogVar:
    case Kind::LogNegLog: {
      NTerm t;
      t.atoms[e->kind == Kind::LogVar ? detail::atom_log(e->var) : detail::atom_llog(e->var)] = 1;
      Poly p;
      poly_insert(p, std::move(t), Rational(1));
      if (e->kind == Kind::LogNegLog) ctx.payload.emplace(detail::atom_llog(e->var), e);
      return NF{std::move(p), poly_one()};
    }
    case Kind::Add: {
      NF r = nf_const(Rational(0));
      for (const auto& k : e->kids) r = nf_add(r, normal_form(k, ctx), ctx);
      return r;
    }
    case Kind::Mul: {
      NF r = nf_const(Rational(1));
      for (const auto& k : e->kids) r = nf_mul(r, normal_form(k, ctx), ctx);
      return r;
    }
    case Kind::Div:
      return nf_div(normal_form(e->kids[0], ctx), normal_form(e->kids[1], ctx), ctx);
    case Kind::IPow:
      return nf_pow(normal_form(e->kids[0], ctx), e->ipexp, ctx);
    case Kind::RPow: {
      NF u = normal_form(e->kids[0], ctx);
      if (e->value.is_integer()) return nf_pow(u, e->value.num(), ctx);
      return detail::nf_rpow(e->kids[0], e->value, u, ctx);
    }
    case Kind::Exp:
      return detail::nf_exp(normal_form(e->kids[0], ctx), e, ctx);
    case Kind::Sin:
    case Kind::Cos:
      return detail::nf_trig(e->kind, e->kids[0], ctx);
  }
  throw UnsupportedNode("unknown node kind in normal_form");
}

}  // namespace detail

inline NF normal_form(const ExprPtr& e, NormalCtx& ctx) {
  if (e->size <= 64) return detail::normal_form_core(e, ctx);
  auto it = ctx.memo.find(e.get());
  if (it != ctx.memo.end()) return it->second;
  NF r = detail::normal_form_core(e, ctx);
  ctx.memo.emplace(e.get(), r);
  return r;
}

// ---------------------------------------------------------------------------
// Queries and rebuilds

inline std::string nf_fingerprint(const ExprPtr& e) {
  NormalCtx ctx;
  NF f = normal_form(e, ctx);
  return "(" + poly_render(f.num) + ")/(" + poly_render(f.den) + ")";
}

inline bool symbolically_zero(const ExprPtr& e) {
  NormalCtx ctx;
  return normal_form(e, ctx).num.zero();
}

inline bool symbolically_equal(const ExprPtr& a, const ExprPtr& b) {
  return symbolically_zero(sub(a, b));
}

namespace detail {

inline ExprPtr rebuild_poly(const Poly& p, const NormalCtx& ctx);

inline ExprPtr rebuild_atom(const std::string& key, long n, const NormalCtx& ctx) {
  ExprPtr base;
  if (key.rfind("log#", 0) == 0)
    base = log_var(std::stoi(key.substr(4)));
  else if (key.rfind("llog#", 0) == 0)
    base = log_neg_log(std::stoi(key.substr(5)));
  else {
    auto it = ctx.payload.find(key);
    if (it == ctx.payload.end()) throw Indeterminate("atom payload missing for " + key);
    base = it->second;
  }
  return ipow(base, n);
}

inline ExprPtr rebuild_term(const NTerm& t, const Rational& c, const NormalCtx& ctx) {
  std::vector<ExprPtr> fac;
  fac.push_back(num(c));
  for (const auto& [i, q] : t.xp) fac.push_back(pow_var(i, q));
  for (const auto& [k, n] : t.atoms) fac.push_back(rebuild_atom(k, n, ctx));
  if (t.exp_arg && !t.exp_arg->zero()) fac.push_back(exp_(rebuild_poly(*t.exp_arg, ctx)));
  return mul(std::move(fac));
}

inline ExprPtr rebuild_poly(const Poly& p, const NormalCtx& ctx) {
  if (p.t.empty()) return num(0);
  std::vector<ExprPtr> terms;
  for (const auto& [k, tc] : p.t) terms.push_back(rebuild_term(tc.first, tc.second, ctx));
  return add(std::move(terms));
}

}  // namespace detail

// Rewrite an expression as the canonical fraction built from its normal form.
inline ExprPtr simplify(const ExprPtr& e) {
  NormalCtx ctx;
  NF f = normal_form(e, ctx);
  ExprPtr n = detail::rebuild_poly(f.num, ctx);
  if (poly_render(f.den) == poly_render(poly_one())) return n;
  return div(n, detail::rebuild_poly(f.den, ctx));
}

}  // namespace bcw
