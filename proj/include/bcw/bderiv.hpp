#pragma once

#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bcw/expr.hpp"
#include "bcw/model.hpp"

namespace bcw {

namespace detail {

inline ExprPtr deriv_core(const ExprPtr& e, int i, bool bmode);

// Derivatives of shared subtrees are cached so that derivative towers stay
// compact as directed acyclic graphs; the cached source pointer is pinned by
// the table entry, which keeps the address-based key valid.
struct DerivKey {
  const Expr* e;
  int i;
  bool bmode;
  bool operator==(const DerivKey&) const = default;
};
struct DerivKeyHash {
  std::size_t operator()(const DerivKey& k) const {
    auto h = reinterpret_cast<std::uintptr_t>(k.e);
    return static_cast<std::size_t>((h ^ (h >> 9)) * 31u) + static_cast<std::size_t>(k.i) * 2u +
           (k.bmode ? 1u : 0u);
  }
};

inline ExprPtr deriv_impl(const ExprPtr& e, int i, bool bmode) {
  if (!depends_on(e, i)) return num(0);
  if (e->size <= 16) return deriv_core(e, i, bmode);
  thread_local std::unordered_map<DerivKey, std::pair<ExprPtr, ExprPtr>, DerivKeyHash> cache;
  DerivKey key{e.get(), i, bmode};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second.second;
  ExprPtr r = deriv_core(e, i, bmode);
  if (cache.size() > 200000) cache.clear();
  cache.emplace(key, std::make_pair(e, r));
  return r;
}

// One recursion serves both derivative flavors.  With bmode set the operator
// is x_i d/dx_i (whose closed-form action never introduces negative
// coordinate powers on the listed leaves); otherwise it is plain d/dx_i.
inline ExprPtr deriv_core(const ExprPtr& e, int i, bool bmode) {
  switch (e->kind) {
    case Kind::Num:
      return num(0);
    case Kind::Var:
      return bmode ? var(i) : num(1);
    case Kind::PowVar:
      if (bmode) return mul(num(e->value), e);
      return mul(num(e->value), pow_var(i, e->value - Rational(1)));
    case Kind::LogVar:
      return bmode ? num(1) : pow_var(i, Rational(-1));
    case Kind::LogNegLog:
      // x d/dx log(-log x) = 1/log x
      if (bmode) return ipow(log_var(i), -1);
      return mul(pow_var(i, Rational(-1)), ipow(log_var(i), -1));
    case Kind::Add: {
      std::vector<ExprPtr> parts;
      for (const auto& k : e->kids)
        if (depends_on(k, i)) parts.push_back(deriv_impl(k, i, bmode));
      return add(std::move(parts));
    }
    case Kind::Mul: {
      std::vector<ExprPtr> parts;
      for (std::size_t j = 0; j < e->kids.size(); ++j) {
        if (!depends_on(e->kids[j], i)) continue;
        std::vector<ExprPtr> fac;
        for (std::size_t l = 0; l < e->kids.size(); ++l)
          fac.push_back(l == j ? deriv_impl(e->kids[j], i, bmode) : e->kids[l]);
        parts.push_back(mul(std::move(fac)));
      }
      return add(std::move(parts));
    }
    case Kind::Div: {
      const auto& v = e->kids[1];
      auto du = deriv_impl(e->kids[0], i, bmode);
      auto dv = deriv_impl(v, i, bmode);
      // (u/v)' = (u' - (u/v) v')/v; unlike the textbook form this keeps the
      // accumulated denominator power linear in the derivative order.
      return div(sub(std::move(du), mul(e, std::move(dv))), v, e->nonvanishing);
    }
    case Kind::IPow: {
      auto db = deriv_impl(e->kids[0], i, bmode);
      return mul({num(e->ipexp), ipow(e->kids[0], e->ipexp - 1), std::move(db)});
    }
    case Kind::RPow: {
      auto db = deriv_impl(e->kids[0], i, bmode);
      return mul({num(e->value), rpow(e->kids[0], e->value - Rational(1), e->nonvanishing),
                  std::move(db)});
    }
    case Kind::Exp:
      return mul(e, deriv_impl(e->kids[0], i, bmode));
    case Kind::Sin:
      return mul(cos_(e->kids[0]), deriv_impl(e->kids[0], i, bmode));
    case Kind::Cos:
      return neg(mul(sin_(e->kids[0]), deriv_impl(e->kids[0], i, bmode)));
  }
  throw UnsupportedNode("unknown node kind in derivative");
}

}  // namespace detail

// Ordinary partial derivative d/dx_i.
inline ExprPtr d_ordinary(const ExprPtr& e, int i) { return detail::deriv_impl(e, i, false); }

// b-derivative along x_i: x_i d/dx_i at a boundary coordinate, d/dx_i at an
// interior one.
inline ExprPtr b_derivative(const ExprPtr& e, int i, bool boundary) {
  return detail::deriv_impl(e, i, boundary);
}
inline ExprPtr b_derivative(const ExprPtr& e, int i, const LocalModel& model) {
  return detail::deriv_impl(e, i, model.is_boundary(i));
}

// Iterated b-derivative along a word of coordinate indices, applied left to
// right.
inline ExprPtr b_word(const ExprPtr& e, const std::vector<int>& word, const LocalModel& model) {
  ExprPtr r = e;
  for (int i : word) r = b_derivative(r, i, model);
  return r;
}

}  // namespace bcw
