#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bcw/bderiv.hpp"
#include "bcw/expr.hpp"
#include "bcw/model.hpp"
#include "bcw/normal.hpp"

namespace bcw {

// ---------------------------------------------------------------------------
// Truncated asymptotic expansions at one boundary face x_i -> 0+.
//
// Terms live on the scale  x^alpha * (log x)^b * (log(-log x))^c  with
// rational alpha and integer b, c.  Coefficients are expressions in the
// remaining coordinates; a coefficient may additionally carry a bounded
// oscillatory factor in x_i itself (sin/cos of an unbounded argument), which
// is recorded in the `osc` flag.  Expressions that leave this scale entirely
// are summarized by the RapidDecay / RapidGrowth tags (faster-than-any-power
// behavior, e.g. exp(-1/x)); anything else raises Indeterminate.
// ---------------------------------------------------------------------------

struct SeriesKey {
  Rational alpha;
  long b = 0;
  long c = 0;
};

// Dominance order as x -> 0+: smaller power first, then higher log power,
// then higher log-log power.
struct SeriesKeyLess {
  bool operator()(const SeriesKey& x, const SeriesKey& y) const {
    if (!(x.alpha == y.alpha)) return x.alpha < y.alpha;
    if (x.b != y.b) return x.b > y.b;
    return x.c > y.c;
  }
};

inline bool operator==(const SeriesKey& a, const SeriesKey& b) {
  return a.alpha == b.alpha && a.b == b.b && a.c == b.c;
}
inline SeriesKey key_add(const SeriesKey& a, const SeriesKey& b) {
  return {a.alpha + b.alpha, a.b + b.b, a.c + b.c};
}
inline SeriesKey key_sub(const SeriesKey& a, const SeriesKey& b) {
  return {a.alpha - b.alpha, a.b - b.b, a.c - b.c};
}
inline bool key_is_zero(const SeriesKey& k) { return k.alpha.is_zero() && k.b == 0 && k.c == 0; }
inline bool key_unbounded(const SeriesKey& k) {
  return SeriesKeyLess{}(k, SeriesKey{Rational(0), 0, 0});
}
inline bool key_vanishes(const SeriesKey& k) {
  return SeriesKeyLess{}(SeriesKey{Rational(0), 0, 0}, k);
}

struct SeriesTerm {
  ExprPtr coeff;
  bool osc = false;
};

using TermMap = std::map<SeriesKey, SeriesTerm, SeriesKeyLess>;

struct FaceSeries {
  enum class Tag { Series, RapidDecay, RapidGrowth } tag = Tag::Series;
  // Series: the expansion itself; empty map = identically 0.
  // Rapid*: polynomial-scale factor multiplying exp(exp_part).
  TermMap terms;
  TermMap exp_part;        // Rapid*: unbounded exponent terms, constant coefficients
  std::string nested_tag;  // Rapid*: set when the exponent escapes the power/log scale

  bool is_zero() const { return tag == Tag::Series && terms.empty(); }
  bool rapid() const { return tag != Tag::Series; }
  static FaceSeries make_rapid(bool growth, TermMap factor, TermMap exponent,
                               std::string nested = {}) {
    FaceSeries s;
    s.tag = growth ? Tag::RapidGrowth : Tag::RapidDecay;
    s.terms = std::move(factor);
    s.exp_part = std::move(exponent);
    s.nested_tag = std::move(nested);
    return s;
  }
};

namespace detail {

// Zero test for accumulated series coefficients.  A few numeric probes
// certify the generic nonzero case cheaply; the exact symbolic test only
// runs when every probe is consistent with zero.  Coefficients whose exact
// normal form cannot be computed (overflow, size limits) are kept.
//
// Probe points are fixed once per process so node values can be cached
// across calls; series coefficients produced by derivative towers share
// subtrees, and re-walking them per test would dominate everything else.
struct ProbeMemo {
  std::vector<double> point;
  std::unordered_map<const Expr*, double> val;
  std::vector<ExprPtr> pins;  // roots pinned so cached addresses stay valid
};

inline double probe_eval(const ExprPtr& e, int trial) {
  thread_local std::vector<ProbeMemo> memos;
  if (memos.empty()) {
    memos.resize(3);
    for (int t = 0; t < 3; ++t) {
      memos[static_cast<std::size_t>(t)].point.resize(64);
      for (int i = 1; i <= 64; ++i) {
        double u = std::fmod(0.618033988749895 * static_cast<double>(i + 3 * t + 1), 1.0);
        memos[static_cast<std::size_t>(t)].point[static_cast<std::size_t>(i - 1)] = 0.32 + 0.6 * u;
      }
    }
  }
  ProbeMemo& m = memos[static_cast<std::size_t>(trial)];
  if (m.val.size() > 2000000) {
    m.val.clear();
    m.pins.clear();
  }
  double v = eval_node(e.get(), m.point, &m.val);
  m.pins.push_back(e);
  return v;
}

inline bool coeff_vanishes(const ExprPtr& e) {
  for (int trial = 0; trial < 3; ++trial) {
    try {
      double v = probe_eval(e, trial);
      if (std::isfinite(v) && std::abs(v) > 1e-8) return false;
    } catch (const std::exception&) {
    }
  }
  try {
    return symbolically_zero(e);
  } catch (const std::exception&) {
    return false;
  }
}

inline void series_insert(TermMap& m, const SeriesKey& k, const SeriesTerm& t, std::size_t cap) {
  auto it = m.find(k);
  if (it == m.end()) {
    if (is_num(t.coeff, Rational(0))) return;
    m.emplace(k, t);
  } else {
    it->second.coeff = add(it->second.coeff, t.coeff);
    it->second.osc = it->second.osc || t.osc;
    if (coeff_vanishes(it->second.coeff)) m.erase(it);
  }
  while (m.size() > cap) m.erase(std::prev(m.end()));
}

inline TermMap series_trunc(TermMap m, std::size_t cap) {
  while (m.size() > cap) m.erase(std::prev(m.end()));
  return m;
}

inline TermMap series_add(const TermMap& a, const TermMap& b, std::size_t cap) {
  TermMap r = a;
  for (const auto& [k, t] : b) series_insert(r, k, t, cap + b.size());
  return series_trunc(std::move(r), cap);
}

inline TermMap series_scale(const TermMap& a, const ExprPtr& c, bool osc, std::size_t cap) {
  TermMap r;
  if (is_num(c, Rational(0))) return r;
  for (const auto& [k, t] : a)
    r.emplace(k, SeriesTerm{mul(c, t.coeff), t.osc || osc});
  return series_trunc(std::move(r), cap);
}

inline TermMap series_shift(const TermMap& a, const SeriesKey& k0, const Rational& c0,
                            std::size_t cap) {
  TermMap r;
  for (const auto& [k, t] : a)
    r.emplace(key_add(k, k0), SeriesTerm{mul(num(c0), t.coeff), t.osc});
  return series_trunc(std::move(r), cap);
}

inline TermMap series_mul(const TermMap& a, const TermMap& b, std::size_t cap) {
  TermMap r;
  for (const auto& [ka, ta] : a)
    for (const auto& [kb, tb] : b)
      series_insert(r, key_add(ka, kb),
                    SeriesTerm{mul(ta.coeff, tb.coeff), ta.osc || tb.osc}, 4 * cap);
  return series_trunc(std::move(r), cap);
}

inline TermMap series_one() {
  TermMap r;
  r.emplace(SeriesKey{Rational(0), 0, 0}, SeriesTerm{num(1), false});
  return r;
}

// 1 / series: factor the dominant term out and expand the geometric series.
inline TermMap series_invert(const TermMap& a, std::size_t cap) {
  if (a.empty()) throw DomainError("inverting a series that vanishes identically");
  const auto& [lk, lt] = *a.begin();
  if (lt.osc)
    throw Indeterminate("cannot invert a series with an oscillatory leading coefficient");
  // w = a / lead - 1 has strictly vanishing keys
  TermMap w;
  for (auto it = std::next(a.begin()); it != a.end(); ++it) {
    SeriesKey k = key_sub(it->first, lk);
    if (!key_vanishes(k))
      throw Indeterminate("series has incomparable terms at its leading order");
    w.emplace(k, SeriesTerm{div(it->second.coeff, lt.coeff, true), it->second.osc});
  }
  TermMap geo = series_one();
  TermMap wn = series_one();
  for (std::size_t n = 1; n <= cap && !w.empty(); ++n) {
    wn = series_mul(wn, w, cap);
    if (wn.empty()) break;
    TermMap signed_wn =
        (n % 2 == 0) ? wn : series_scale(wn, num(-1), false, cap);
    geo = series_add(geo, signed_wn, cap);
  }
  TermMap lead_inv;
  lead_inv.emplace(SeriesKey{Rational(0) - lk.alpha, -lk.b, -lk.c},
                   SeriesTerm{div(num(1), lt.coeff, true), false});
  return series_mul(lead_inv, geo, cap);
}

// (1 + w)^q for a strictly vanishing w, binomial series
inline TermMap series_binomial(const TermMap& w, const Rational& q, std::size_t cap) {
  TermMap r = series_one();
  TermMap wn = series_one();
  Rational coef(1);
  for (std::size_t n = 1; n <= cap && !w.empty(); ++n) {
    wn = series_mul(wn, w, cap);
    if (wn.empty()) break;
    coef = coef * (q - Rational(static_cast<long long>(n) - 1)) / Rational(static_cast<long long>(n));
    if (coef.is_zero()) break;
    r = series_add(r, series_scale(wn, num(coef), false, cap), cap);
  }
  return r;
}

// exp(w) for strictly vanishing w
inline TermMap series_exp_tail(const TermMap& w, std::size_t cap) {
  TermMap r = series_one();
  TermMap wn = series_one();
  Rational fact(1);
  for (std::size_t n = 1; n <= cap && !w.empty(); ++n) {
    wn = series_mul(wn, w, cap);
    if (wn.empty()) break;
    fact = fact * Rational(static_cast<long long>(n));
    r = series_add(r, series_scale(wn, num(Rational(1) / fact), false, cap), cap);
  }
  return r;
}

inline std::pair<TermMap, TermMap> series_sin_cos_tail(const TermMap& w, std::size_t cap) {
  // sin(w), cos(w) for strictly vanishing w
  TermMap s, c = series_one();
  TermMap wn = series_one();
  Rational fact(1);
  for (std::size_t n = 1; n <= cap && !w.empty(); ++n) {
    wn = series_mul(wn, w, cap);
    if (wn.empty()) break;
    fact = fact * Rational(static_cast<long long>(n));
    Rational co = Rational(1) / fact;
    if (n % 4 == 2 || n % 4 == 3) co = -co;
    if (n % 2 == 1)
      s = series_add(s, series_scale(wn, num(co), false, cap), cap);
    else
      c = series_add(c, series_scale(wn, num(co), false, cap), cap);
  }
  return {std::move(s), std::move(c)};
}

}  // namespace detail

inline FaceSeries face_series(const ExprPtr& e, int face, const LocalModel& model,
                              std::size_t cap = 12);

namespace detail {

inline FaceSeries fs_series(TermMap m) {
  FaceSeries s;
  s.terms = std::move(m);
  return s;
}

inline std::string factor_render(const TermMap& m) {
  std::string r;
  for (const auto& [k, t] : m) {
    r += k.alpha.str() + "|" + std::to_string(k.b) + "|" + std::to_string(k.c) + ":";
    r += print(t.coeff);
    if (t.osc) r += "~";
    r += ";";
  }
  return r;
}

inline std::string scale_render(const FaceSeries& s) {
  return s.nested_tag + "#" + factor_render(s.exp_part);
}

// Sign of a dominant exponent term as x -> 0+ (log x is negative there).
inline bool exponent_grows(const TermMap& ep) {
  const auto& [k, t] = *ep.begin();
  bool pos = t.coeff->value.is_positive();
  if (k.b % 2 != 0) pos = !pos;
  return pos;
}

// Compare two rapid scales: +1 when a dominates, -1 when b does, 0 equal.
inline int scale_compare(const FaceSeries& a, const FaceSeries& b) {
  if (!a.nested_tag.empty() || !b.nested_tag.empty()) {
    if (scale_render(a) == scale_render(b)) return 0;
    if (!a.nested_tag.empty() && b.nested_tag.empty())
      return a.tag == FaceSeries::Tag::RapidGrowth ? 1 : -1;
    if (a.nested_tag.empty() && !b.nested_tag.empty())
      return b.tag == FaceSeries::Tag::RapidGrowth ? -1 : 1;
    throw Indeterminate("cannot compare two nested exponential scales");
  }
  TermMap diff = a.exp_part;
  for (const auto& [k, t] : b.exp_part) {
    auto it = diff.find(k);
    if (it == diff.end()) {
      diff.emplace(k, SeriesTerm{num(Rational(0) - t.coeff->value), false});
    } else {
      Rational nc = it->second.coeff->value - t.coeff->value;
      if (nc.is_zero())
        diff.erase(it);
      else
        it->second.coeff = num(nc);
    }
  }
  if (diff.empty()) return 0;
  return exponent_grows(diff) ? 1 : -1;
}

inline FaceSeries fs_add(const FaceSeries& a, const FaceSeries& b, std::size_t cap) {
  using Tag = FaceSeries::Tag;
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  if (a.rapid() && b.rapid()) {
    int c = scale_compare(a, b);
    if (c > 0) return a;
    if (c < 0) return b;
    TermMap f = series_add(a.terms, b.terms, cap);
    if (f.empty()) return fs_series({});
    return FaceSeries::make_rapid(a.tag == Tag::RapidGrowth, std::move(f), a.exp_part,
                                  a.nested_tag);
  }
  if (a.rapid()) return a.tag == Tag::RapidGrowth ? a : b;
  if (b.rapid()) return b.tag == Tag::RapidGrowth ? b : a;
  return fs_series(series_add(a.terms, b.terms, cap));
}

inline FaceSeries fs_mul(const FaceSeries& a, const FaceSeries& b, std::size_t cap) {
  using Tag = FaceSeries::Tag;
  if (a.is_zero() || b.is_zero()) return fs_series({});
  if (!a.rapid() && !b.rapid()) return fs_series(series_mul(a.terms, b.terms, cap));
  if (a.rapid() != b.rapid()) {
    const FaceSeries& r = a.rapid() ? a : b;
    TermMap f = series_mul(a.terms, b.terms, cap);
    if (f.empty()) return fs_series({});
    return FaceSeries::make_rapid(r.tag == Tag::RapidGrowth, std::move(f), r.exp_part,
                                  r.nested_tag);
  }
  if (!a.nested_tag.empty() || !b.nested_tag.empty())
    throw Indeterminate("product of nested exponential scales");
  TermMap ep = a.exp_part;
  for (const auto& [k, t] : b.exp_part) {
    auto it = ep.find(k);
    if (it == ep.end()) {
      ep.emplace(k, t);
    } else {
      Rational nc = it->second.coeff->value + t.coeff->value;
      if (nc.is_zero())
        ep.erase(it);
      else
        it->second.coeff = num(nc);
    }
  }
  TermMap f = series_mul(a.terms, b.terms, cap);
  if (f.empty()) return fs_series({});
  if (ep.empty()) return fs_series(std::move(f));
  bool growth = exponent_grows(ep);
  return FaceSeries::make_rapid(growth, std::move(f), std::move(ep));
}

inline FaceSeries fs_invert(const FaceSeries& a, std::size_t cap) {
  if (!a.rapid()) return fs_series(series_invert(a.terms, cap));
  bool growth = a.tag == FaceSeries::Tag::RapidGrowth;
  TermMap ep;
  for (const auto& [k, t] : a.exp_part)
    ep.emplace(k, SeriesTerm{num(Rational(0) - t.coeff->value), false});
  std::string nested = a.nested_tag.empty() ? std::string{} : "inv(" + a.nested_tag + ")";
  return FaceSeries::make_rapid(!growth, series_invert(a.terms, cap), std::move(ep),
                                std::move(nested));
}

inline FaceSeries fs_ipow(const FaceSeries& a, long n, std::size_t cap) {
  if (n == 0) return fs_series(series_one());
  FaceSeries base = n > 0 ? a : fs_invert(a, cap);
  long absn = n > 0 ? n : -n;
  FaceSeries r = fs_series(series_one());
  for (long i = 0; i < absn; ++i) r = fs_mul(r, base, cap);
  return r;
}

// exp of an expanded argument; handles power/log shifts, genuine exponential
// scales, and rapid arguments
inline FaceSeries fs_exp(const FaceSeries& u, std::size_t cap) {
  using Tag = FaceSeries::Tag;
  if (u.tag == Tag::RapidDecay) return fs_series(series_one());
  if (u.tag == Tag::RapidGrowth) {
    if (u.terms.empty()) throw Indeterminate("exp of a rapid factor with no terms");
    const auto& [fk, ft] = *u.terms.begin();
    if (ft.osc || ft.coeff->kind != Kind::Num)
      throw Indeterminate("exp of a rapidly growing argument of unknown sign");
    bool pos = ft.coeff->value.is_positive();
    if (fk.b % 2 != 0) pos = !pos;
    std::string nested = "exp[" + scale_render(u) + "|" + factor_render(u.terms) + "]";
    return FaceSeries::make_rapid(pos, series_one(), {}, std::move(nested));
  }

  Rational power_shift(0);
  long log_shift = 0;
  Rational sign(1);
  TermMap bounded, ep;
  for (const auto& [k, t] : u.terms) {
    if (!key_unbounded(k)) {
      bounded.emplace(k, t);
      continue;
    }
    bool constant = t.coeff->kind == Kind::Num && !t.osc;
    if (constant && k.alpha.is_zero() && k.b == 1 && k.c == 0) {
      power_shift += t.coeff->value;  // exp(c log x) = x^c
      continue;
    }
    if (constant && k.alpha.is_zero() && k.b == 0 && k.c == 1 && t.coeff->value.is_integer()) {
      // exp(n log(-log x)) = (-log x)^n = (-1)^n (log x)^n
      long n = t.coeff->value.num();
      log_shift += n;
      if (n % 2 != 0) sign = -sign;
      continue;
    }
    if (!constant)
      throw Indeterminate("exp of an unbounded term with non-constant coefficient");
    // genuinely exponential scales: negative powers, or log powers >= 2
    bool exponential = k.alpha.is_negative() ||
                       (k.alpha.is_zero() && (k.b >= 2 || (k.b == 1 && k.c >= 1)));
    if (!exponential)
      throw Indeterminate("exp argument grows between the power and exponential scales");
    ep.emplace(k, t);
  }

  ExprPtr const_factor = num(1);
  bool const_osc = false;
  auto it0 = bounded.find(SeriesKey{Rational(0), 0, 0});
  if (it0 != bounded.end()) {
    const_factor = exp_(it0->second.coeff);
    const_osc = it0->second.osc;
    bounded.erase(it0);
  }
  TermMap tail = series_exp_tail(bounded, cap);
  TermMap scaled = series_scale(tail, const_factor, const_osc, cap);
  TermMap shifted;
  for (const auto& [k, t] : scaled)
    shifted.emplace(SeriesKey{k.alpha + power_shift, k.b + log_shift, k.c},
                    SeriesTerm{mul(num(sign), t.coeff), t.osc});
  if (ep.empty()) return fs_series(std::move(shifted));
  if (shifted.empty()) return fs_series({});
  bool growth = exponent_grows(ep);
  return FaceSeries::make_rapid(growth, std::move(shifted), std::move(ep));
}

inline FaceSeries fs_trig(Kind kind, const FaceSeries& u, const ExprPtr& arg, std::size_t cap) {
  using Tag = FaceSeries::Tag;
  bool unbounded = u.tag == Tag::RapidGrowth;
  if (u.tag == Tag::Series)
    for (const auto& [k, t] : u.terms)
      if (key_unbounded(k)) {
        unbounded = true;
        break;
      }
  if (unbounded) {
    TermMap r;
    ExprPtr c = kind == Kind::Sin ? sin_(arg) : cos_(arg);
    r.emplace(SeriesKey{Rational(0), 0, 0}, SeriesTerm{std::move(c), true});
    return fs_series(std::move(r));
  }
  // sin of a rapidly vanishing argument is that argument to leading order
  if (u.tag == Tag::RapidDecay) return kind == Kind::Sin ? u : fs_series(series_one());

  TermMap bounded = u.terms;
  ExprPtr k0;
  bool k0_osc = false;
  auto it0 = bounded.find(SeriesKey{Rational(0), 0, 0});
  if (it0 != bounded.end()) {
    k0 = it0->second.coeff;
    k0_osc = it0->second.osc;
    bounded.erase(it0);
  }
  auto [sw, cw] = series_sin_cos_tail(bounded, cap);
  if (!k0) return fs_series(kind == Kind::Sin ? std::move(sw) : std::move(cw));
  TermMap r;
  if (kind == Kind::Sin) {
    r = series_add(series_scale(cw, sin_(k0), k0_osc, cap),
                   series_scale(sw, cos_(k0), k0_osc, cap), cap);
  } else {
    r = series_add(series_scale(cw, cos_(k0), k0_osc, cap),
                   series_scale(sw, neg(sin_(k0)), k0_osc, cap), cap);
  }
  return fs_series(std::move(r));
}

inline FaceSeries fs_rpow(const FaceSeries& u, const Rational& q, std::size_t cap) {
  using Tag = FaceSeries::Tag;
  if (u.rapid()) {
    bool growth = u.tag == Tag::RapidGrowth;
    bool out_growth = q.is_positive() ? growth : !growth;
    TermMap ep;
    for (const auto& [k, t] : u.exp_part)
      ep.emplace(k, SeriesTerm{num(t.coeff->value * q), false});
    std::string nested =
        u.nested_tag.empty() ? std::string{} : "pow" + q.str() + "(" + u.nested_tag + ")";
    FaceSeries factor = fs_rpow(fs_series(u.terms), q, cap);
    return FaceSeries::make_rapid(out_growth, std::move(factor.terms), std::move(ep),
                                  std::move(nested));
  }
  if (u.terms.empty()) {
    if (q.is_positive()) return fs_series({});
    throw DomainError("negative power of a vanishing series");
  }
  const auto& [lk, lt] = *u.terms.begin();
  if (lt.osc) throw Indeterminate("fractional power of an oscillatory leading term");
  Rational la = lk.alpha * q;
  Rational lb = Rational(lk.b) * q;
  Rational lc = Rational(lk.c) * q;
  if (!lb.is_integer() || !lc.is_integer())
    throw Indeterminate("fractional power would need fractional log powers");
  TermMap w;
  for (auto it = std::next(u.terms.begin()); it != u.terms.end(); ++it) {
    SeriesKey k = key_sub(it->first, lk);
    if (!key_vanishes(k))
      throw Indeterminate("series has incomparable terms at its leading order");
    w.emplace(k, SeriesTerm{div(it->second.coeff, lt.coeff, true), it->second.osc});
  }
  TermMap lead;
  lead.emplace(SeriesKey{la, lb.num(), lc.num()}, SeriesTerm{rpow(lt.coeff, q, true), false});
  return fs_series(series_mul(lead, series_binomial(w, q, cap), cap));
}

}  // namespace detail

namespace detail {

inline FaceSeries face_series_core(const ExprPtr& e, int face, const LocalModel& model,
                                   std::size_t cap) {
  switch (e->kind) {
    case Kind::Num:
      if (e->value.is_zero()) return fs_series({});
      return fs_series({{SeriesKey{Rational(0), 0, 0}, SeriesTerm{e, false}}});
    case Kind::Var:
    case Kind::PowVar: {
      Rational q = e->kind == Kind::Var ? Rational(1) : e->value;
      if (e->var == face)
        return fs_series({{SeriesKey{q, 0, 0}, SeriesTerm{num(1), false}}});
      return fs_series({{SeriesKey{Rational(0), 0, 0}, SeriesTerm{e, false}}});
    }
    case Kind::LogVar:
      if (e->var == face)
        return fs_series({{SeriesKey{Rational(0), 1, 0}, SeriesTerm{num(1), false}}});
      return fs_series({{SeriesKey{Rational(0), 0, 0}, SeriesTerm{e, false}}});
    case Kind::LogNegLog:
      if (e->var == face)
        return fs_series({{SeriesKey{Rational(0), 0, 1}, SeriesTerm{num(1), false}}});
      return fs_series({{SeriesKey{Rational(0), 0, 0}, SeriesTerm{e, false}}});
    case Kind::Add: {
      FaceSeries r = fs_series({});
      for (const auto& k : e->kids) r = fs_add(r, face_series(k, face, model, cap), cap);
      return r;
    }
    case Kind::Mul: {
      FaceSeries r = fs_series(series_one());
      for (const auto& k : e->kids) r = fs_mul(r, face_series(k, face, model, cap), cap);
      return r;
    }
    case Kind::Div: {
      auto a = face_series(e->kids[0], face, model, cap);
      auto b = face_series(e->kids[1], face, model, cap);
      return fs_mul(a, fs_invert(b, cap), cap);
    }
    case Kind::IPow:
      return fs_ipow(face_series(e->kids[0], face, model, cap), e->ipexp, cap);
    case Kind::RPow:
      return fs_rpow(face_series(e->kids[0], face, model, cap), e->value, cap);
    case Kind::Exp:
      return fs_exp(face_series(e->kids[0], face, model, cap), cap);
    case Kind::Sin:
    case Kind::Cos:
      return fs_trig(e->kind, face_series(e->kids[0], face, model, cap), e->kids[0], cap);
  }
  throw UnsupportedNode("unknown node kind in face_series");
}

// Expansions of shared subtrees are cached (keyed by node address, face, and
// truncation length, with the node pinned by the entry) so that expressions
// with heavy internal sharing expand in time proportional to their graph
// size rather than their unfolded tree size.
struct SeriesMemoKey {
  const Expr* e;
  int face;
  std::size_t cap;
  bool operator==(const SeriesMemoKey&) const = default;
};
struct SeriesMemoHash {
  std::size_t operator()(const SeriesMemoKey& k) const {
    auto h = reinterpret_cast<std::uintptr_t>(k.e);
    return static_cast<std::size_t>((h ^ (h >> 9)) * 31u) +
           static_cast<std::size_t>(k.face) * 131u + k.cap;
  }
};

}  // namespace detail

inline FaceSeries face_series(const ExprPtr& e, int face, const LocalModel& model,
                              std::size_t cap) {
  if (!model.is_boundary(face)) throw DomainError("expansion face must be a boundary coordinate");
  if (e->size <= 16) return detail::face_series_core(e, face, model, cap);
  thread_local std::unordered_map<detail::SeriesMemoKey, std::pair<ExprPtr, FaceSeries>,
                                  detail::SeriesMemoHash>
      cache;
  detail::SeriesMemoKey key{e.get(), face, cap};
  auto it = cache.find(key);
  if (it != cache.end()) return it->second.second;
  FaceSeries r = detail::face_series_core(e, face, model, cap);
  if (cache.size() > 100000) cache.clear();
  cache.emplace(key, std::make_pair(e, r));
  return r;
}

// ---------------------------------------------------------------------------
// Limits and boundary-aware evaluation

enum class LimitKind { Finite, Infinite, NoLimit };

struct FaceLimit {
  LimitKind kind = LimitKind::Finite;
  ExprPtr value;  // expression in the remaining coordinates when Finite
};

inline FaceLimit face_limit(const ExprPtr& e, int face, const LocalModel& model) {
  FaceSeries s = face_series(e, face, model);
  if (s.tag == FaceSeries::Tag::RapidDecay || s.is_zero()) return {LimitKind::Finite, num(0)};
  if (s.tag == FaceSeries::Tag::RapidGrowth) return {LimitKind::Infinite, nullptr};
  const auto& [k, t] = *s.terms.begin();
  if (key_unbounded(k)) return {LimitKind::Infinite, nullptr};
  if (key_is_zero(k)) {
    if (t.osc) return {LimitKind::NoLimit, nullptr};
    return {LimitKind::Finite, t.coeff};
  }
  return {LimitKind::Finite, num(0)};
}

// Evaluate at a point of the closed local model: boundary coordinates may sit
// exactly at 0, in which case the value is the iterated face limit.
inline double evaluate(const ExprPtr& e, const std::vector<double>& pt, const LocalModel& model) {
  for (int i = 1; i <= model.depth; ++i) {
    if (static_cast<std::size_t>(i) <= pt.size() && pt[i - 1] == 0.0 && depends_on(e, i)) {
      FaceLimit lim = face_limit(e, i, model);
      if (lim.kind == LimitKind::Infinite)
        throw DomainError("expression is unbounded at the evaluation point");
      if (lim.kind == LimitKind::NoLimit)
        throw Indeterminate("expression has no boundary limit at the evaluation point");
      return evaluate(lim.value, pt, model);
    }
  }
  return eval(e, pt);
}

// ---------------------------------------------------------------------------
// Numeric cross-checks of a symbolic leading term

namespace detail {

inline std::vector<double> probe_point(const LocalModel& model, int face, double x) {
  std::vector<double> pt(static_cast<std::size_t>(model.dim));
  for (int j = 1; j <= model.dim; ++j) {
    if (j == face)
      pt[j - 1] = x;
    else if (model.is_boundary(j))
      pt[j - 1] = 0.35 + 0.11 * static_cast<double>(j % 5);
    else
      pt[j - 1] = 0.25 + 0.15 * static_cast<double>(j % 5);
  }
  return pt;
}

}  // namespace detail

// Fit the leading power at a face by sampling along x = 2^-n after dividing
// out the known log factors.  Returns nothing when sampling failed or the
// values collapse to zero.
inline std::optional<double> fit_leading_power(const ExprPtr& e, int face, const LocalModel& model,
                                               long b, long c) {
  auto sample = [&](int n) -> std::optional<double> {
    double x = std::ldexp(1.0, -n);
    auto pt = detail::probe_point(model, face, x);
    double v;
    try {
      v = eval(e, pt);
    } catch (const Error&) {
      return std::nullopt;
    }
    double lx = std::log(x);
    v /= std::pow(std::abs(lx), static_cast<double>(b));
    v /= std::pow(std::log(-lx), static_cast<double>(c));
    if (!std::isfinite(v) || v == 0.0) return std::nullopt;
    return v;
  };
  auto v1 = sample(30);
  auto v2 = sample(45);
  if (!v1 || !v2) return std::nullopt;
  double num = std::log(std::abs(*v2)) - std::log(std::abs(*v1));
  double den = (-45.0 + 30.0) * std::log(2.0);
  return num / den;
}

// Boundedness probe for oscillatory leading terms: sup |e / scale| over a
// dyadic ladder, requiring it finite and not collapsing to zero.
inline bool check_bounded_oscillation(const ExprPtr& e, int face, const LocalModel& model,
                                      const SeriesKey& key) {
  double sup = 0.0;
  int good = 0;
  for (int n = 8; n <= 44; n += 2) {
    double x = std::ldexp(1.0, -n);
    auto pt = detail::probe_point(model, face, x);
    double v;
    try {
      v = eval(e, pt);
    } catch (const Error&) {
      continue;
    }
    double lx = std::log(x);
    double scale = std::pow(x, key.alpha.to_double()) *
                   std::pow(std::abs(lx), static_cast<double>(key.b)) *
                   std::pow(std::log(-lx), static_cast<double>(key.c));
    double ratio = std::abs(v / scale);
    if (!std::isfinite(ratio)) return false;
    sup = std::max(sup, ratio);
    ++good;
  }
  return good >= 8 && sup < 1e9;
}

// ---------------------------------------------------------------------------
// Leading behavior at a boundary face:
//   e = coeff * x^alpha * (log x)^b * (log(-log x))^c * (1 + o(1))  as x -> 0+,
// with the other coordinates held in their declared box.  The symbolic answer
// comes from the face series; a numeric log-log fit (or a boundedness probe
// when the coefficient oscillates) cross-checks it.

struct LeadingBehavior {
  bool zero = false;             // expression vanishes identically
  Rational alpha;                // leading power of the face variable
  long b = 0;                    // power of log x
  long c = 0;                    // power of log(-log x)
  ExprPtr coeff;                 // leading coefficient in the remaining variables
  bool osc = false;              // coefficient carries a bounded oscillatory factor
  std::optional<double> fitted;  // numeric slope, when the fit produced one
};

inline LeadingBehavior leading_behavior(const ExprPtr& e, int face, const LocalModel& model,
                                        bool verify = true) {
  FaceSeries s = face_series(e, face, model);
  if (s.rapid())
    throw Indeterminate("leading behavior at the face is beyond the power-log scale");
  LeadingBehavior out;
  if (s.is_zero()) {
    out.zero = true;
    out.coeff = num(0);
    return out;
  }
  const auto& [k, t] = *s.terms.begin();
  out.alpha = k.alpha;
  out.b = k.b;
  out.c = k.c;
  out.coeff = t.coeff;
  out.osc = t.osc;
  if (verify) {
    if (t.osc) {
      if (!check_bounded_oscillation(e, face, model, k))
        throw Indeterminate("numeric probe does not confirm the oscillatory leading term");
    } else {
      auto fit = fit_leading_power(e, face, model, k.b, k.c);
      if (fit) {
        out.fitted = *fit;
        if (std::abs(*fit - k.alpha.to_double()) > 1e-3)
          throw Indeterminate("numeric log-log fit disagrees with the symbolic leading power");
      }
    }
  }
  return out;
}

}  // namespace bcw
