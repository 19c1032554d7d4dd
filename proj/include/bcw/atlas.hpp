#pragma once

// Charts and atlases for manifolds with corners, monomial factorization and
// classification of maps between charts, depth stratification, and the
// boundary/corner constructions at the chart level.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "bcw/classify.hpp"
#include "bcw/errors.hpp"
#include "bcw/expr.hpp"
#include "bcw/leading.hpp"
#include "bcw/model.hpp"
#include "bcw/normal.hpp"
#include "bcw/rational.hpp"
#include "bcw/sampling.hpp"

namespace bcw {

// ---------------------------------------------------------------------------
// Charts

struct Chart {
  std::string id;
  int dim = 1;    // number of coordinates
  int depth = 0;  // leading coordinates that carry a boundary face
  std::vector<Interval> box;  // per-coordinate domain; boundary coordinates start at 0

  LocalModel model() const { return LocalModel(dim, depth); }
};

inline void validate_chart(const Chart& c) {
  if (c.dim < 0 || c.depth < 0 || c.depth > c.dim)
    throw DomainError("chart '" + c.id + "': invalid dimensions");
  if (c.box.size() != static_cast<std::size_t>(c.dim))
    throw DomainError("chart '" + c.id + "': box size does not match the dimension");
  for (int i = 0; i < c.depth; ++i)
    if (c.box[static_cast<std::size_t>(i)].lo != 0.0)
      throw DomainError("chart '" + c.id + "': boundary coordinates must start at 0");
  for (const auto& iv : c.box)
    if (!(iv.lo < iv.hi)) throw DomainError("chart '" + c.id + "': empty box interval");
}

// Chart with the default unit box on every coordinate.
inline Chart make_chart(std::string id, int dim, int depth) {
  Chart c{std::move(id), dim, depth, std::vector<Interval>(static_cast<std::size_t>(dim))};
  validate_chart(c);
  return c;
}

// Number of boundary coordinates of p that sit exactly on their face.
inline int depth(const std::vector<double>& p, const Chart& c) {
  if (p.size() != static_cast<std::size_t>(c.dim))
    throw DomainError("point dimension does not match the chart");
  for (int i = 0; i < c.dim; ++i) {
    const auto u = static_cast<std::size_t>(i);
    if (i < c.depth && p[u] < 0.0) throw DomainError("negative boundary coordinate");
    double slack = 1e-12 * std::max(1.0, std::abs(c.box[u].hi));
    if (p[u] < c.box[u].lo - slack || p[u] > c.box[u].hi + slack)
      throw DomainError("point outside the chart domain");
  }
  int d = 0;
  for (int i = 0; i < c.depth; ++i)
    if (p[static_cast<std::size_t>(i)] == 0.0) ++d;
  return d;
}

// ---------------------------------------------------------------------------
// Maps between charts and their monomial factorization

// One boundary-target component written as F * prod_i x_i^{a_i} with F
// positive and a-smooth, or flagged as identically zero.
struct FactoredComponent {
  bool zero = false;
  std::vector<Rational> exponents;  // indexed by source boundary coordinate
  ExprPtr factor;                   // positive residual F, normalized to leading exponent 0
};

struct MapFlags {
  bool smooth = false;
  bool interior = false;
  bool b_normal = false;
  bool strongly_smooth = false;
  bool diffeo = false;  // witnessed by a supplied inverse passing the round-trip check
};

struct ChartedMap {
  Chart source;
  Chart target;
  std::vector<Interval> domain;             // sub-box of the source chart
  std::vector<ExprPtr> components;          // one expression per target coordinate
  std::vector<FactoredComponent> factored;  // per boundary-target coordinate
  MapFlags flags;
};

inline ChartedMap make_map(Chart source, Chart target, std::vector<ExprPtr> components) {
  ChartedMap f;
  f.domain = source.box;
  f.source = std::move(source);
  f.target = std::move(target);
  f.components = std::move(components);
  if (f.components.size() != static_cast<std::size_t>(f.target.dim))
    throw DomainError("map component count does not match the target dimension");
  return f;
}

inline ChartedMap identity_map(const Chart& c) {
  std::vector<ExprPtr> comps;
  comps.reserve(static_cast<std::size_t>(c.dim));
  for (int v = 1; v <= c.dim; ++v) comps.push_back(var(v));
  return make_map(c, c, std::move(comps));
}

namespace detail {

// Zero flags and leading exponents only, without certifying the residual.
inline std::vector<FactoredComponent> exponent_skeleton(const ChartedMap& f) {
  const LocalModel sm = f.source.model();
  std::vector<FactoredComponent> out;
  out.reserve(static_cast<std::size_t>(f.target.depth));
  for (int j = 1; j <= f.target.depth; ++j) {
    const ExprPtr& fj = f.components[static_cast<std::size_t>(j - 1)];
    FactoredComponent fc;
    if (symbolically_zero(fj)) {
      fc.zero = true;
      out.push_back(std::move(fc));
      continue;
    }
    fc.exponents.assign(static_cast<std::size_t>(sm.depth), Rational(0));
    for (int i = 1; i <= sm.depth; ++i) {
      if (!depends_on(fj, i)) continue;
      LeadingBehavior lb = leading_behavior(fj, i, sm, /*verify=*/false);
      if (lb.alpha.is_negative())
        throw FactorizationFailure("target component " + std::to_string(j) +
                                   " is unbounded at source face x" + std::to_string(i));
      fc.exponents[static_cast<std::size_t>(i - 1)] = lb.alpha;
    }
    out.push_back(std::move(fc));
  }
  return out;
}

// Positivity on the closed box: interior low-discrepancy samples plus the
// face and corner limits of a few of them.
inline bool positive_on(const ExprPtr& e, const std::vector<Interval>& domain,
                        const LocalModel& m, int samples) {
  auto pts = sample_box(domain, samples);
  std::vector<std::vector<double>> extra;
  for (std::size_t n = 0; n < pts.size() && n < 4; ++n) {
    for (int i = 1; i <= m.depth; ++i) {
      auto p = pts[n];
      p[static_cast<std::size_t>(i - 1)] = 0.0;
      extra.push_back(std::move(p));
    }
    if (m.depth > 0) {
      auto p = pts[n];
      for (int i = 1; i <= m.depth; ++i) p[static_cast<std::size_t>(i - 1)] = 0.0;
      extra.push_back(std::move(p));
    }
  }
  pts.insert(pts.end(), extra.begin(), extra.end());
  if (pts.empty()) pts.push_back({});  // dimension-0 chart: the single point
  for (const auto& p : pts) {
    double v;
    try {
      v = evaluate(e, p, m);
    } catch (const Error&) {
      return false;
    }
    if (!std::isfinite(v) || !(v > 0.0)) return false;
  }
  return true;
}

}  // namespace detail

// Factor every boundary-target component as F * prod_i x_i^{a_i} with F
// positive and a-smooth (certified to the given derivative order), or detect
// the identically-zero case.
inline std::vector<FactoredComponent> factor_components(const ChartedMap& f, int order = 6) {
  const LocalModel sm = f.source.model();
  std::vector<FactoredComponent> out;
  out.reserve(static_cast<std::size_t>(f.target.depth));
  for (int j = 1; j <= f.target.depth; ++j) {
    const ExprPtr& fj = f.components[static_cast<std::size_t>(j - 1)];
    FactoredComponent fc;
    if (symbolically_zero(fj)) {
      fc.zero = true;
      out.push_back(std::move(fc));
      continue;
    }
    fc.exponents.assign(static_cast<std::size_t>(sm.depth), Rational(0));
    ExprPtr residual = fj;
    for (int i = 1; i <= sm.depth; ++i) {
      if (!depends_on(fj, i)) continue;
      LeadingBehavior lb;
      try {
        lb = leading_behavior(fj, i, sm, /*verify=*/false);
      } catch (const Indeterminate& ex) {
        throw FactorizationFailure("target component " + std::to_string(j) + " at face x" +
                                   std::to_string(i) + ": " + ex.what());
      }
      if (lb.alpha.is_negative())
        throw FactorizationFailure("target component " + std::to_string(j) +
                                   " is unbounded at source face x" + std::to_string(i));
      fc.exponents[static_cast<std::size_t>(i - 1)] = lb.alpha;
      if (!lb.alpha.is_zero())
        residual = mul(residual, pow_var(i, Rational(0) - lb.alpha));
    }
    Classification cls;
    try {
      cls = classify_function(residual, sm, order);
    } catch (const Indeterminate& ex) {
      throw FactorizationFailure("residual of target component " + std::to_string(j) + ": " +
                                 ex.what());
    }
    if (cls.overall != SmoothClass::ASmooth || !cls.numeric_ok)
      throw FactorizationFailure("residual of target component " + std::to_string(j) +
                                 " is not a-smooth (" + std::string(to_string(cls.overall)) +
                                 ")");
    for (int i = 1; i <= sm.depth; ++i) {
      if (!depends_on(residual, i)) continue;
      FaceLimit lim = face_limit(residual, i, sm);
      if (lim.kind != LimitKind::Finite || symbolically_zero(lim.value))
        throw FactorizationFailure("residual of target component " + std::to_string(j) +
                                   " does not normalize to leading exponent 0 at face x" +
                                   std::to_string(i));
    }
    if (!detail::positive_on(residual, f.domain, sm, 32))
      throw FactorizationFailure("residual of target component " + std::to_string(j) +
                                 " is not positive on the domain");
    fc.factor = simplify(residual);
    out.push_back(std::move(fc));
  }
  return out;
}

// Joint classification flags from the factorization: interior (no zero
// component), b-normal (each source-face row of the exponent matrix has at
// most one positive entry), strongly smooth (each target-face column has at
// most one positive entry).
inline MapFlags classify_map(ChartedMap& f, int order = 6) {
  f.factored = factor_components(f, order);
  const LocalModel sm = f.source.model();
  MapFlags fl;
  fl.smooth = true;
  for (int j = f.target.depth + 1; j <= f.target.dim; ++j) {
    Classification cls = classify_function(f.components[static_cast<std::size_t>(j - 1)], sm, order);
    if (cls.overall != SmoothClass::ASmooth || !cls.numeric_ok) fl.smooth = false;
  }
  fl.interior = std::none_of(f.factored.begin(), f.factored.end(),
                             [](const FactoredComponent& fc) { return fc.zero; });
  fl.b_normal = fl.interior;
  for (int i = 1; i <= sm.depth && fl.b_normal; ++i) {
    int hits = 0;
    for (const auto& fc : f.factored)
      if (!fc.zero && fc.exponents[static_cast<std::size_t>(i - 1)].is_positive()) ++hits;
    if (hits > 1) fl.b_normal = false;
  }
  fl.strongly_smooth = fl.interior;
  for (const auto& fc : f.factored) {
    if (fc.zero) continue;
    int hits = 0;
    for (const auto& q : fc.exponents)
      if (q.is_positive()) ++hits;
    if (hits > 1) fl.strongly_smooth = false;
  }
  fl.diffeo = f.flags.diffeo;
  f.flags = fl;
  return fl;
}

// Exponent matrix A with rows indexed by source boundary coordinates and
// columns by boundary components of the target.
inline std::vector<std::vector<Rational>> exponent_matrix(const ChartedMap& f) {
  std::vector<FactoredComponent> local;
  const std::vector<FactoredComponent>* fact = &f.factored;
  if (f.factored.size() != static_cast<std::size_t>(f.target.depth)) {
    local = detail::exponent_skeleton(f);
    fact = &local;
  }
  std::vector<std::vector<Rational>> A(
      static_cast<std::size_t>(f.source.depth),
      std::vector<Rational>(static_cast<std::size_t>(f.target.depth), Rational(0)));
  for (int j = 1; j <= f.target.depth; ++j) {
    const FactoredComponent& fc = (*fact)[static_cast<std::size_t>(j - 1)];
    if (fc.zero)
      throw NotInterior("exponent matrix undefined: target component " + std::to_string(j) +
                        " vanishes identically");
    for (int i = 1; i <= f.source.depth; ++i)
      A[static_cast<std::size_t>(i - 1)][static_cast<std::size_t>(j - 1)] =
          fc.exponents[static_cast<std::size_t>(i - 1)];
  }
  return A;
}

inline std::vector<std::vector<Rational>> matmul(const std::vector<std::vector<Rational>>& A,
                                                 const std::vector<std::vector<Rational>>& B) {
  std::size_t n = A.size();
  std::size_t k = B.size();
  std::size_t m = k ? B[0].size() : 0;
  for (const auto& row : A)
    if (row.size() != k) throw DomainError("matmul: inner dimensions disagree");
  std::vector<std::vector<Rational>> C(n, std::vector<Rational>(m, Rational(0)));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      Rational s(0);
      for (std::size_t t = 0; t < k; ++t) s = s + A[i][t] * B[t][j];
      C[i][j] = s;
    }
  return C;
}

// Composition g of f by substituting f's components into g's expressions;
// defined when the substitution stays inside the expression algebra.
inline ChartedMap compose(const ChartedMap& g, const ChartedMap& f) {
  if (g.source.id != f.target.id)
    throw DomainError("compose: inner target chart and outer source chart differ");
  std::vector<ExprPtr> comps;
  comps.reserve(g.components.size());
  for (const auto& ge : g.components) comps.push_back(substitute(ge, f.components));
  ChartedMap h = make_map(f.source, g.target, std::move(comps));
  h.domain = f.domain;
  return h;
}

// ---------------------------------------------------------------------------
// Corner components and the induced map on strata

// Local corner component: a chart together with the set of boundary
// coordinates vanishing on the stratum.
struct CornerComponent {
  std::string chart;
  std::set<int> faces;
};

inline bool operator<(const CornerComponent& x, const CornerComponent& y) {
  return std::tie(x.chart, x.faces) < std::tie(y.chart, y.faces);
}
inline bool operator==(const CornerComponent& x, const CornerComponent& y) {
  return x.chart == y.chart && x.faces == y.faces;
}

inline CornerComponent corner_component_at(const std::vector<double>& p, const Chart& c) {
  (void)depth(p, c);
  CornerComponent g{c.id, {}};
  for (int i = 1; i <= c.depth; ++i)
    if (p[static_cast<std::size_t>(i - 1)] == 0.0) g.faces.insert(i);
  return g;
}

// Induced map on corner components: target face j lies in the image stratum
// when the j-th component vanishes identically or picks up a positive
// exponent from some vanishing source face.
inline CornerComponent corner_map(const ChartedMap& f, const CornerComponent& g) {
  if (g.chart != f.source.id)
    throw DomainError("corner component lives on a different chart than the map's source");
  for (int i : g.faces)
    if (i < 1 || i > f.source.depth)
      throw DomainError("corner component face index out of range");
  std::vector<FactoredComponent> local;
  const std::vector<FactoredComponent>* fact = &f.factored;
  if (f.factored.size() != static_cast<std::size_t>(f.target.depth)) {
    local = detail::exponent_skeleton(f);
    fact = &local;
  }
  CornerComponent out{f.target.id, {}};
  for (int j = 1; j <= f.target.depth; ++j) {
    const FactoredComponent& fc = (*fact)[static_cast<std::size_t>(j - 1)];
    if (fc.zero) {
      out.faces.insert(j);
      continue;
    }
    for (int i : g.faces)
      if (fc.exponents[static_cast<std::size_t>(i - 1)].is_positive()) {
        out.faces.insert(j);
        break;
      }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Atlases

struct Transition {
  std::string source;
  std::string target;
  std::vector<Interval> overlap;  // sub-box of the source chart
  std::vector<ExprPtr> fwd;       // target coordinates as functions of the source
  std::vector<ExprPtr> inv;       // source coordinates as functions of the target
};

struct FaceRef {
  std::string chart;
  int var = 1;  // boundary coordinate index
};
inline bool operator<(const FaceRef& a, const FaceRef& b) {
  return std::tie(a.chart, a.var) < std::tie(b.chart, b.var);
}
inline bool operator==(const FaceRef& a, const FaceRef& b) {
  return a.chart == b.chart && a.var == b.var;
}

// Optional named grouping of local faces into one global boundary face.
struct FaceName {
  std::string name;
  std::vector<FaceRef> members;
};

struct Atlas {
  std::vector<Chart> charts;
  std::vector<Transition> transitions;
  std::vector<FaceName> faces;

  const Chart& chart(const std::string& id) const {
    for (const auto& c : charts)
      if (c.id == id) return c;
    throw DomainError("unknown chart id '" + id + "'");
  }
};

inline void validate_atlas(const Atlas& a) {
  std::set<std::string> ids;
  for (const auto& c : a.charts) {
    validate_chart(c);
    if (!ids.insert(c.id).second) throw DomainError("duplicate chart id '" + c.id + "'");
  }
  for (const auto& t : a.transitions) {
    const Chart& s = a.chart(t.source);
    const Chart& d = a.chart(t.target);
    if (t.overlap.size() != static_cast<std::size_t>(s.dim))
      throw DomainError("transition " + t.source + "->" + t.target + ": overlap box size mismatch");
    if (t.fwd.size() != static_cast<std::size_t>(d.dim) ||
        t.inv.size() != static_cast<std::size_t>(s.dim))
      throw DomainError("transition " + t.source + "->" + t.target +
                        ": component count mismatch");
  }
  for (const auto& fn : a.faces)
    for (const auto& fr : fn.members) {
      const Chart& c = a.chart(fr.chart);
      if (fr.var < 1 || fr.var > c.depth)
        throw DomainError("face '" + fn.name + "': member x" + std::to_string(fr.var) +
                          " of chart '" + fr.chart + "' is not a boundary coordinate");
    }
}

inline ChartedMap transition_map(const Atlas& a, const Transition& t) {
  ChartedMap f = make_map(a.chart(t.source), a.chart(t.target), t.fwd);
  f.domain = t.overlap;
  return f;
}

inline std::vector<double> eval_map(const std::vector<ExprPtr>& comps,
                                    const std::vector<double>& p) {
  std::vector<double> out(comps.size());
  for (std::size_t j = 0; j < comps.size(); ++j) out[j] = eval(comps[j], p);
  return out;
}

// The unique target boundary component picking up a positive exponent from
// the given source face, when there is exactly one.
inline std::optional<int> face_image(const std::vector<FactoredComponent>& factored, int face) {
  int img = 0, hits = 0;
  for (int j = 1; j <= static_cast<int>(factored.size()); ++j) {
    const FactoredComponent& fc = factored[static_cast<std::size_t>(j - 1)];
    if (!fc.zero && fc.exponents[static_cast<std::size_t>(face - 1)].is_positive()) {
      img = j;
      ++hits;
    }
  }
  if (hits != 1) return std::nullopt;
  return img;
}

struct TransitionCheck {
  bool round_trip = false;     // inverse composes to identity on the sample grid
  bool exact_inverse = false;  // matched face exponents are mutually reciprocal
  double max_error = 0.0;
  int points = 0;
};

inline TransitionCheck verify_transition(const Atlas& a, const Transition& t, int grid = 64,
                                         double tol = 1e-10) {
  TransitionCheck out;
  auto pts = sample_box(t.overlap, grid, 0.02);
  for (const auto& p : pts) {
    auto y = eval_map(t.fwd, p);
    auto x2 = eval_map(t.inv, y);
    for (std::size_t v = 0; v < p.size(); ++v) {
      double err = std::abs(x2[v] - p[v]) / std::max(1.0, std::abs(p[v]));
      out.max_error = std::max(out.max_error, err);
    }
    ++out.points;
  }
  out.round_trip = out.max_error <= tol;
  // Each source face inside the overlap must match exactly one target face,
  // mutually, with reciprocal leading exponents.
  try {
    ChartedMap fwd = transition_map(a, t);
    ChartedMap bwd = make_map(a.chart(t.target), a.chart(t.source), t.inv);
    auto skf = detail::exponent_skeleton(fwd);
    auto skb = detail::exponent_skeleton(bwd);
    bool ok = true;
    for (int i = 1; i <= a.chart(t.source).depth && ok; ++i) {
      if (t.overlap[static_cast<std::size_t>(i - 1)].lo != 0.0) continue;
      auto j = face_image(skf, i);
      if (!j) {
        ok = false;
        break;
      }
      auto back = face_image(skb, *j);
      ok = back && *back == i &&
           skf[static_cast<std::size_t>(*j - 1)].exponents[static_cast<std::size_t>(i - 1)] *
                   skb[static_cast<std::size_t>(i - 1)]
                       .exponents[static_cast<std::size_t>(*j - 1)] ==
               Rational(1);
    }
    out.exact_inverse = ok;
  } catch (const Error&) {
    out.exact_inverse = false;
  }
  return out;
}

// Checks every transition's inverse round-trip on a deterministic grid and
// the exact inverse relation of the exponent matrices.
inline void verify_atlas(const Atlas& a, int grid = 64, double tol = 1e-10) {
  validate_atlas(a);
  for (const auto& t : a.transitions) {
    TransitionCheck ck = verify_transition(a, t, grid, tol);
    if (!ck.round_trip)
      throw NotADiffeo("transition " + t.source + "->" + t.target +
                       " fails the inverse round-trip (max error " +
                       std::to_string(ck.max_error) + ")");
    if (!ck.exact_inverse)
      throw NotADiffeo("transition " + t.source + "->" + t.target +
                       ": exponent matrices are not mutually inverse");
  }
}

// Composes a cycle of transitions on sampled points of the mutual overlap;
// returns the number of points that stayed inside every overlap box, throwing
// when a surviving point fails to return to itself.
inline int check_transition_cycle(const Atlas& a, const Transition& t01, const Transition& t12,
                                  const Transition& t20, int grid = 64, double tol = 1e-10) {
  if (t01.target != t12.source || t12.target != t20.source || t20.target != t01.source)
    throw DomainError("transitions do not form a cycle");
  a.chart(t01.source);  // validates the chart references
  auto inside = [](const std::vector<Interval>& box, const std::vector<double>& p) {
    for (std::size_t i = 0; i < p.size(); ++i)
      if (p[i] < box[i].lo || p[i] > box[i].hi) return false;
    return true;
  };
  int checked = 0;
  for (const auto& p : sample_box(t01.overlap, grid, 0.02)) {
    auto y = eval_map(t01.fwd, p);
    if (!inside(t12.overlap, y)) continue;
    auto z = eval_map(t12.fwd, y);
    if (!inside(t20.overlap, z)) continue;
    auto q = eval_map(t20.fwd, z);
    for (std::size_t v = 0; v < p.size(); ++v)
      if (std::abs(q[v] - p[v]) / std::max(1.0, std::abs(p[v])) > tol)
        throw NotADiffeo("transition cycle through " + t01.source + " fails to close up");
    ++checked;
  }
  return checked;
}

// ---------------------------------------------------------------------------
// Strata of an atlas: local corner components glued across overlaps

namespace detail {

struct UnionFind {
  std::map<std::string, std::string> parent;
  std::string find(std::string x) {
    while (true) {
      auto it = parent.find(x);
      if (it == parent.end() || it->second == x) return x;
      x = it->second;
    }
  }
  void unite(const std::string& x, const std::string& y) {
    auto rx = find(x), ry = find(y);
    if (rx != ry) parent[rx] = ry;
  }
};

inline std::string stratum_key(const CornerComponent& g) {
  std::string s = g.chart + "|";
  for (int i : g.faces) s += std::to_string(i) + ",";
  return s;
}

}  // namespace detail

// All depth-k corner strata of the atlas, grouped by the overlap gluing.
inline std::vector<std::vector<CornerComponent>> corner_components(const Atlas& a, int k) {
  if (k < 0) throw DomainError("negative corner depth");
  std::vector<CornerComponent> strata;
  for (const auto& c : a.charts) {
    if (k > c.depth) continue;
    for (std::uint32_t mask = 0; mask < (1u << c.depth); ++mask) {
      if (std::popcount(mask) != k) continue;
      CornerComponent g{c.id, {}};
      for (int i = 1; i <= c.depth; ++i)
        if (mask & (1u << (i - 1))) g.faces.insert(i);
      strata.push_back(std::move(g));
    }
  }
  detail::UnionFind uf;
  for (const auto& t : a.transitions) {
    ChartedMap tm = transition_map(a, t);
    tm.factored = detail::exponent_skeleton(tm);
    for (const auto& g : strata) {
      if (g.chart != t.source) continue;
      bool present = true;
      for (int i : g.faces)
        if (t.overlap[static_cast<std::size_t>(i - 1)].lo != 0.0) present = false;
      if (!present) continue;
      CornerComponent img = corner_map(tm, g);
      if (img.faces.size() != g.faces.size()) continue;  // stratum leaves the overlap
      uf.unite(detail::stratum_key(g), detail::stratum_key(img));
    }
  }
  std::map<std::string, std::vector<CornerComponent>> groups;
  for (const auto& g : strata) groups[uf.find(detail::stratum_key(g))].push_back(g);
  std::vector<std::vector<CornerComponent>> out;
  out.reserve(groups.size());
  for (auto& [root, v] : groups) out.push_back(std::move(v));
  return out;
}

// Stratum counts by depth k = 0..max chart depth.
inline std::vector<std::size_t> corner_counts(const Atlas& a) {
  int maxk = 0;
  for (const auto& c : a.charts) maxk = std::max(maxk, c.depth);
  std::vector<std::size_t> out;
  for (int k = 0; k <= maxk; ++k) out.push_back(corner_components(a, k).size());
  return out;
}

inline std::size_t connected_components(const Atlas& a) {
  return corner_components(a, 0).size();
}

// ---------------------------------------------------------------------------
// Boundary atlas: one chart of dimension m-1 per (chart, boundary coordinate),
// with transitions induced by restricting the original ones to the face.

inline std::string boundary_chart_id(const std::string& chart, int var) {
  return chart + "#" + std::to_string(var);
}

inline Atlas boundary_atlas(const Atlas& a) {
  Atlas b;
  for (const auto& c : a.charts) {
    for (int i = 1; i <= c.depth; ++i) {
      Chart bc;
      bc.id = boundary_chart_id(c.id, i);
      bc.dim = c.dim - 1;
      bc.depth = c.depth - 1;
      for (int v = 1; v <= c.dim; ++v)
        if (v != i) bc.box.push_back(c.box[static_cast<std::size_t>(v - 1)]);
      b.charts.push_back(std::move(bc));
    }
  }
  for (const auto& t : a.transitions) {
    const Chart& s = a.chart(t.source);
    const Chart& d = a.chart(t.target);
    ChartedMap tm = transition_map(a, t);
    std::vector<FactoredComponent> skel = detail::exponent_skeleton(tm);
    for (int i = 1; i <= s.depth; ++i) {
      if (t.overlap[static_cast<std::size_t>(i - 1)].lo != 0.0) continue;
      auto match = face_image(skel, i);
      if (!match)
        throw NotADiffeo("transition " + t.source + "->" + t.target + " does not map face x" +
                         std::to_string(i) + " to a unique target face");
      int img = *match;
      Transition bt;
      bt.source = boundary_chart_id(t.source, i);
      bt.target = boundary_chart_id(t.target, img);
      for (int v = 1; v <= s.dim; ++v)
        if (v != i) bt.overlap.push_back(t.overlap[static_cast<std::size_t>(v - 1)]);
      std::vector<ExprPtr> srcsub(static_cast<std::size_t>(s.dim));
      for (int v = 1; v <= s.dim; ++v)
        srcsub[static_cast<std::size_t>(v - 1)] = (v == i) ? num(0) : var(v < i ? v : v - 1);
      for (int j = 1; j <= d.dim; ++j)
        if (j != img) bt.fwd.push_back(substitute(t.fwd[static_cast<std::size_t>(j - 1)], srcsub));
      std::vector<ExprPtr> tgtsub(static_cast<std::size_t>(d.dim));
      for (int v = 1; v <= d.dim; ++v)
        tgtsub[static_cast<std::size_t>(v - 1)] = (v == img) ? num(0) : var(v < img ? v : v - 1);
      for (int v = 1; v <= s.dim; ++v)
        if (v != i) bt.inv.push_back(substitute(t.inv[static_cast<std::size_t>(v - 1)], tgtsub));
      b.transitions.push_back(std::move(bt));
    }
  }
  return b;
}

// ---------------------------------------------------------------------------
// Product atlas

namespace detail {

// Variable numbering in a product chart: A-boundary, B-boundary, A-interior,
// B-interior.
inline int product_var_a(const Chart& ca, const Chart& cb, int v) {
  return v <= ca.depth ? v : v + cb.depth;
}
inline int product_var_b(const Chart& ca, const Chart& cb, int v) {
  return v <= cb.depth ? ca.depth + v : ca.dim + v;
}

struct GeneralTransition {
  const Chart* src;
  const Chart* dst;
  std::vector<Interval> overlap;
  std::vector<ExprPtr> fwd, inv;
  bool identity = false;
};

inline std::vector<GeneralTransition> general_transitions(const Atlas& x) {
  std::vector<GeneralTransition> out;
  for (const auto& c : x.charts) {
    GeneralTransition g{&c, &c, c.box, {}, {}, true};
    for (int v = 1; v <= c.dim; ++v) {
      g.fwd.push_back(var(v));
      g.inv.push_back(var(v));
    }
    out.push_back(std::move(g));
  }
  for (const auto& t : x.transitions)
    out.push_back({&x.chart(t.source), &x.chart(t.target), t.overlap, t.fwd, t.inv, false});
  return out;
}

}  // namespace detail

inline std::string product_chart_id(const std::string& a, const std::string& b) {
  return a + "*" + b;
}

inline Atlas product_atlas(const Atlas& A, const Atlas& B) {
  using detail::product_var_a;
  using detail::product_var_b;
  Atlas P;
  for (const auto& ca : A.charts)
    for (const auto& cb : B.charts) {
      Chart pc;
      pc.id = product_chart_id(ca.id, cb.id);
      pc.dim = ca.dim + cb.dim;
      pc.depth = ca.depth + cb.depth;
      pc.box.assign(static_cast<std::size_t>(pc.dim), Interval{});
      for (int v = 1; v <= ca.dim; ++v)
        pc.box[static_cast<std::size_t>(product_var_a(ca, cb, v) - 1)] =
            ca.box[static_cast<std::size_t>(v - 1)];
      for (int v = 1; v <= cb.dim; ++v)
        pc.box[static_cast<std::size_t>(product_var_b(ca, cb, v) - 1)] =
            cb.box[static_cast<std::size_t>(v - 1)];
      P.charts.push_back(std::move(pc));
    }
  auto gta = detail::general_transitions(A);
  auto gtb = detail::general_transitions(B);
  for (const auto& ta : gta)
    for (const auto& tb : gtb) {
      if (ta.identity && tb.identity) continue;
      const Chart &sa = *ta.src, &sb = *tb.src, &da = *ta.dst, &db = *tb.dst;
      Transition pt;
      pt.source = product_chart_id(sa.id, sb.id);
      pt.target = product_chart_id(da.id, db.id);
      pt.overlap.assign(static_cast<std::size_t>(sa.dim + sb.dim), Interval{});
      std::vector<ExprPtr> subA(static_cast<std::size_t>(sa.dim));
      for (int v = 1; v <= sa.dim; ++v) {
        pt.overlap[static_cast<std::size_t>(product_var_a(sa, sb, v) - 1)] =
            ta.overlap[static_cast<std::size_t>(v - 1)];
        subA[static_cast<std::size_t>(v - 1)] = var(product_var_a(sa, sb, v));
      }
      std::vector<ExprPtr> subB(static_cast<std::size_t>(sb.dim));
      for (int v = 1; v <= sb.dim; ++v) {
        pt.overlap[static_cast<std::size_t>(product_var_b(sa, sb, v) - 1)] =
            tb.overlap[static_cast<std::size_t>(v - 1)];
        subB[static_cast<std::size_t>(v - 1)] = var(product_var_b(sa, sb, v));
      }
      pt.fwd.assign(static_cast<std::size_t>(da.dim + db.dim), nullptr);
      for (int j = 1; j <= da.dim; ++j)
        pt.fwd[static_cast<std::size_t>(product_var_a(da, db, j) - 1)] =
            substitute(ta.fwd[static_cast<std::size_t>(j - 1)], subA);
      for (int j = 1; j <= db.dim; ++j)
        pt.fwd[static_cast<std::size_t>(product_var_b(da, db, j) - 1)] =
            substitute(tb.fwd[static_cast<std::size_t>(j - 1)], subB);
      std::vector<ExprPtr> subA2(static_cast<std::size_t>(da.dim));
      for (int v = 1; v <= da.dim; ++v)
        subA2[static_cast<std::size_t>(v - 1)] = var(product_var_a(da, db, v));
      std::vector<ExprPtr> subB2(static_cast<std::size_t>(db.dim));
      for (int v = 1; v <= db.dim; ++v)
        subB2[static_cast<std::size_t>(v - 1)] = var(product_var_b(da, db, v));
      pt.inv.assign(static_cast<std::size_t>(sa.dim + sb.dim), nullptr);
      for (int v = 1; v <= sa.dim; ++v)
        pt.inv[static_cast<std::size_t>(product_var_a(sa, sb, v) - 1)] =
            substitute(ta.inv[static_cast<std::size_t>(v - 1)], subA2);
      for (int v = 1; v <= sb.dim; ++v)
        pt.inv[static_cast<std::size_t>(product_var_b(sa, sb, v) - 1)] =
            substitute(tb.inv[static_cast<std::size_t>(v - 1)], subB2);
      P.transitions.push_back(std::move(pt));
    }
  return P;
}

}  // namespace bcw
