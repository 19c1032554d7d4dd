#pragma once
// Boundary holonomy, admissible weights, and transition cocycles of the
// associated weighted line bundles.
//
// Boundary faces of the charts are glued along transition overlaps into
// boundary components.  Transporting a boundary defining function around a
// cycle of overlaps multiplies its leading exponent by the exponent of each
// transition; the accumulated factor is the holonomy of the component.  A
// component with holonomy != 1 is twisted and admits only the zero weight.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bcw/atlas.hpp"
#include "bcw/errors.hpp"
#include "bcw/expr.hpp"
#include "bcw/leading.hpp"
#include "bcw/rational.hpp"
#include "bcw/sampling.hpp"

namespace bcw {

inline std::string face_key(const FaceRef& f) { return boundary_chart_id(f.chart, f.var); }

struct BoundaryComponent {
  std::string id;
  std::vector<FaceRef> members;
};

namespace detail {

// One glued pair of boundary faces.  The exponent is the leading power the
// target defining function picks up from the source one.
struct FaceEdge {
  int transition = 0;  // index into Atlas::transitions
  FaceRef from, to;
  Rational expo{1};
};

inline std::string edge_label(const Atlas& a, const FaceEdge& e) {
  const Transition& t = a.transitions[static_cast<std::size_t>(e.transition)];
  return "t" + std::to_string(e.transition) + ":" + t.source + "->" + t.target + "#" +
         std::to_string(e.from.var);
}

inline std::vector<FaceEdge> boundary_edges(const Atlas& a) {
  std::vector<FaceEdge> out;
  for (int ti = 0; ti < static_cast<int>(a.transitions.size()); ++ti) {
    const Transition& t = a.transitions[static_cast<std::size_t>(ti)];
    const Chart& src = a.chart(t.source);
    if (src.depth == 0) continue;
    ChartedMap tm = transition_map(a, t);
    auto sk = exponent_skeleton(tm);
    for (int i = 1; i <= src.depth; ++i) {
      if (t.overlap[static_cast<std::size_t>(i - 1)].lo != 0.0) continue;
      auto img = face_image(sk, i);
      if (!img)
        throw NotADiffeo("transition " + t.source + "->" + t.target +
                         " sends face " + std::to_string(i) + " to no unique target face");
      FaceEdge e;
      e.transition = ti;
      e.from = {t.source, i};
      e.to = {t.target, *img};
      e.expo = sk[static_cast<std::size_t>(*img - 1)].exponents[static_cast<std::size_t>(i - 1)];
      out.push_back(std::move(e));
    }
  }
  return out;
}

// Exact two-sided check of one glued face pair: the inverse must send the
// image face back with reciprocal leading exponent.
inline void require_face_diffeo(const Atlas& a, const FaceEdge& e) {
  const Transition& t = a.transitions[static_cast<std::size_t>(e.transition)];
  const std::string where = "transition " + t.source + "->" + t.target;
  if (t.inv.size() != static_cast<std::size_t>(a.chart(t.target).dim))
    throw NotADiffeo(where + " has no usable inverse");
  ChartedMap bwd = make_map(a.chart(t.target), a.chart(t.source), t.inv);
  auto skb = exponent_skeleton(bwd);
  auto back = face_image(skb, e.to.var);
  if (!back || *back != e.from.var)
    throw NotADiffeo(where + " does not invert face " + std::to_string(e.from.var));
  Rational ainv =
      skb[static_cast<std::size_t>(e.from.var - 1)].exponents[static_cast<std::size_t>(e.to.var - 1)];
  if (!(ainv * e.expo == Rational(1)))
    throw NotADiffeo(where + " has non-reciprocal face exponents at face " +
                     std::to_string(e.from.var));
}

inline std::vector<FaceRef> all_boundary_faces(const Atlas& a) {
  std::vector<FaceRef> keys;
  for (const Chart& c : a.charts)
    for (int i = 1; i <= c.depth; ++i) keys.push_back({c.id, i});
  return keys;
}

}  // namespace detail

// Boundary faces grouped by the overlap gluing.  Components take the first
// declared face name covering one of their members, falling back to the key
// of the earliest member chart.
inline std::vector<BoundaryComponent> boundary_components(const Atlas& a) {
  auto faces = detail::all_boundary_faces(a);
  detail::UnionFind uf;
  for (const auto& e : detail::boundary_edges(a)) uf.unite(face_key(e.from), face_key(e.to));
  std::vector<BoundaryComponent> out;
  std::map<std::string, std::size_t> slot;
  for (const FaceRef& f : faces) {
    std::string root = uf.find(face_key(f));
    auto it = slot.find(root);
    if (it == slot.end()) {
      slot[root] = out.size();
      out.push_back({"", {f}});
    } else {
      out[it->second].members.push_back(f);
    }
  }
  for (auto& bc : out) {
    for (const FaceName& fn : a.faces) {
      bool hit = false;
      for (const FaceRef& m : fn.members)
        for (const FaceRef& f : bc.members)
          if (m.chart == f.chart && m.var == f.var) hit = true;
      if (hit) {
        bc.id = fn.name;
        break;
      }
    }
    if (bc.id.empty()) bc.id = face_key(bc.members.front());
  }
  return out;
}

struct HolonomyComponent {
  std::string id;
  Rational holonomy{1};
  bool twisted = false;
  std::vector<std::string> cycle;  // overlap gluings traversed, closing edge last
};

struct HolonomyReport {
  std::vector<HolonomyComponent> components;

  const HolonomyComponent& component(const std::string& id) const {
    for (const auto& c : components)
      if (c.id == id) return c;
    throw DomainError("unknown boundary component '" + id + "'");
  }
};

// Holonomy of every boundary component.  A spanning tree of the face-gluing
// graph carries multiplicative potentials; the first edge outside the tree
// (in declaration order) closes a cycle whose accumulated exponent is the
// holonomy.  Components without a cycle report holonomy 1.
inline HolonomyReport boundary_holonomy(const Atlas& a) {
  auto edges = detail::boundary_edges(a);
  auto comps = boundary_components(a);

  detail::UnionFind uf;
  std::vector<char> in_tree(edges.size(), 0);
  // adjacency over tree edges: face key -> (edge index, traversed forward?)
  std::map<std::string, std::vector<std::pair<int, bool>>> adj;
  std::vector<int> closing;  // non-tree edges in declaration order
  for (int k = 0; k < static_cast<int>(edges.size()); ++k) {
    const auto& e = edges[static_cast<std::size_t>(k)];
    std::string fa = face_key(e.from), fb = face_key(e.to);
    if (uf.find(fa) != uf.find(fb)) {
      uf.unite(fa, fb);
      in_tree[static_cast<std::size_t>(k)] = 1;
      adj[fa].push_back({k, true});
      adj[fb].push_back({k, false});
    } else {
      closing.push_back(k);
    }
  }

  HolonomyReport rep;
  for (const auto& bc : comps) {
    HolonomyComponent hc;
    hc.id = bc.id;
    std::string root = uf.find(face_key(bc.members.front()));
    int close = -1;
    for (int k : closing)
      if (uf.find(face_key(edges[static_cast<std::size_t>(k)].from)) == root) {
        close = k;
        break;
      }
    if (close >= 0) {
      const auto& ec = edges[static_cast<std::size_t>(close)];
      // potentials along the tree, rooted at the closing edge's source
      std::map<std::string, Rational> pot;
      std::map<std::string, std::pair<int, bool>> via;  // tree edge used to reach the key
      std::vector<std::string> queue{face_key(ec.from)};
      pot[queue.front()] = Rational(1);
      for (std::size_t h = 0; h < queue.size(); ++h) {
        std::string u = queue[h];
        for (auto [k, fwddir] : adj[u]) {
          const auto& e = edges[static_cast<std::size_t>(k)];
          std::string v = face_key(fwddir ? e.to : e.from);
          if (pot.count(v)) continue;
          pot[v] = fwddir ? pot[u] * e.expo : pot[u] / e.expo;
          via[v] = {k, fwddir};
          queue.push_back(v);
        }
      }
      std::string tkey = face_key(ec.to);
      if (!pot.count(tkey))
        throw NotADiffeo("boundary gluing graph of component '" + bc.id + "' is disconnected");
      // path edges from the closing edge's source to its target
      std::vector<int> path;
      for (std::string v = tkey; v != face_key(ec.from);) {
        auto [k, fwddir] = via.at(v);
        path.push_back(k);
        const auto& e = edges[static_cast<std::size_t>(k)];
        v = face_key(fwddir ? e.from : e.to);
      }
      std::reverse(path.begin(), path.end());
      for (int k : path) detail::require_face_diffeo(a, edges[static_cast<std::size_t>(k)]);
      detail::require_face_diffeo(a, ec);
      for (int k : path) hc.cycle.push_back(detail::edge_label(a, edges[static_cast<std::size_t>(k)]));
      hc.cycle.push_back(detail::edge_label(a, ec));
      hc.holonomy = ec.expo / pot.at(tkey);
      hc.twisted = !(hc.holonomy == Rational(1));
    }
    rep.components.push_back(std::move(hc));
  }
  return rep;
}

struct WeightSpace {
  std::vector<std::string> untwisted;  // components admitting an arbitrary weight
  std::vector<std::string> twisted;    // components pinned to weight 0
  int dim() const { return static_cast<int>(untwisted.size()); }
};

inline WeightSpace weight_space(const Atlas& a) {
  WeightSpace ws;
  for (const auto& c : boundary_holonomy(a).components)
    (c.twisted ? ws.twisted : ws.untwisted).push_back(c.id);
  return ws;
}

// A weight assigns a rational exponent to every boundary component.  Twisted
// components only carry the zero weight; nonzero requests are coerced with a
// note rather than rejected.
struct Weight {
  std::map<std::string, Rational> lambda;
  std::vector<std::string> notes;
};

inline Weight make_weight(const Atlas& a, const std::map<std::string, Rational>& values) {
  HolonomyReport rep = boundary_holonomy(a);
  Weight w;
  for (const auto& c : rep.components) {
    auto it = values.find(c.id);
    Rational v = it == values.end() ? Rational(0) : it->second;
    if (c.twisted && !(v == Rational(0))) {
      w.notes.push_back("weight on twisted component '" + c.id + "' forced to 0");
      v = Rational(0);
    }
    w.lambda[c.id] = v;
  }
  for (const auto& [id, v] : values)
    if (!w.lambda.count(id)) throw DomainError("unknown boundary component '" + id + "'");
  return w;
}

// Pullback along an interior map: f*(lambda)_i = sum_j a_ij lambda_j, with
// a_ij the leading exponent of component j at source face i.
inline std::vector<Rational> pullback_weight(ChartedMap& f, const std::vector<Rational>& lambda,
                                             int order = 6) {
  MapFlags fl = classify_map(f, order);
  if (!fl.interior) throw NotInterior("weights only pull back along interior maps");
  if (lambda.size() != static_cast<std::size_t>(f.target.depth))
    throw DomainError("weight count does not match the target boundary depth");
  std::vector<Rational> out(static_cast<std::size_t>(f.source.depth), Rational(0));
  for (int i = 1; i <= f.source.depth; ++i)
    for (int j = 1; j <= f.target.depth; ++j)
      out[static_cast<std::size_t>(i - 1)] +=
          f.factored[static_cast<std::size_t>(j - 1)].exponents[static_cast<std::size_t>(i - 1)] *
          lambda[static_cast<std::size_t>(j - 1)];
  return out;
}

// Pushforward along a b-normal interior map: the largest target weight whose
// pullback stays below the source one, (f_* lambda)_j = min over faces i
// hitting j of lambda_i / a_ij.
inline std::vector<Rational> pushforward_weight(ChartedMap& f, const std::vector<Rational>& lambda,
                                                int order = 6) {
  MapFlags fl = classify_map(f, order);
  if (!fl.interior) throw NotInterior("weights only push forward along interior maps");
  if (!fl.b_normal) throw NotBNormal("weight pushforward needs a b-normal map");
  if (lambda.size() != static_cast<std::size_t>(f.source.depth))
    throw DomainError("weight count does not match the source boundary depth");
  std::vector<Rational> out(static_cast<std::size_t>(f.target.depth), Rational(0));
  for (int j = 1; j <= f.target.depth; ++j) {
    bool any = false;
    Rational best(0);
    for (int i = 1; i <= f.source.depth; ++i) {
      Rational aij =
          f.factored[static_cast<std::size_t>(j - 1)].exponents[static_cast<std::size_t>(i - 1)];
      if (!aij.is_positive()) continue;
      Rational cand = lambda[static_cast<std::size_t>(i - 1)] / aij;
      if (!any || cand < best) best = cand;
      any = true;
    }
    if (!any)
      throw DomainError("no source face reaches target face " + std::to_string(j) +
                        "; the pushforward weight is unconstrained there");
    out[static_cast<std::size_t>(j - 1)] = best;
  }
  return out;
}

// Transition function of the weighted line bundle over one overlap, written
// in source coordinates, together with the faces on which its boundary
// exponent was certified to vanish.
struct CocycleEntry {
  int transition = 0;
  std::string label;
  ExprPtr factor;
  std::vector<int> faces;
};

struct LineBundleTransitions {
  std::vector<CocycleEntry> entries;
  int triple_points = 0;      // samples where the cocycle identity was tested
  double triple_error = 0.0;  // worst relative defect over those samples
};

// Cocycles of the line bundle attached to a weight.  Each overlap compares
// the source trivialization against the target one and contributes
// prod_i x_i^{lambda_i(source)} * prod_j f_j^{-lambda_j(target)}; weight
// consistency across the overlap makes every boundary exponent vanish, which
// is certified through the series expansion at each glued face.  Wherever
// three charts overlap, the multiplicative cocycle identity is sampled
// numerically.
inline LineBundleTransitions l_lambda_transitions(const Atlas& a, const Weight& w, int order = 6,
                                                  double tol = 1e-8) {
  auto comps = boundary_components(a);
  std::map<std::string, std::string> cid;
  for (const auto& bc : comps)
    for (const FaceRef& f : bc.members) cid[face_key(f)] = bc.id;
  auto lam = [&](const std::string& chart, int var) {
    auto it = w.lambda.find(cid.at(boundary_chart_id(chart, var)));
    return it == w.lambda.end() ? Rational(0) : it->second;
  };

  LineBundleTransitions out;
  for (int ti = 0; ti < static_cast<int>(a.transitions.size()); ++ti) {
    const Transition& t = a.transitions[static_cast<std::size_t>(ti)];
    const Chart& src = a.chart(t.source);
    const Chart& tgt = a.chart(t.target);
    ChartedMap tm = transition_map(a, t);
    auto fact = factor_components(tm, order);
    for (int i = 1; i <= src.depth; ++i) {
      if (t.overlap[static_cast<std::size_t>(i - 1)].lo != 0.0) continue;
      Rational need(0);
      for (int j = 1; j <= tgt.depth; ++j) {
        if (fact[static_cast<std::size_t>(j - 1)].zero)
          throw NotADiffeo("transition " + t.source + "->" + t.target +
                           " has a vanishing component");
        need += fact[static_cast<std::size_t>(j - 1)].exponents[static_cast<std::size_t>(i - 1)] *
                lam(t.target, j);
      }
      if (!(need == lam(t.source, i)))
        throw WeightInconsistent("weight mismatch across " + t.source + "->" + t.target +
                                 " at face " + std::to_string(i) + ": " + lam(t.source, i).str() +
                                 " vs " + need.str());
    }

    CocycleEntry entry;
    entry.transition = ti;
    entry.label = "t" + std::to_string(ti) + ":" + t.source + "->" + t.target;
    std::vector<ExprPtr> facs;
    for (int i = 1; i <= src.depth; ++i) {
      Rational li = lam(t.source, i);
      if (li == Rational(0)) continue;
      facs.push_back(pow_var(i, li));
    }
    for (int j = 1; j <= tgt.depth; ++j) {
      Rational lj = lam(t.target, j);
      if (lj == Rational(0)) continue;
      facs.push_back(rpow(tm.components[static_cast<std::size_t>(j - 1)], Rational(0) - lj, true));
    }
    entry.factor = facs.empty() ? num(1) : simplify(mul(std::move(facs)));
    for (int i = 1; i <= src.depth; ++i) {
      if (t.overlap[static_cast<std::size_t>(i - 1)].lo != 0.0) continue;
      LeadingBehavior lb = leading_behavior(entry.factor, i, src.model(), /*verify=*/false);
      if (lb.zero || !(lb.alpha == Rational(0)) || lb.b != 0)
        throw WeightInconsistent("cocycle of " + entry.label +
                                 " keeps a boundary factor at face " + std::to_string(i));
      entry.faces.push_back(i);
    }
    out.entries.push_back(std::move(entry));
  }

  // Cocycle identity over triple overlaps: c_XZ = (c_YZ o t_XY) * c_XY.
  for (const auto& e1 : out.entries) {
    const Transition& t1 = a.transitions[static_cast<std::size_t>(e1.transition)];
    for (const auto& e3 : out.entries) {
      const Transition& t3 = a.transitions[static_cast<std::size_t>(e3.transition)];
      if (e3.transition == e1.transition || t3.source != t1.source) continue;
      for (const auto& e2 : out.entries) {
        const Transition& t2 = a.transitions[static_cast<std::size_t>(e2.transition)];
        if (t2.source != t1.target || t2.target != t3.target) continue;
        std::vector<Interval> box(t1.overlap.size());
        bool empty = false;
        for (std::size_t v = 0; v < box.size(); ++v) {
          box[v] = {std::max(t1.overlap[v].lo, t3.overlap[v].lo),
                    std::min(t1.overlap[v].hi, t3.overlap[v].hi)};
          if (!(box[v].lo < box[v].hi)) empty = true;
        }
        if (empty) continue;
        for (const auto& p : sample_box(box, 16, 0.05)) {
          std::vector<double> q = eval_map(t1.fwd, p);
          bool inside = true;
          for (std::size_t v = 0; v < q.size(); ++v)
            if (q[v] < t2.overlap[v].lo - 1e-12 || q[v] > t2.overlap[v].hi + 1e-12) inside = false;
          if (!inside) continue;
          double c1 = eval(e1.factor, p);
          double c2 = eval(e2.factor, q);
          double c3 = eval(e3.factor, p);
          double err = std::abs(c3 - c2 * c1) / std::max(1.0, std::abs(c3));
          out.triple_error = std::max(out.triple_error, err);
          ++out.triple_points;
          if (err > tol)
            throw WeightInconsistent("cocycle identity fails numerically on " + e1.label + ", " +
                                     e2.label + ", " + e3.label);
        }
      }
    }
  }
  return out;
}

}  // namespace bcw
