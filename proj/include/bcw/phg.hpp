#pragma once
// Index sets of polyhomogeneous expansions at boundary faces and their
// transport along maps: pullback multiplies exponents by the factorization
// matrix and adds log powers across contributing faces; pushforward along a
// b-fibration rescales each contributing face's set and merges them with the
// extended union, where matching exponents from different faces pick up one
// extra log power.

#include <algorithm>
#include <optional>
#include <utility>
#include <vector>

#include "bcw/atlas.hpp"
#include "bcw/errors.hpp"
#include "bcw/rational.hpp"

namespace bcw {

struct IndexPair {
  Rational alpha;  // exponent
  int logs = 0;    // power of log
  friend bool operator==(const IndexPair& a, const IndexPair& b) {
    return a.alpha == b.alpha && a.logs == b.logs;
  }
};

// Finite exponent/log-power set, truncated above alpha_max.  Kept canonical:
// sorted by exponent with a single entry per exponent carrying the largest
// log power (smaller powers at the same exponent are implicitly allowed).
struct IndexSet {
  std::vector<IndexPair> pairs;
  Rational alpha_max{10};

  IndexSet() = default;
  IndexSet(std::initializer_list<IndexPair> init, Rational cap = Rational(10))
      : alpha_max(std::move(cap)) {
    for (const auto& p : init) insert(p.alpha, p.logs);
  }

  void insert(const Rational& alpha, int logs) {
    if (logs < 0) throw DomainError("negative log power in an index set");
    if (alpha_max < alpha) return;
    auto it = std::lower_bound(pairs.begin(), pairs.end(), alpha,
                               [](const IndexPair& p, const Rational& a) { return p.alpha < a; });
    if (it != pairs.end() && it->alpha == alpha)
      it->logs = std::max(it->logs, logs);
    else
      pairs.insert(it, {alpha, logs});
  }

  bool empty() const { return pairs.empty(); }
  std::optional<IndexPair> leading() const {
    if (pairs.empty()) return std::nullopt;
    return pairs.front();
  }
  friend bool operator==(const IndexSet& a, const IndexSet& b) { return a.pairs == b.pairs; }
};

// True when an expansion with this index set stays inside the weight-lambda
// space: every listed pair either sits exactly at the weight with no log or
// strictly above it.
inline bool phg_to_weight_bound(const IndexSet& s, const Rational& lambda) {
  for (const auto& p : s.pairs) {
    if (p.alpha == lambda && p.logs == 0) continue;
    if (!(lambda < p.alpha)) return false;
  }
  return true;
}

namespace detail {

inline void pullback_choices(const std::vector<std::pair<Rational, const IndexSet*>>& contrib,
                             std::size_t at, const Rational& alpha, int logs, IndexSet& out) {
  if (at == contrib.size()) {
    out.insert(alpha, logs);
    return;
  }
  for (const auto& p : contrib[at].second->pairs)
    pullback_choices(contrib, at + 1, alpha + contrib[at].first * p.alpha, logs + p.logs, out);
}

// Extended union: plain union, except that a common exponent contributed by
// both operands gains one extra log power over the sum of the two.
inline IndexSet extended_union(const IndexSet& a, const IndexSet& b) {
  IndexSet out;
  out.alpha_max = a.alpha_max;
  for (const auto& p : a.pairs) {
    auto it = std::find_if(b.pairs.begin(), b.pairs.end(),
                           [&](const IndexPair& q) { return q.alpha == p.alpha; });
    if (it == b.pairs.end())
      out.insert(p.alpha, p.logs);
    else
      out.insert(p.alpha, p.logs + it->logs + 1);
  }
  for (const auto& q : b.pairs) {
    bool shared = false;
    for (const auto& p : a.pairs)
      if (p.alpha == q.alpha) shared = true;
    if (!shared) out.insert(q.alpha, q.logs);
  }
  return out;
}

}  // namespace detail

// Pullback along an interior map: source face i collects one pair from each
// target face j it maps into (a_ij > 0), with exponents combined through the
// factorization matrix and log powers added.  Faces mapping into the target
// interior receive the empty set.
inline std::vector<IndexSet> pullback_index(ChartedMap& f, const std::vector<IndexSet>& target,
                                            int order = 6) {
  MapFlags fl = classify_map(f, order);
  if (!fl.interior) throw NotInterior("index sets only pull back along interior maps");
  if (target.size() != static_cast<std::size_t>(f.target.depth))
    throw DomainError("index set count does not match the target boundary depth");
  std::vector<IndexSet> out(static_cast<std::size_t>(f.source.depth));
  for (int i = 1; i <= f.source.depth; ++i) {
    IndexSet& s = out[static_cast<std::size_t>(i - 1)];
    if (!target.empty()) s.alpha_max = target.front().alpha_max;
    std::vector<std::pair<Rational, const IndexSet*>> contrib;
    for (int j = 1; j <= f.target.depth; ++j) {
      const Rational& a =
          f.factored[static_cast<std::size_t>(j - 1)].exponents[static_cast<std::size_t>(i - 1)];
      if (a.is_positive()) contrib.push_back({a, &target[static_cast<std::size_t>(j - 1)]});
    }
    if (contrib.empty()) continue;  // face maps to the target interior
    detail::pullback_choices(contrib, 0, Rational(0), 0, s);
  }
  return out;
}

// Pushforward along a b-fibration: target face j merges the contributing
// source sets, each rescaled by its exponent, through the extended union.
// Source faces fibering over the target interior must carry strictly
// positive exponents for the fiber integral to converge.
inline std::vector<IndexSet> pushforward_index(ChartedMap& f, const std::vector<IndexSet>& source,
                                               int order = 6) {
  MapFlags fl = classify_map(f, order);
  if (!fl.interior) throw NotInterior("index sets only push forward along interior maps");
  if (!fl.b_normal) throw NotBNormal("index set pushforward needs a b-normal map");
  if (source.size() != static_cast<std::size_t>(f.source.depth))
    throw DomainError("index set count does not match the source boundary depth");
  for (int i = 1; i <= f.source.depth; ++i) {
    bool interior_fiber = true;
    for (int j = 1; j <= f.target.depth; ++j)
      if (f.factored[static_cast<std::size_t>(j - 1)]
              .exponents[static_cast<std::size_t>(i - 1)]
              .is_positive())
        interior_fiber = false;
    if (!interior_fiber) continue;
    for (const auto& p : source[static_cast<std::size_t>(i - 1)].pairs)
      if (!p.alpha.is_positive())
        throw PositivityViolated("face " + std::to_string(i) +
                                 " fibers over the target interior but its expansion does not "
                                 "vanish at the face");
  }
  std::vector<IndexSet> out(static_cast<std::size_t>(f.target.depth));
  for (int j = 1; j <= f.target.depth; ++j) {
    IndexSet& s = out[static_cast<std::size_t>(j - 1)];
    if (!source.empty()) s.alpha_max = source.front().alpha_max;
    bool first = true;
    for (int i = 1; i <= f.source.depth; ++i) {
      const Rational& a =
          f.factored[static_cast<std::size_t>(j - 1)].exponents[static_cast<std::size_t>(i - 1)];
      if (!a.is_positive()) continue;
      IndexSet scaled;
      scaled.alpha_max = s.alpha_max;
      for (const auto& p : source[static_cast<std::size_t>(i - 1)].pairs)
        scaled.insert(p.alpha / a, p.logs);
      if (first) {
        s = scaled;
        first = false;
      } else {
        s = detail::extended_union(s, scaled);
      }
    }
  }
  return out;
}

}  // namespace bcw
