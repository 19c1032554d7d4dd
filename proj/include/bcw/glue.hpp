#pragma once
// Gluing profile between the two corner geometries: the substitution
// x = phi(x~) with phi(x) = e^{x - 1/x} turns charts with analytic corners
// into ordinary ones.  Transformed maps are evaluated through their
// monomial-times-positive-factor form so the composition stays accurate far
// below the underflow threshold of phi itself, and one-sided finite
// differences probe whether a transformed map is consistent with smoothness
// at a boundary point.

#include <cmath>
#include <string>
#include <vector>

#include "bcw/atlas.hpp"
#include "bcw/errors.hpp"
#include "bcw/expr.hpp"
#include "bcw/rational.hpp"

namespace bcw {

inline double phi(double x) {
  if (x < 0.0 || std::isnan(x)) throw DomainError("phi needs a nonnegative argument");
  if (x == 0.0) return 0.0;
  return std::exp(x - 1.0 / x);
}

namespace detail {

// Inverse profile from the logarithm of the argument: the positive root of
// u - 1/u = L.  The two algebraically equal forms trade cancellation, so
// each sign of L gets the stable one.
inline double phi_inv_log(double L) {
  if (std::isinf(L)) return L < 0 ? 0.0 : L;
  double r = std::sqrt(L * L + 4.0);
  return L > 0 ? (L + r) / 2.0 : 2.0 / (r - L);
}

}  // namespace detail

inline double phi_inv(double x) {
  if (x < 0.0 || std::isnan(x)) throw DomainError("phi_inv needs a nonnegative argument");
  if (x == 0.0) return 0.0;
  return detail::phi_inv_log(std::log(x));
}

// A map conjugated by the gluing profile: phi_inv o f o phi on boundary
// coordinates, the identity substitution elsewhere.  Components with a
// certified factorization evaluate in log space, which keeps them exact
// when phi(x) underflows.
struct GlueTransform {
  ChartedMap map;
  std::vector<FactoredComponent> factored;  // per target boundary coordinate
  bool exact = false;                       // factored evaluation available

  double component(int j, const std::vector<double>& xt) const {
    const Chart& S = map.source;
    const Chart& T = map.target;
    if (j < 1 || j > T.dim) throw DomainError("component index out of range");
    std::vector<double> p(xt);
    for (int i = 1; i <= S.depth; ++i)
      p[static_cast<std::size_t>(i - 1)] = phi(xt[static_cast<std::size_t>(i - 1)]);
    if (j > T.depth) return eval(map.components[static_cast<std::size_t>(j - 1)], p);
    if (!exact) return phi_inv(eval(map.components[static_cast<std::size_t>(j - 1)], p));
    const FactoredComponent& fc = factored[static_cast<std::size_t>(j - 1)];
    if (fc.zero) return 0.0;
    double L = std::log(eval(fc.factor, p));
    for (int i = 1; i <= S.depth; ++i) {
      const Rational& a = fc.exponents[static_cast<std::size_t>(i - 1)];
      if (a == Rational(0)) continue;
      double x = xt[static_cast<std::size_t>(i - 1)];
      L += a.to_double() * (x - 1.0 / x);  // log phi, -inf at the face itself
    }
    return detail::phi_inv_log(L);
  }

  std::vector<double> operator()(const std::vector<double>& xt) const {
    std::vector<double> out(static_cast<std::size_t>(map.target.dim));
    for (int j = 1; j <= map.target.dim; ++j)
      out[static_cast<std::size_t>(j - 1)] = component(j, xt);
    return out;
  }
};

inline GlueTransform transform_map(ChartedMap f, bool require_strongly_smooth = false,
                                   int order = 6) {
  GlueTransform t;
  if (require_strongly_smooth) {
    MapFlags fl = classify_map(f, order);
    if (!fl.strongly_smooth)
      throw NotStronglySmooth("the gluing functor only acts on strongly smooth maps");
    t.factored = f.factored;
    t.exact = true;
  } else {
    try {
      t.factored = factor_components(f, order);
      t.exact = true;
    } catch (const Error&) {
      t.exact = false;  // fall back to direct numeric composition
    }
  }
  t.map = std::move(f);
  return t;
}

enum class ProbeVerdict { SmoothConsistent, NonSmoothDetected };

// Finite-difference history of one mixed derivative of one component.
struct DerivativeTrace {
  int component = 1;
  std::vector<int> beta;  // derivative multi-index over the probed directions
  std::vector<int> octaves;
  std::vector<double> estimates;  // estimate at step h = 2^{-n} per octave
  bool converged = false;
  bool diverged = false;
  double final_estimate = 0.0;
};

struct ProbeReport {
  ProbeVerdict verdict = ProbeVerdict::SmoothConsistent;
  std::vector<int> directions;  // probed source coordinates
  std::vector<DerivativeTrace> traces;
};

namespace detail {

inline void enumerate_multi_indices(int slots, int order, std::vector<int>& cur,
                                    std::vector<std::vector<int>>& out) {
  if (slots == 0) {
    int total = 0;
    for (int b : cur) total += b;
    if (total >= 1) out.push_back(cur);
    return;
  }
  for (int b = 0; b <= order; ++b) {
    cur.push_back(b);
    int total = 0;
    for (int v : cur) total += v;
    if (total <= order) enumerate_multi_indices(slots - 1, order, cur, out);
    cur.pop_back();
  }
}

// One-sided mixed forward difference of the component at the point, with
// step h in every probed direction carrying a positive index.
inline double forward_difference(const GlueTransform& t, int comp, const std::vector<double>& base,
                                 const std::vector<int>& dirs, const std::vector<int>& beta,
                                 double h) {
  std::vector<int> k(beta.size(), 0);
  double acc = 0.0;
  while (true) {
    std::vector<double> p = base;
    int parity = 0;
    double weight = 1.0;
    for (std::size_t m = 0; m < beta.size(); ++m) {
      p[static_cast<std::size_t>(dirs[m] - 1)] += h * k[m];
      parity += beta[m] - k[m];
      // binomial C(beta_m, k_m)
      double c = 1.0;
      for (int r = 0; r < k[m]; ++r) c = c * (beta[m] - r) / (r + 1);
      weight *= c;
    }
    acc += (parity % 2 ? -1.0 : 1.0) * weight * t.component(comp, p);
    std::size_t m = 0;
    while (m < k.size() && k[m] == beta[m]) k[m++] = 0;
    if (m == k.size()) break;
    ++k[m];
  }
  return acc;
}

}  // namespace detail

// Probe smoothness of the transformed map at a boundary point by one-sided
// finite differences on geometric grids h = 2^{-n}.  Estimates that settle
// within the octave-to-octave tolerance are consistent with smoothness;
// sustained monotone growth marks a detected non-smoothness.  Grids for
// higher derivatives stop early so roundoff in the h^{-|beta|} scaling never
// exceeds the tolerance.
inline ProbeReport smoothness_probe(const GlueTransform& t, const std::vector<double>& point,
                                    int order = 2, double tol = 1e-3) {
  if (point.size() != static_cast<std::size_t>(t.map.source.dim))
    throw DomainError("probe point has the wrong dimension");
  ProbeReport rep;
  for (int i = 1; i <= t.map.source.depth; ++i)
    if (point[static_cast<std::size_t>(i - 1)] == 0.0) rep.directions.push_back(i);
  if (rep.directions.empty())
    throw DomainError("probe point does not lie on a boundary face");
  if (order < 1) throw DomainError("derivative order must be positive");

  std::vector<std::vector<int>> betas;
  std::vector<int> cur;
  detail::enumerate_multi_indices(static_cast<int>(rep.directions.size()), order, cur, betas);

  for (int comp = 1; comp <= t.map.target.dim; ++comp) {
    for (const auto& beta : betas) {
      DerivativeTrace tr;
      tr.component = comp;
      tr.beta = beta;
      int k = 0;
      for (int b : beta) k += b;
      int n_hi = std::min(24, 43 / k);  // keep 2^{kn} * eps below tol
      for (int n = 8; n <= n_hi; ++n) {
        double h = std::ldexp(1.0, -n);
        double d = detail::forward_difference(t, comp, point, rep.directions, beta, h);
        tr.octaves.push_back(n);
        tr.estimates.push_back(d / std::pow(h, k));
      }
      // longest run of octave pairs within tolerance
      int run = 0, best = 0;
      std::size_t best_end = 0;
      for (std::size_t m = 1; m < tr.estimates.size(); ++m) {
        double a = tr.estimates[m - 1], b = tr.estimates[m];
        if (std::abs(b - a) <= tol * std::max(1.0, std::abs(b)))
          ++run;
        else
          run = 0;
        if (run >= best) {
          best = run;
          best_end = m;
        }
      }
      tr.converged = best >= std::min<int>(3, static_cast<int>(tr.estimates.size()) - 1);
      tr.final_estimate = tr.estimates.empty() ? 0.0 : tr.estimates[best_end];
      // sustained monotone growth, each step large enough that it cannot be
      // roundoff drift inside the Cauchy tolerance
      int grow = 0;
      for (std::size_t m = 1; m < tr.estimates.size(); ++m) {
        double a = tr.estimates[m - 1], b = tr.estimates[m];
        if (std::abs(b) > std::abs(a) && std::abs(b - a) > tol * std::max(1.0, std::abs(b)))
          ++grow;
        else
          grow = 0;
        if (grow >= 6 && std::abs(b) > 1e-6 &&
            std::abs(b) >= 4.0 * std::abs(tr.estimates[m - static_cast<std::size_t>(grow)]))
          tr.diverged = true;
      }
      if (tr.diverged || !tr.converged) rep.verdict = ProbeVerdict::NonSmoothDetected;
      rep.traces.push_back(std::move(tr));
    }
  }
  return rep;
}

}  // namespace bcw
