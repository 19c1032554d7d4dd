#pragma once
// Elliptic b-operators in one dimension: P = sum_j c_j v^j with v =
// x(1-x) d/dx on the unit interval, which carries a boundary face at each
// end.  Indicial roots and excluded weights come from the boundary-frozen
// polynomial; kernel, cokernel and index on weighted spaces come from
// Chebyshev collocation on the cylinder coordinate t = log(x/(1-x)), where
// v turns into d/dt exactly.  The same singular-value machinery serves the
// model cohomology computations at the end of the file.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bcw/bderiv.hpp"
#include "bcw/classify.hpp"
#include "bcw/errors.hpp"
#include "bcw/expr.hpp"
#include "bcw/leading.hpp"
#include "bcw/model.hpp"
#include "bcw/normal.hpp"

namespace bcw {

struct BOperator1D {
  int order = 1;                // l >= 1
  std::vector<ExprPtr> coeffs;  // c_0 .. c_l, functions of x on [0,1]
};

// v applied to an expression: x(1-x) times the ordinary derivative.
inline ExprPtr apply_v(const ExprPtr& e) {
  return mul(mul(var(1), sub(num(1), var(1))), d_ordinary(e, 1));
}

namespace detail {

inline ExprPtr flip_unit_interval(const ExprPtr& e) {
  return substitute(e, {sub(num(1), var(1))});
}

// Continuous extension of an a-smooth function to an endpoint of [0,1].
inline double boundary_value(const ExprPtr& e, int face) {
  if (face != 0 && face != 1) throw DomainError("interval faces are 0 and 1");
  ExprPtr g = face == 0 ? e : flip_unit_interval(e);
  double direct = eval(g, {0.0});
  if (std::isfinite(direct)) return direct;
  LeadingBehavior lb = leading_behavior(g, 1, LocalModel{1, 1}, false);
  if (lb.zero || Rational(0) < lb.alpha) return 0.0;
  if (lb.alpha == Rational(0)) {
    if (lb.b < 0 || (lb.b == 0 && lb.c < 0)) return 0.0;
    if (lb.b == 0 && lb.c == 0 && !lb.osc) return eval(lb.coeff, {0.5});
  }
  throw DomainError("coefficient has no finite boundary value at face " + std::to_string(face));
}

}  // namespace detail

inline void validate_boperator(const BOperator1D& P, int order = 4) {
  if (P.order < 1) throw DomainError("operator order must be at least 1");
  if (P.coeffs.size() != static_cast<std::size_t>(P.order) + 1)
    throw DomainError("operator needs order+1 coefficients");
  for (const auto& c : P.coeffs) {
    if (classify_function(c, LocalModel{1, 1}, order).overall != SmoothClass::ASmooth)
      throw DomainError("coefficient is not a-smooth at x = 0");
    if (classify_function(detail::flip_unit_interval(c), LocalModel{1, 1}, order).overall !=
        SmoothClass::ASmooth)
      throw DomainError("coefficient is not a-smooth at x = 1");
  }
  const ExprPtr& cl = P.coeffs.back();
  for (int k = 0; k <= 200; ++k) {
    double x = static_cast<double>(k) / 200.0;
    double v = (k == 0)   ? detail::boundary_value(cl, 0)
               : (k == 200) ? detail::boundary_value(cl, 1)
                            : eval(cl, {x});
    if (!(std::abs(v) > 1e-9))
      throw NotElliptic("leading coefficient vanishes near x = " + std::to_string(x));
  }
}

inline BOperator1D make_boperator(int order, std::vector<ExprPtr> coeffs, int check_order = 4) {
  BOperator1D P{order, std::move(coeffs)};
  validate_boperator(P, check_order);
  return P;
}

// Formal adjoint with respect to the b-density dx/(x(1-x)), under which v
// is skew: the coefficients follow from commuting powers of v past c_j.
inline BOperator1D formal_adjoint(const BOperator1D& P, int check_order = 4) {
  int l = P.order;
  std::vector<ExprPtr> cs(static_cast<std::size_t>(l) + 1);
  for (int i = 0; i <= l; ++i) {
    std::vector<ExprPtr> terms;
    for (int j = i; j <= l; ++j) {
      long long binom = 1;
      for (int r = 0; r < i; ++r) binom = binom * (j - r) / (r + 1);
      ExprPtr t = P.coeffs[static_cast<std::size_t>(j)];
      for (int r = 0; r < j - i; ++r) t = apply_v(t);
      long long sign = (j % 2 == 0) ? 1 : -1;
      terms.push_back(mul(num(sign * binom), std::move(t)));
    }
    cs[static_cast<std::size_t>(i)] = simplify(add(std::move(terms)));
  }
  return make_boperator(l, std::move(cs), check_order);
}

// Roots of the indicial polynomial at a face, with multiplicity.  At x = 1
// the interval's boundary coordinate is 1-x and v acts as minus the
// b-derivative there, so odd-degree coefficients change sign.
inline std::vector<std::complex<double>> indicial_roots(const BOperator1D& P, int face) {
  int l = P.order;
  std::vector<double> a(static_cast<std::size_t>(l) + 1);
  for (int j = 0; j <= l; ++j) {
    double c = detail::boundary_value(P.coeffs[static_cast<std::size_t>(j)], face);
    a[static_cast<std::size_t>(j)] = (face == 1 && j % 2 == 1) ? -c : c;
  }
  if (std::abs(a[static_cast<std::size_t>(l)]) < 1e-12)
    throw NotElliptic("indicial polynomial degenerates at face " + std::to_string(face));
  std::vector<std::complex<double>> roots;
  if (l == 1) {
    roots.push_back({-a[0] / a[1], 0.0});
  } else if (l == 2) {
    std::complex<double> disc(a[1] * a[1] - 4.0 * a[2] * a[0], 0.0);
    std::complex<double> s = std::sqrt(disc);
    roots.push_back((-a[1] + s) / (2.0 * a[2]));
    roots.push_back((-a[1] - s) / (2.0 * a[2]));
  } else {
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(l, l);
    for (int r = 1; r < l; ++r) C(r, r - 1) = 1.0;
    for (int r = 0; r < l; ++r) C(r, l - 1) = -a[static_cast<std::size_t>(r)] / a[static_cast<std::size_t>(l)];
    Eigen::EigenSolver<Eigen::MatrixXd> ev(C);
    for (int r = 0; r < l; ++r) roots.push_back(ev.eigenvalues()(r));
  }
  std::sort(roots.begin(), roots.end(), [](const auto& u, const auto& v) {
    if (u.real() != v.real()) return u.real() < v.real();
    return u.imag() < v.imag();
  });
  return roots;
}

struct ExcludedWeights {
  std::vector<double> face0, face1;  // sorted, deduplicated real parts
};

inline ExcludedWeights excluded_weights(const BOperator1D& P) {
  ExcludedWeights D;
  for (int face = 0; face < 2; ++face) {
    std::vector<double> re;
    for (const auto& r : indicial_roots(P, face)) re.push_back(r.real());
    std::sort(re.begin(), re.end());
    re.erase(std::unique(re.begin(), re.end(),
                         [](double u, double v) { return std::abs(u - v) < 1e-9; }),
             re.end());
    (face == 0 ? D.face0 : D.face1) = std::move(re);
  }
  return D;
}

namespace detail {

struct ChebGrid {
  std::vector<double> t;  // Chebyshev-Lobatto nodes, ascending on [-T, T]
  std::vector<double> w;  // barycentric weights
};

inline ChebGrid cheb_grid(int n, double T) {
  const double pi = std::acos(-1.0);
  ChebGrid g;
  g.t.resize(static_cast<std::size_t>(n));
  g.w.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    g.t[static_cast<std::size_t>(k)] = -T * std::cos(pi * k / (n - 1));
    double w = (k % 2 == 0) ? 1.0 : -1.0;
    if (k == 0 || k == n - 1) w *= 0.5;
    g.w[static_cast<std::size_t>(k)] = w;
  }
  g.t.front() = -T;
  g.t.back() = T;
  return g;
}

inline Eigen::MatrixXd diff_matrix(const ChebGrid& g) {
  int n = static_cast<int>(g.t.size());
  Eigen::MatrixXd D(n, n);
  for (int i = 0; i < n; ++i) {
    double rowsum = 0.0;
    for (int j = 0; j < n; ++j) {
      if (i == j) continue;
      double d = (g.w[static_cast<std::size_t>(j)] / g.w[static_cast<std::size_t>(i)]) /
                 (g.t[static_cast<std::size_t>(i)] - g.t[static_cast<std::size_t>(j)]);
      D(i, j) = d;
      rowsum += d;
    }
    D(i, i) = -rowsum;
  }
  return D;
}

// Barycentric interpolation from the grid to arbitrary points.
inline Eigen::MatrixXd resample_matrix(const ChebGrid& g, const std::vector<double>& y) {
  int n = static_cast<int>(g.t.size());
  int m = static_cast<int>(y.size());
  Eigen::MatrixXd B = Eigen::MatrixXd::Zero(m, n);
  double span = g.t.back() - g.t.front();
  for (int i = 0; i < m; ++i) {
    int hit = -1;
    for (int k = 0; k < n; ++k)
      if (std::abs(y[static_cast<std::size_t>(i)] - g.t[static_cast<std::size_t>(k)]) <
          1e-14 * span) {
        hit = k;
        break;
      }
    if (hit >= 0) {
      B(i, hit) = 1.0;
      continue;
    }
    double denom = 0.0;
    for (int k = 0; k < n; ++k) {
      double c = g.w[static_cast<std::size_t>(k)] /
                 (y[static_cast<std::size_t>(i)] - g.t[static_cast<std::size_t>(k)]);
      B(i, k) = c;
      denom += c;
    }
    B.row(i) /= denom;
  }
  return B;
}

struct WeightedSystem {
  Eigen::MatrixXd A;      // rectangular collocation + decay rows
  std::vector<double> t;  // grid nodes
  std::vector<double> x;  // x(t) on the grid
  double truncation = 0;
  int k_left = 0, k_right = 0;
};

// Decay conditions are point rows at nodes spread a few units apart so the
// conditions stay independent even on clustered Chebyshev endpoints.
inline std::vector<int> decay_nodes(const std::vector<double>& t, int count, bool left) {
  std::vector<int> idx;
  int n = static_cast<int>(t.size());
  for (int b = 0; b < count; ++b) {
    int i;
    if (left) {
      double target = t.front() + 2.0 * b;
      i = static_cast<int>(std::lower_bound(t.begin(), t.end(), target) - t.begin());
    } else {
      double target = t.back() - 2.0 * b;
      i = static_cast<int>(std::lower_bound(t.begin(), t.end(), target) - t.begin());
      if (i >= n) i = n - 1;
    }
    while (std::find(idx.begin(), idx.end(), i) != idx.end()) i += left ? 1 : -1;
    idx.push_back(i);
  }
  return idx;
}

inline WeightedSystem build_weighted_system(const BOperator1D& P, double lambda0, double lambda1,
                                            int grid_n, double truncation) {
  const double pi = std::acos(-1.0);
  int l = P.order;
  ExcludedWeights D = excluded_weights(P);
  double gap = std::numeric_limits<double>::infinity();
  for (double d : D.face0) gap = std::min(gap, std::abs(lambda0 - d));
  for (double d : D.face1) gap = std::min(gap, std::abs(lambda1 - d));
  if (gap < 1e-3)
    throw NotFredholm("weight within 1e-3 of an excluded value");
  double T = truncation > 0 ? truncation : std::clamp(18.0 / gap, 40.0, 140.0);
  double rate = 1.0 + std::max(std::abs(lambda0), std::abs(lambda1));
  for (int face = 0; face < 2; ++face)
    for (const auto& r : indicial_roots(P, face)) rate = std::max(rate, 1.0 + std::abs(r));
  int n = grid_n > 0 ? grid_n
                     : std::clamp(static_cast<int>(1.3 * T * rate) + 40, 160, 420);
  if (n < l + 10) throw DomainError("grid too small for the operator order");

  int n_left = 0, n_right = 0;  // allowed (decaying) asymptotic modes per end
  for (const auto& r : indicial_roots(P, 0))
    if (r.real() > lambda0) ++n_left;
  for (const auto& r : indicial_roots(P, 1))
    if (r.real() > lambda1) ++n_right;
  int k_left = l - n_left, k_right = l - n_right;

  ChebGrid g = cheb_grid(n, T);
  Eigen::MatrixXd Dm = diff_matrix(g);
  Eigen::VectorXd ms(n);
  std::vector<double> xs(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    double x = 1.0 / (1.0 + std::exp(-g.t[static_cast<std::size_t>(k)]));
    xs[static_cast<std::size_t>(k)] = x;
    ms(k) = lambda0 * (1.0 - x) - lambda1 * x;
  }
  Eigen::MatrixXd E = Dm;
  E += ms.asDiagonal();
  Eigen::MatrixXd L = Eigen::MatrixXd::Zero(n, n);
  Eigen::MatrixXd Ej = Eigen::MatrixXd::Identity(n, n);
  for (int j = 0; j <= l; ++j) {
    Eigen::VectorXd cj(n);
    for (int k = 0; k < n; ++k)
      cj(k) = eval(P.coeffs[static_cast<std::size_t>(j)], {xs[static_cast<std::size_t>(k)]});
    L += cj.asDiagonal() * Ej;
    if (j < l) Ej = E * Ej;
  }

  std::vector<double> y(static_cast<std::size_t>(n - l));
  for (int i = 0; i < n - l; ++i)
    y[static_cast<std::size_t>(i)] = -T * std::cos(pi * (i + 0.5) / (n - l));
  Eigen::MatrixXd B = resample_matrix(g, y);

  WeightedSystem sys;
  sys.t = g.t;
  sys.x = xs;
  sys.truncation = T;
  sys.k_left = k_left;
  sys.k_right = k_right;
  sys.A = Eigen::MatrixXd::Zero(n - l + k_left + k_right, n);
  sys.A.topRows(n - l) = B * L;
  int row = n - l;
  for (int i : decay_nodes(g.t, k_left, true)) sys.A(row++, i) = 1.0;
  for (int i : decay_nodes(g.t, k_right, false)) sys.A(row++, i) = 1.0;
  return sys;
}

}  // namespace detail

struct SolveResult {
  int ker = 0, coker = 0, index = 0;
  double sigma_max = 0.0, sigma_min = 0.0, threshold = 0.0;
  std::vector<double> small_singular;  // the cluster counted as zero
  double truncation = 0.0;
  int nodes = 0;
  std::vector<double> grid;        // cylinder nodes t
  std::vector<double> grid_x;      // x(t)
  Eigen::MatrixXd kernel_vectors;  // conjugated kernel basis on the grid
};

inline SolveResult solve_weighted(const BOperator1D& P, double lambda0, double lambda1,
                                  int grid_n = 0, double truncation = 0) {
  detail::WeightedSystem sys = detail::build_weighted_system(P, lambda0, lambda1, grid_n, truncation);
  int n = static_cast<int>(sys.t.size());
  Eigen::BDCSVD<Eigen::MatrixXd> svd(sys.A, Eigen::ComputeFullV);
  const Eigen::VectorXd& sv = svd.singularValues();
  double smax = sv(0);
  double tau = 1e-8 * smax;
  int rank = 0;
  while (rank < sv.size() && sv(rank) >= tau) ++rank;
  if (rank < sv.size()) {
    double kept_min = sv(rank - 1);
    double drop_max = sv(rank);
    if (kept_min < 1e3 * drop_max)
      throw DiscretizationUnstable("singular-value cluster is ambiguous: " +
                                   std::to_string(kept_min) + " vs " + std::to_string(drop_max));
  }
  SolveResult out;
  out.sigma_max = smax;
  out.sigma_min = sv(sv.size() - 1);
  out.threshold = tau;
  out.truncation = sys.truncation;
  out.nodes = n;
  out.grid = sys.t;
  out.grid_x = sys.x;
  out.ker = n - rank;
  out.coker = static_cast<int>(sys.A.rows()) - rank;
  out.index = out.ker - out.coker;
  for (int i = rank; i < sv.size(); ++i) out.small_singular.push_back(sv(i));
  if (out.ker > 0) out.kernel_vectors = svd.matrixV().rightCols(out.ker);
  return out;
}

// Relative residual of a grid vector against the weighted system, for
// checking that a recovered kernel vector still solves at another weight.
inline double kernel_residual(const BOperator1D& P, double lambda0, double lambda1,
                              const Eigen::VectorXd& w, int grid_n = 0, double truncation = 0) {
  detail::WeightedSystem sys = detail::build_weighted_system(P, lambda0, lambda1, grid_n, truncation);
  if (w.size() != static_cast<Eigen::Index>(sys.t.size()))
    throw DomainError("vector does not match the grid");
  Eigen::BDCSVD<Eigen::MatrixXd> svd(sys.A);
  double smax = svd.singularValues()(0);
  return (sys.A * w).norm() / (smax * w.norm());
}

struct SweepRow {
  double lambda = 0.0;
  bool fredholm = false;
  int ker = 0, coker = 0, index = 0;
};

struct WeightSweepReport {
  std::vector<SweepRow> rows;
  std::vector<double> excluded0, excluded1;
  struct Jump {
    double lo = 0.0, hi = 0.0;  // bracketing Fredholm weights
    int delta = 0;
  };
  std::vector<Jump> jumps;
};

inline WeightSweepReport weight_sweep(const BOperator1D& P, double lo, double hi, int steps,
                                      int grid_n = 0, double truncation = 0) {
  WeightSweepReport rep;
  ExcludedWeights D = excluded_weights(P);
  rep.excluded0 = D.face0;
  rep.excluded1 = D.face1;
  if (steps <= 0 || lo > hi) return rep;
  for (int i = 0; i <= steps; ++i) {
    double lam = lo + (hi - lo) * i / steps;
    SweepRow row;
    row.lambda = lam;
    try {
      SolveResult s = solve_weighted(P, lam, lam, grid_n, truncation);
      row.fredholm = true;
      row.ker = s.ker;
      row.coker = s.coker;
      row.index = s.index;
    } catch (const NotFredholm&) {
      row.fredholm = false;
    }
    rep.rows.push_back(row);
  }
  const SweepRow* prev = nullptr;
  for (const auto& r : rep.rows) {
    if (!r.fredholm) continue;
    if (prev && r.index != prev->index)
      rep.jumps.push_back({prev->lambda, r.lambda, r.index - prev->index});
    prev = &r;
  }
  return rep;
}

inline std::string sweep_csv(const WeightSweepReport& rep) {
  std::string out = "lambda,fredholm,ker,coker,index\n";
  char buf[128];
  for (const auto& r : rep.rows) {
    std::snprintf(buf, sizeof(buf), "%.12g,%d,%d,%d,%d\n", r.lambda, r.fredholm ? 1 : 0, r.ker,
                  r.coker, r.index);
    out += buf;
  }
  return out;
}

namespace detail {

inline double simpson_rec(const std::function<double(double)>& f, double a, double b, double fa,
                          double fm, double fb, double whole, double tol, int depth) {
  double m = (a + b) / 2;
  double flm = f((a + m) / 2), frm = f((m + b) / 2);
  double left = (m - a) / 6 * (fa + 4 * flm + fm);
  double right = (b - m) / 6 * (fm + 4 * frm + fb);
  if (depth <= 0 || std::abs(left + right - whole) <= 15 * tol * std::max(1.0, std::abs(whole)))
    return left + right + (left + right - whole) / 15;
  return simpson_rec(f, a, m, fa, flm, fm, left, tol, depth - 1) +
         simpson_rec(f, m, b, fm, frm, fb, right, tol, depth - 1);
}

inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b,
                               double tol = 1e-12) {
  double fa = f(a), fb = f(b), fm = f((a + b) / 2);
  double whole = (b - a) / 6 * (fa + 4 * fm + fb);
  return simpson_rec(f, a, b, fa, fm, fb, whole, tol, 30);
}

}  // namespace detail

// Primitive of the b-one-form g(x) dx/(x(1-x)) based at the midpoint; it is
// an a-smooth function on the closed interval exactly when g vanishes at
// both endpoints.
inline double interval_primitive(const ExprPtr& g, double x) {
  if (!(x > 0.0 && x < 1.0)) throw DomainError("primitive is evaluated inside (0,1)");
  return detail::adaptive_simpson(
      [&](double s) { return eval(g, {s}) / (s * (1.0 - s)); }, 0.5, x);
}

struct IntervalCohomology {
  int h0 = 0, h1 = 0;
};

// Degree 0: kernel of v at a growth weight, recovered numerically (the
// constants).  Degree 1: a one-form g dx/(x(1-x)) is exact iff g vanishes
// at both endpoints, so classes are detected by the rank of the
// endpoint-evaluation functionals over a sample of a-smooth one-forms.
inline IntervalCohomology bdr_interval() {
  BOperator1D V = make_boperator(1, {num(0), num(1)});
  SolveResult s = solve_weighted(V, -0.5, -0.5);
  std::vector<ExprPtr> forms = {num(1), var(1), sub(num(1), var(1)),
                                mul(var(1), sub(num(1), var(1))), mul(var(1), var(1))};
  Eigen::MatrixXd F(static_cast<Eigen::Index>(forms.size()), 2);
  for (std::size_t i = 0; i < forms.size(); ++i) {
    F(static_cast<Eigen::Index>(i), 0) = detail::boundary_value(forms[i], 0);
    F(static_cast<Eigen::Index>(i), 1) = detail::boundary_value(forms[i], 1);
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(F);
  int rank = 0;
  for (int i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > 1e-9 * svd.singularValues()(0)) ++rank;
  return {s.ker, rank};
}

struct CircleCohomology {
  int h0 = 0, h1 = 0;
  double sigma_min = 0.0;
};

// Flat line bundle on the circle with holonomy h: parallel sections are the
// kernel of d/dtheta - log(h)/(2 pi) on periodic functions, discretized by
// a circulant fourth-order stencil.
inline CircleCohomology twisted_circle_cohomology(double h, int grid_n = 64) {
  if (!(h > 0.0)) throw DomainError("holonomy must be positive");
  const double pi = std::acos(-1.0);
  double a = std::log(h) / (2.0 * pi);
  // An odd node count: on an even periodic grid the alternating sawtooth
  // lies in the null space of the central stencil and fakes a second class.
  int n = std::max(grid_n, 17);
  if (n % 2 == 0) ++n;
  double step = 2.0 * pi / n;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
  for (int k = 0; k < n; ++k) {
    A(k, (k - 2 + n) % n) += 1.0 / (12.0 * step);
    A(k, (k - 1 + n) % n) += -8.0 / (12.0 * step);
    A(k, (k + 1) % n) += 8.0 / (12.0 * step);
    A(k, (k + 2) % n) += -1.0 / (12.0 * step);
    A(k, k) += -a;
  }
  Eigen::BDCSVD<Eigen::MatrixXd> svd(A);
  const Eigen::VectorXd& sv = svd.singularValues();
  double tau = 1e-8 * sv(0);
  int rank = 0;
  while (rank < sv.size() && sv(rank) >= tau) ++rank;
  if (rank < sv.size() && sv(rank - 1) < 1e3 * sv(rank))
    throw DiscretizationUnstable("holonomy too close to 1 to resolve");
  int ker = n - rank;
  return {ker, ker, sv(sv.size() - 1)};
}

struct QuotientCohomology {
  int h0 = 0, h1 = 0, h2 = 0;
  bool prediction = true;
};

// Long-exact-sequence assembly for the model quotient with boundary circle
// holonomy alpha: the interior contributes (1, 1, 0) and the boundary
// contributes the twisted circle cohomology in degrees (1, 2).  The result
// is flagged as a prediction rather than a certified computation.
inline QuotientCohomology predicted_quotient_cohomology(double alpha) {
  if (!(alpha > 0.0)) throw DomainError("holonomy must be positive");
  CircleCohomology tw = twisted_circle_cohomology(alpha);
  QuotientCohomology out;
  out.h0 = 1;
  out.h1 = 1 + tw.h0;
  out.h2 = tw.h1;
  out.prediction = true;
  return out;
}

}  // namespace bcw
