#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <complex>
#include <vector>

#include "bcw/elliptic.hpp"

using namespace bcw;

namespace {

BOperator1D op_v() { return make_boperator(1, {num(0), num(1)}); }

// v^2 - 1, indicial roots {-1, 1} at both faces.
BOperator1D op_v2m1() { return make_boperator(2, {num(-1), num(0), num(1)}); }

std::vector<double> real_parts(const std::vector<std::complex<double>>& rs) {
  std::vector<double> out;
  for (auto r : rs) out.push_back(r.real());
  return out;
}

void check_roots(const std::vector<std::complex<double>>& got,
                 const std::vector<std::complex<double>>& want, double tol = 1e-10) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got[i].real() == Catch::Approx(want[i].real()).margin(tol));
    CHECK(got[i].imag() == Catch::Approx(want[i].imag()).margin(tol));
  }
}

}  // namespace

TEST_CASE("operator validation rejects degenerate data") {
  CHECK_THROWS_AS(make_boperator(0, {num(1)}), DomainError);
  CHECK_THROWS_AS(make_boperator(2, {num(1), num(1)}), DomainError);
  // Leading coefficient vanishing at a face or inside kills ellipticity.
  CHECK_THROWS_AS(make_boperator(1, {num(0), var(1)}), NotElliptic);
  CHECK_THROWS_AS(make_boperator(1, {num(0), sub(num(1), var(1))}), NotElliptic);
  CHECK_THROWS_AS(make_boperator(1, {num(0), sub(var(1), num(Rational(1, 2)))}), NotElliptic);
  // Coefficients must extend smoothly to both endpoints; fractional powers
  // are admissible, logarithms are not.
  CHECK_THROWS_AS(make_boperator(1, {num(0), add(num(2), log_var(1))}), DomainError);
  CHECK_NOTHROW(make_boperator(1, {num(0), add(num(1), pow_var(1, Rational(1, 2)))}));
  CHECK_NOTHROW(make_boperator(1, {var(1), add(num(2), var(1))}));
}

TEST_CASE("indicial polynomials and their roots at both faces") {
  BOperator1D V = op_v();
  check_roots(indicial_roots(V, 0), {{0, 0}});
  check_roots(indicial_roots(V, 1), {{0, 0}});

  BOperator1D P = op_v2m1();
  check_roots(indicial_roots(P, 0), {{-1, 0}, {1, 0}});
  check_roots(indicial_roots(P, 1), {{-1, 0}, {1, 0}});

  // v^2: a double root, reported with multiplicity.
  BOperator1D P0 = make_boperator(2, {num(0), num(0), num(1)});
  check_roots(indicial_roots(P0, 0), {{0, 0}, {0, 0}});

  // v^2 + 1: purely imaginary roots, one excluded weight after projection.
  BOperator1D Pi = make_boperator(2, {num(1), num(0), num(1)});
  check_roots(indicial_roots(Pi, 0), {{0, -1}, {0, 1}});
  ExcludedWeights Di = excluded_weights(Pi);
  REQUIRE(Di.face0.size() == 1);
  CHECK(Di.face0[0] == Catch::Approx(0.0).margin(1e-12));

  // First-order with a zeroth-order term: the sign of the model field flips
  // between the two faces, so the roots mirror.
  BOperator1D Ps = make_boperator(1, {num(Rational(1, 2)), num(1)});
  check_roots(indicial_roots(Ps, 0), {{-0.5, 0}});
  check_roots(indicial_roots(Ps, 1), {{0.5, 0}});

  // x-dependent coefficients: only the boundary values enter.
  BOperator1D Px = make_boperator(2, {mul(num(-1), add(num(1), var(1))), num(0), num(1)});
  check_roots(indicial_roots(Px, 0), {{-1, 0}, {1, 0}});
  double r2 = std::sqrt(2.0);
  check_roots(indicial_roots(Px, 1), {{-r2, 0}, {r2, 0}});

  // Third order goes through the companion-matrix path.
  BOperator1D P3 = make_boperator(3, {num(0), num(-1), num(0), num(1)});
  check_roots(indicial_roots(P3, 0), {{-1, 0}, {0, 0}, {1, 0}});

  for (const BOperator1D* q : {&V, &P, &P0, &Pi, &Ps, &Px, &P3})
    CHECK(indicial_roots(*q, 0).size() == static_cast<std::size_t>(q->order));
}

TEST_CASE("weighted problems for the model field") {
  BOperator1D V = op_v();

  SolveResult up = solve_weighted(V, 0.5, 0.5);
  CHECK(up.ker == 0);
  CHECK(up.coker == 1);
  CHECK(up.index == -1);

  SolveResult down = solve_weighted(V, -0.5, -0.5);
  CHECK(down.ker == 1);
  CHECK(down.coker == 0);
  CHECK(down.index == 1);

  // Constants lie in the kernel at growth weights.  The solver works in the
  // conjugated variable, so the recovered vector is the constant divided by
  // the weight factor x^l0 (1-x)^l1 with l0 = l1 = -1/2.
  REQUIRE(down.kernel_vectors.cols() == 1);
  Eigen::VectorXd w = down.kernel_vectors.col(0);
  Eigen::VectorXd shape(w.size());
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    double x = down.grid_x[static_cast<std::size_t>(i)];
    shape(i) = std::sqrt(x * (1.0 - x));
  }
  double c = w.dot(shape) / shape.dot(shape);
  CHECK((w - c * shape).norm() < 1e-4 * w.norm());

  SolveResult mixed = solve_weighted(V, -0.5, 0.5);
  CHECK(mixed.ker == 0);
  CHECK(mixed.coker == 0);
  CHECK(mixed.index == 0);

  CHECK_THROWS_AS(solve_weighted(V, 0.0, 0.5), NotFredholm);
  CHECK_THROWS_AS(solve_weighted(V, 0.0009, 0.5), NotFredholm);
  CHECK_NOTHROW(solve_weighted(V, 0.0015, 0.5));
}

TEST_CASE("weighted problems for a second-order operator") {
  BOperator1D P = op_v2m1();

  SolveResult mid = solve_weighted(P, 0.0, 0.0);
  CHECK(mid.ker == 0);
  CHECK(mid.coker == 0);
  CHECK(mid.index == 0);

  SolveResult lo = solve_weighted(P, -1.75, -1.75);
  CHECK(lo.ker == 2);
  CHECK(lo.coker == 0);
  CHECK(lo.index == 2);

  SolveResult hi = solve_weighted(P, 1.75, 1.75);
  CHECK(hi.ker == 0);
  CHECK(hi.coker == 2);
  CHECK(hi.index == -2);

  CHECK_THROWS_AS(solve_weighted(P, 1.0005, 0.0), NotFredholm);
}

TEST_CASE("kernel dimension is monotone and kernels persist at weaker weights") {
  BOperator1D P = op_v2m1();
  const int n = 260;
  const double T = 72.0;

  SolveResult a = solve_weighted(P, -1.25, -1.25, n, T);
  SolveResult b = solve_weighted(P, -1.75, -1.75, n, T);
  SolveResult c = solve_weighted(P, -0.5, -0.5, n, T);
  CHECK(a.ker == 2);
  CHECK(b.ker == 2);
  CHECK(c.ker == 0);
  CHECK(c.ker <= a.ker);
  CHECK(a.ker <= b.ker);

  // A kernel vector at the stronger weight, rescaled by the ratio of the
  // weight factors on the shared grid, still solves at the weaker weight.
  for (int j = 0; j < a.kernel_vectors.cols(); ++j) {
    Eigen::VectorXd w = a.kernel_vectors.col(j);
    Eigen::VectorXd scaled(w.size());
    for (Eigen::Index i = 0; i < w.size(); ++i) {
      double x = a.grid_x[static_cast<std::size_t>(i)];
      scaled(i) = std::pow(x, 0.5) * std::pow(1.0 - x, 0.5) * w(i);
    }
    CHECK(kernel_residual(P, -1.75, -1.75, scaled, n, T) < 1e-6);
  }

  Eigen::VectorXd bad(10);
  bad.setOnes();
  CHECK_THROWS_AS(kernel_residual(P, -1.75, -1.75, bad, n, T), DomainError);
}

TEST_CASE("results are stable under grid refinement") {
  BOperator1D V = op_v();
  BOperator1D P = op_v2m1();
  struct Probe {
    const BOperator1D* op;
    double lam;
  };
  std::vector<Probe> probes = {{&V, 0.5}, {&V, -0.5}, {&P, 0.0}, {&P, -1.75}, {&P, 1.75}};
  for (const auto& pr : probes) {
    SolveResult base = solve_weighted(*pr.op, pr.lam, pr.lam, 200, 50.0);
    SolveResult fine = solve_weighted(*pr.op, pr.lam, pr.lam, 400, 50.0);
    SolveResult wide = solve_weighted(*pr.op, pr.lam, pr.lam, 220, 55.0);
    CHECK(base.ker == fine.ker);
    CHECK(base.coker == fine.coker);
    CHECK(base.ker == wide.ker);
    CHECK(base.coker == wide.coker);
  }
}

TEST_CASE("smallest singular value collapses near excluded weights") {
  BOperator1D V = op_v();
  // At a weight close to the excluded value the near-kernel mode decays so
  // slowly that refining the truncation drives the smallest singular value
  // down, while at a clear weight it stays put.
  double near1 = solve_weighted(V, 0.0015, 0.0015, 220, 45.0).sigma_min;
  double near2 = solve_weighted(V, 0.0015, 0.0015, 320, 90.0).sigma_min;
  double near3 = solve_weighted(V, 0.0015, 0.0015, 420, 135.0).sigma_min;
  CHECK(near2 < near1);
  CHECK(near3 < near2);

  double clear1 = solve_weighted(V, 0.4, 0.4, 220, 45.0).sigma_min;
  double clear3 = solve_weighted(V, 0.4, 0.4, 420, 135.0).sigma_min;
  CHECK(near3 < 0.1 * clear3);
  CHECK(clear3 > 0.5 * clear1);
}

TEST_CASE("weight sweeps locate every index jump") {
  BOperator1D V = op_v();
  WeightSweepReport rv = weight_sweep(V, -0.75, 0.75, 3);
  REQUIRE(rv.rows.size() == 4);
  std::vector<int> want_ind = {1, 1, -1, -1};
  std::vector<int> want_ker = {1, 1, 0, 0};
  for (std::size_t i = 0; i < rv.rows.size(); ++i) {
    CHECK(rv.rows[i].fredholm);
    CHECK(rv.rows[i].index == want_ind[i]);
    CHECK(rv.rows[i].ker == want_ker[i]);
  }
  REQUIRE(rv.jumps.size() == 1);
  CHECK(rv.jumps[0].delta == -2);
  CHECK(rv.jumps[0].lo < 0.0);
  CHECK(rv.jumps[0].hi > 0.0);
  REQUIRE(rv.excluded0.size() == 1);
  CHECK(rv.excluded0[0] == Catch::Approx(0.0).margin(1e-12));

  BOperator1D P = op_v2m1();
  WeightSweepReport rp = weight_sweep(P, -1.75, 1.75, 7);
  REQUIRE(rp.rows.size() == 8);
  std::vector<int> want2 = {2, 2, 0, 0, 0, 0, -2, -2};
  int prev_ker = 100;
  for (std::size_t i = 0; i < rp.rows.size(); ++i) {
    CHECK(rp.rows[i].fredholm);
    CHECK(rp.rows[i].index == want2[i]);
    CHECK(rp.rows[i].ker <= prev_ker);
    prev_ker = rp.rows[i].ker;
  }
  REQUIRE(rp.jumps.size() == 2);
  // Each jump brackets exactly one excluded weight and its size equals the
  // number of indicial roots crossing, counted at both faces.
  std::vector<double> D = rp.excluded0;
  for (const auto& j : rp.jumps) {
    CHECK(j.delta == -2);
    int crossed = 0;
    for (double d : D)
      if (d > j.lo && d < j.hi) ++crossed;
    for (double d : rp.excluded1)
      if (d > j.lo && d < j.hi) ++crossed;
    CHECK(crossed == 2);
  }

  CHECK(weight_sweep(V, 0.2, 0.4, 0).rows.empty());
  CHECK(weight_sweep(V, 0.4, 0.2, 5).rows.empty());
}

TEST_CASE("sweeps flag rows at excluded weights and report across them") {
  BOperator1D V = op_v();
  WeightSweepReport r = weight_sweep(V, -0.5, 0.5, 2);
  REQUIRE(r.rows.size() == 3);
  CHECK(r.rows[0].fredholm);
  CHECK_FALSE(r.rows[1].fredholm);
  CHECK(r.rows[2].fredholm);
  REQUIRE(r.jumps.size() == 1);
  CHECK(r.jumps[0].lo == Catch::Approx(-0.5));
  CHECK(r.jumps[0].hi == Catch::Approx(0.5));
  CHECK(r.jumps[0].delta == -2);

  std::string csv = sweep_csv(r);
  CHECK(csv.rfind("lambda,fredholm,ker,coker,index\n", 0) == 0);
  CHECK(csv.find("\n-0.5,1,1,0,1\n") != std::string::npos);
  CHECK(csv.find("\n0,0,0,0,0\n") != std::string::npos);
  CHECK(csv.find("\n0.5,1,0,1,-1\n") != std::string::npos);
}

TEST_CASE("formal adjoints reverse the operator up to sign conventions") {
  BOperator1D V = op_v();
  BOperator1D Vs = formal_adjoint(V);
  CHECK(symbolically_equal(Vs.coeffs[0], num(0)));
  CHECK(symbolically_equal(Vs.coeffs[1], num(-1)));

  // P = v^2 + x v + (1+x): the adjoint picks up derivative corrections.
  BOperator1D P = make_boperator(2, {add(num(1), var(1)), var(1), num(1)});
  BOperator1D Ps = formal_adjoint(P);
  CHECK(symbolically_equal(Ps.coeffs[2], num(1)));
  CHECK(symbolically_equal(Ps.coeffs[1], mul(num(-1), var(1))));
  CHECK(symbolically_equal(Ps.coeffs[0], add(num(1), mul(var(1), var(1)))));

  // Taking the adjoint twice returns the original coefficients.
  BOperator1D Pss = formal_adjoint(Ps);
  for (int j = 0; j <= P.order; ++j) CHECK(symbolically_equal(Pss.coeffs[j], P.coeffs[j]));
}

TEST_CASE("index duality between an operator and its adjoint") {
  BOperator1D V = op_v();
  BOperator1D Vs = formal_adjoint(V);
  for (double lam : {-0.75, -0.25, 0.25, 0.75}) {
    int ind = solve_weighted(V, lam, lam).index;
    int ind_adj = solve_weighted(Vs, -lam, -lam).index;
    CHECK(ind == -ind_adj);
  }

  BOperator1D P = op_v2m1();
  BOperator1D Ps = formal_adjoint(P);
  for (double lam : {-1.75, -0.75, -0.25, 0.25, 0.75, 1.75}) {
    int ind = solve_weighted(P, lam, lam).index;
    int ind_adj = solve_weighted(Ps, -lam, -lam).index;
    CHECK(ind == -ind_adj);
  }

  // A non-self-adjoint second-order operator: v^2 + v.
  BOperator1D Q = make_boperator(2, {num(0), num(1), num(1)});
  BOperator1D Qs = formal_adjoint(Q);
  for (double lam : {-1.5, -0.5, 0.5, 1.5}) {
    int ind = solve_weighted(Q, lam, lam).index;
    int ind_adj = solve_weighted(Qs, -lam, -lam).index;
    CHECK(ind == -ind_adj);
  }

  // And one with x-dependent coefficients and complex indicial roots.
  BOperator1D R = make_boperator(2, {add(num(1), var(1)), var(1), num(1)});
  BOperator1D Rs = formal_adjoint(R);
  std::vector<double> d0 = real_parts(indicial_roots(R, 0));
  std::vector<double> d0s = real_parts(indicial_roots(Rs, 0));
  std::vector<double> d1 = real_parts(indicial_roots(R, 1));
  std::vector<double> d1s = real_parts(indicial_roots(Rs, 1));
  REQUIRE(d1.size() == 2);
  CHECK(d1s[0] == Catch::Approx(-d1[1]).margin(1e-10));
  for (double lam : {-0.75, 0.75, 1.0}) {
    int ind = solve_weighted(R, lam, lam).index;
    int ind_adj = solve_weighted(Rs, -lam, -lam).index;
    CHECK(ind == -ind_adj);
  }
}

TEST_CASE("interval cohomology of the boundary-respecting complex") {
  IntervalCohomology c = bdr_interval();
  CHECK(c.h0 == 1);
  CHECK(c.h1 == 2);

  // Exactness is constructive away from the classes: the primitive of the
  // one-form built from x(1-x) is x - 1/2.
  ExprPtr g = mul(var(1), sub(num(1), var(1)));
  for (double x : {0.05, 0.3, 0.8, 0.95})
    CHECK(interval_primitive(g, x) == Catch::Approx(x - 0.5).margin(1e-8));
  CHECK_THROWS_AS(interval_primitive(g, 0.0), DomainError);
  CHECK_THROWS_AS(interval_primitive(g, 1.2), DomainError);

  // The constant one-form pairs nontrivially with both endpoint classes.
  CHECK(detail::boundary_value(num(1), 0) == 1.0);
  CHECK(detail::boundary_value(num(1), 1) == 1.0);
}

TEST_CASE("twisted circle cohomology detects nontrivial holonomy") {
  CircleCohomology flat = twisted_circle_cohomology(1.0);
  CHECK(flat.h0 == 1);
  CHECK(flat.h1 == 1);
  CHECK(flat.sigma_min < 1e-12);

  CircleCohomology tw = twisted_circle_cohomology(2.0);
  CHECK(tw.h0 == 0);
  CHECK(tw.h1 == 0);
  double pi = std::acos(-1.0);
  CHECK(tw.sigma_min == Catch::Approx(std::log(2.0) / (2 * pi)).epsilon(1e-6));

  CircleCohomology tw2 = twisted_circle_cohomology(0.37);
  CHECK(tw2.h0 == 0);
  CHECK(tw2.h1 == 0);

  CircleCohomology fine = twisted_circle_cohomology(1.0, 129);
  CHECK(fine.h0 == 1);
  CHECK(fine.h1 == 1);

  CHECK_THROWS_AS(twisted_circle_cohomology(0.0), DomainError);
  CHECK_THROWS_AS(twisted_circle_cohomology(-2.0), DomainError);
}

TEST_CASE("predicted cohomology of the quotient cylinder") {
  QuotientCohomology q1 = predicted_quotient_cohomology(1.0);
  CHECK(q1.h0 == 1);
  CHECK(q1.h1 == 2);
  CHECK(q1.h2 == 1);
  CHECK(q1.prediction);

  QuotientCohomology q2 = predicted_quotient_cohomology(2.0);
  CHECK(q2.h0 == 1);
  CHECK(q2.h1 == 1);
  CHECK(q2.h2 == 0);
  CHECK(q2.prediction);

  // Only triviality of the holonomy matters, not its size.
  QuotientCohomology q3 = predicted_quotient_cohomology(0.37);
  CHECK(q3.h1 == 1);
  QuotientCohomology q4 = predicted_quotient_cohomology(5.0);
  CHECK(q4.h1 == 1);

  CHECK_THROWS_AS(predicted_quotient_cohomology(0.0), DomainError);
}
