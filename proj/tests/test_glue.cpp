#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "bcw/glue.hpp"
#include "bcw/sampling.hpp"

using namespace bcw;

namespace {

ChartedMap power_map(const Rational& alpha) {
  return make_map(make_chart("h", 1, 1), make_chart("h2", 1, 1), {pow_var(1, alpha)});
}

ChartedMap fold_map() {
  return make_map(make_chart("q", 2, 2), make_chart("h", 1, 1), {mul(var(1), var(2))});
}

const DerivativeTrace& find_trace(const ProbeReport& rep, int comp, const std::vector<int>& beta) {
  for (const auto& tr : rep.traces)
    if (tr.component == comp && tr.beta == beta) return tr;
  FAIL("missing derivative trace");
  return rep.traces.front();
}

}  // namespace

TEST_CASE("gluing profile fixed points and monotonicity") {
  CHECK(phi(0.0) == 0.0);
  CHECK(phi(1.0) == 1.0);
  CHECK(phi_inv(0.0) == 0.0);
  CHECK(phi_inv(1.0) == 1.0);
  CHECK(phi(0.5) == Catch::Approx(std::exp(-1.5)).epsilon(1e-14));
  CHECK_THROWS_AS(phi(-0.1), DomainError);
  CHECK_THROWS_AS(phi_inv(-1e-9), DomainError);
  double prev = 0.0;
  for (double x : {0.05, 0.2, 0.7, 1.0, 1.8, 4.0, 20.0}) {
    double y = phi(x);
    CHECK(y > prev);
    prev = y;
  }
}

TEST_CASE("inverse profile far below underflow of the direct formula") {
  // closed form at e^{-100}, frozen from a 40-digit evaluation
  double v = phi_inv(std::exp(-100.0));
  CHECK(v == Catch::Approx(0.00999900019995001399).epsilon(1e-13));
  // leading asymptotics -1/log x
  CHECK(std::abs(v - 0.01) < 1e-5);
}

TEST_CASE("profile and inverse are mutually inverse across 121 dyadic scales") {
  for (int k = -60; k <= 60; ++k) {
    double x = std::ldexp(1.0, k);
    double rt = phi(phi_inv(x));
    CHECK(std::abs(rt - x) <= 1e-12 * x);
  }
  for (double u : {0.05, 0.1, 0.5, 1.0, 2.0, 7.5, 30.0}) {
    double rt = phi_inv(phi(u));
    CHECK(std::abs(rt - u) <= 1e-12 * u);
  }
}

TEST_CASE("transformed power map straightens to slope 1/alpha") {
  for (const Rational& alpha : {Rational(1, 2), Rational(2), Rational(5)}) {
    GlueTransform t = transform_map(power_map(alpha), true);
    REQUIRE(t.exact);
    double inv = 1.0 / alpha.to_double();
    for (int m = 0; m <= 30; ++m) {
      double x = 1e-3 * std::ldexp(1.0, -m);
      CHECK(std::abs(t.component(1, {x}) / x - inv) <= 0.01);
    }
    // against the closed-form solution of u - 1/u = alpha (x - 1/x)
    for (double x : {0.37, 0.8, 1.9}) {
      double s = x - 1.0 / x;
      double a = alpha.to_double();
      double expect = (a * s + std::sqrt(a * a * s * s + 4.0)) / 2.0;
      CHECK(t.component(1, {x}) == Catch::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("transformed product map behaves like xy/(x+y) near the corner") {
  GlueTransform t = transform_map(fold_map());
  REQUIRE(t.exact);
  for (int m = 0; m <= 20; ++m) {
    double h = 1e-3 * std::ldexp(1.0, -m);
    double ratio = t.component(1, {h, h}) * (2.0 * h) / (h * h);
    CHECK(std::abs(ratio - 1.0) <= 0.01);
  }
}

TEST_CASE("the identity map transforms to the identity") {
  ChartedMap id2 = make_map(make_chart("p", 2, 1), make_chart("p2", 2, 1), {var(1), var(2)});
  GlueTransform t = transform_map(std::move(id2), true);
  for (double x : {1e-8, 1e-3, 0.3, 0.9}) {
    for (double y : {0.1, 0.7}) {
      auto out = t({x, y});
      CHECK(out[0] == Catch::Approx(x).epsilon(1e-12));
      CHECK(out[1] == y);
    }
  }
}

TEST_CASE("the functor refuses maps that are not strongly smooth") {
  CHECK_THROWS_AS(transform_map(fold_map(), true), NotStronglySmooth);
  CHECK_NOTHROW(transform_map(power_map(Rational(3)), true));
  // without the requirement the transform is still usable
  CHECK_NOTHROW(transform_map(fold_map(), false));
}

TEST_CASE("transforming a composition matches composing the transforms") {
  SECTION("powers on the half line") {
    ChartedMap f = make_map(make_chart("h", 1, 1), make_chart("h2", 1, 1), {pow_var(1, Rational(2))});
    ChartedMap g = make_map(make_chart("h2", 1, 1), make_chart("h3", 1, 1), {pow_var(1, Rational(3))});
    GlueTransform tf = transform_map(f, true);
    GlueTransform tg = transform_map(g, true);
    GlueTransform tgf = transform_map(compose(g, f), true);
    for (int m = 0; m <= 48; ++m) {
      double x = 2.0 * std::ldexp(1.0, -m);
      double lhs = tgf.component(1, {x});
      double rhs = tg.component(1, {tf.component(1, {x})});
      CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(lhs)));
    }
  }
  SECTION("a strongly smooth pair on the half plane") {
    Chart A = make_chart("A", 2, 1);
    Chart B = make_chart("B", 2, 1);
    B.box = {{0.0, 1.5}, {0.0, 1.0}};
    Chart C = make_chart("C", 2, 1);
    C.box = {{0.0, 2.5}, {0.0, 2.5}};
    ChartedMap f = make_map(A, B,
                            {mul(var(1), add(num(1), mul(var(2), mul(var(2), num(Rational(1, 4)))))),
                             var(2)});
    ChartedMap g = make_map(B, C, {mul(var(1), var(1)), add(var(2), var(1))});
    GlueTransform tf = transform_map(f, true);
    GlueTransform tg = transform_map(g, true);
    GlueTransform tgf = transform_map(compose(g, f), true);
    auto pts = sample_box(A.box, 40, 0.02);
    pts.push_back({1e-6, 0.3});
    pts.push_back({1e-12, 0.8});
    for (const auto& p : pts) {
      auto lhs = tgf(p);
      auto rhs = tg(tf(p));
      for (std::size_t j = 0; j < lhs.size(); ++j)
        CHECK(std::abs(lhs[j] - rhs[j]) <= 1e-10 * std::max(1.0, std::abs(lhs[j])));
    }
  }
}

TEST_CASE("probe finds the transformed square map smooth with slope one half") {
  GlueTransform t = transform_map(power_map(Rational(2)), true);
  ProbeReport rep = smoothness_probe(t, {0.0}, 2);
  CHECK(rep.verdict == ProbeVerdict::SmoothConsistent);
  CHECK(rep.directions == std::vector<int>{1});
  const DerivativeTrace& d1 = find_trace(rep, 1, {1});
  CHECK(d1.converged);
  CHECK(d1.estimates.size() == 17);  // octaves 8..24
  CHECK(d1.final_estimate == Catch::Approx(0.5).margin(1e-3));
  CHECK(find_trace(rep, 1, {2}).converged);
}

TEST_CASE("probe detects the corner non-smoothness of the transformed product") {
  GlueTransform t = transform_map(fold_map());
  ProbeReport rep = smoothness_probe(t, {0.0, 0.0}, 2);
  CHECK(rep.verdict == ProbeVerdict::NonSmoothDetected);
  const DerivativeTrace& mixed = find_trace(rep, 1, {1, 1});
  CHECK(mixed.diverged);
  CHECK_FALSE(mixed.converged);
  // pure directions stay on the axes, where the map vanishes identically
  CHECK(find_trace(rep, 1, {2, 0}).converged);
  CHECK(std::abs(find_trace(rep, 1, {1, 0}).final_estimate) < 1e-12);
}

TEST_CASE("probe accepts the identity at higher order and rejects interior points") {
  ChartedMap id2 = make_map(make_chart("p", 2, 1), make_chart("p2", 2, 1), {var(1), var(2)});
  GlueTransform t = transform_map(std::move(id2), true);
  ProbeReport rep = smoothness_probe(t, {0.0, 0.3}, 3);
  CHECK(rep.verdict == ProbeVerdict::SmoothConsistent);
  CHECK(rep.directions == std::vector<int>{1});
  CHECK(find_trace(rep, 1, {1}).final_estimate == Catch::Approx(1.0).epsilon(1e-6));
  CHECK_THROWS_AS(smoothness_probe(t, {0.5, 0.3}, 2), DomainError);
  CHECK_THROWS_AS(smoothness_probe(t, {0.0}, 2), DomainError);
  CHECK_THROWS_AS(smoothness_probe(t, {0.0, 0.3}, 0), DomainError);
}
