#include <catch2/catch_amalgamated.hpp>

#include "bcw/leading.hpp"

using namespace bcw;

static const LocalModel m11(1, 1);
static const LocalModel m22(2, 2);

static SeriesKey K(const Rational& a, long b = 0, long c = 0) { return SeriesKey{a, b, c}; }

TEST_CASE("monomial and log leaves expand to single keys") {
  auto s = face_series(pow_var(1, Rational(1, 2)), 1, m11);
  REQUIRE(s.tag == FaceSeries::Tag::Series);
  REQUIRE(s.terms.size() == 1);
  CHECK(s.terms.begin()->first == K(Rational(1, 2)));

  auto l = face_series(log_var(1), 1, m11);
  CHECK(l.terms.begin()->first == K(Rational(0), 1, 0));
  auto ll = face_series(log_neg_log(1), 1, m11);
  CHECK(ll.terms.begin()->first == K(Rational(0), 0, 1));
  auto inv = face_series(ipow(log_var(1), -1), 1, m11);
  CHECK(inv.terms.begin()->first == K(Rational(0), -1, 0));
}

TEST_CASE("dominance order ranks smaller powers then higher logs first") {
  SeriesKeyLess less;
  CHECK(less(K(Rational(1, 2)), K(Rational(1))));
  CHECK(less(K(Rational(0), 2, 0), K(Rational(0), 1, 0)));
  CHECK(less(K(Rational(0), 1, 0), K(Rational(0), 0, 0)));
  CHECK(less(K(Rational(0), 0, 0), K(Rational(0), -1, 0)));
  CHECK(less(K(Rational(0), 0, 1), K(Rational(0), 0, 0)));
  CHECK(less(K(Rational(0), 1, 0), K(Rational(0), 0, 5)));
  CHECK(key_unbounded(K(Rational(-1))));
  CHECK(key_unbounded(K(Rational(0), 1, 0)));
  CHECK(key_vanishes(K(Rational(0), -1, 3)));
  CHECK(key_vanishes(K(Rational(0), 0, -1)));
}

TEST_CASE("geometric division") {
  auto f = div(num(1), sub(num(1), var(1)));
  auto s = face_series(f, 1, m11, 5);
  REQUIRE(s.tag == FaceSeries::Tag::Series);
  auto it = s.terms.begin();
  for (int n = 0; n < 5; ++n, ++it) {
    REQUIRE(it != s.terms.end());
    CHECK(it->first == K(Rational(n)));
    CHECK(symbolically_equal(it->second.coeff, num(1)));
  }
}

TEST_CASE("division with a parameter leading coefficient") {
  // x/(x+y) at the face x->0 starts at x/y
  auto f = div(var(1), add(var(1), var(2)));
  auto s = face_series(f, 1, m22);
  REQUIRE(!s.terms.empty());
  CHECK(s.terms.begin()->first == K(Rational(1)));
  CHECK(symbolically_equal(s.terms.begin()->second.coeff, div(num(1), var(2))));
}

TEST_CASE("exponential shifts and rapid behavior") {
  CHECK(face_series(exp_(mul(num(3), log_var(1))), 1, m11).terms.begin()->first == K(Rational(3)));

  auto dec = face_series(exp_(sub(var(1), pow_var(1, Rational(-1)))), 1, m11);
  CHECK(dec.tag == FaceSeries::Tag::RapidDecay);
  auto gro = face_series(exp_(sub(pow_var(1, Rational(-1)), var(1))), 1, m11);
  CHECK(gro.tag == FaceSeries::Tag::RapidGrowth);

  // exp(log(-log x)) = -log x
  auto ll = face_series(exp_(log_neg_log(1)), 1, m11);
  REQUIRE(ll.terms.size() == 1);
  CHECK(ll.terms.begin()->first == K(Rational(0), 1, 0));
  CHECK(symbolically_equal(ll.terms.begin()->second.coeff, num(-1)));

  // exp((log x)^2) outgrows every power
  CHECK(face_series(exp_(ipow(log_var(1), 2)), 1, m11).tag == FaceSeries::Tag::RapidGrowth);
  // exp((log x)^3) decays (log x -> -infinity)
  CHECK(face_series(exp_(ipow(log_var(1), 3)), 1, m11).tag == FaceSeries::Tag::RapidDecay);
}

TEST_CASE("trig of vanishing and unbounded arguments") {
  auto s = face_series(sin_(var(1)), 1, m11);
  auto it = s.terms.begin();
  CHECK(it->first == K(Rational(1)));
  CHECK(symbolically_equal(it->second.coeff, num(1)));
  ++it;
  CHECK(it->first == K(Rational(3)));
  CHECK(symbolically_equal(it->second.coeff, num(Rational(-1, 6))));

  auto o = face_series(sin_(log_var(1)), 1, m11);
  REQUIRE(o.terms.size() == 1);
  CHECK(o.terms.begin()->first == K(Rational(0)));
  CHECK(o.terms.begin()->second.osc);

  // sin of rapid growth is bounded oscillation, cos of rapid decay is 1
  CHECK(face_series(sin_(exp_(pow_var(1, Rational(-1)))), 1, m11).terms.begin()->second.osc);
  auto c = face_series(cos_(exp_(sub(var(1), pow_var(1, Rational(-1))))), 1, m11);
  REQUIRE(c.terms.size() == 1);
  CHECK(symbolically_equal(c.terms.begin()->second.coeff, num(1)));
}

TEST_CASE("products track oscillation flags") {
  auto f = mul(ipow(var(1), 2), sin_(pow_var(1, Rational(-1))));
  auto s = face_series(f, 1, m11);
  REQUIRE(!s.terms.empty());
  CHECK(s.terms.begin()->first == K(Rational(2)));
  CHECK(s.terms.begin()->second.osc);
}

TEST_CASE("face limits") {
  auto lim0 = face_limit(ipow(log_var(1), -1), 1, m11);
  CHECK(lim0.kind == LimitKind::Finite);
  CHECK(symbolically_equal(lim0.value, num(0)));

  CHECK(face_limit(sin_(log_var(1)), 1, m11).kind == LimitKind::NoLimit);
  CHECK(face_limit(pow_var(1, Rational(-1)), 1, m11).kind == LimitKind::Infinite);
  CHECK(face_limit(log_var(1), 1, m11).kind == LimitKind::Infinite);

  auto lc = face_limit(add(mul(var(1), var(2)), num(3)), 1, m22);
  REQUIRE(lc.kind == LimitKind::Finite);
  CHECK(symbolically_equal(lc.value, num(3)));
}

TEST_CASE("evaluation with boundary zeros takes iterated limits") {
  auto f = add(mul(var(1), log_var(1)), var(2));
  CHECK(evaluate(f, {0.0, 0.5}, m22) == Catch::Approx(0.5));
  CHECK(evaluate(f, {0.0, 0.0}, m22) == 0.0);
  CHECK(evaluate(ipow(log_var(1), -1), {0.0}, m11) == 0.0);
  CHECK(evaluate(f, {0.25, 0.5}, m22) == Catch::Approx(0.25 * std::log(0.25) + 0.5));
  CHECK_THROWS_AS(evaluate(pow_var(1, Rational(-1)), {0.0}, m11), DomainError);
  CHECK_THROWS_AS(evaluate(sin_(log_var(1)), {0.0}, m11), Indeterminate);
}

TEST_CASE("numeric leading-power fits") {
  auto fit1 = fit_leading_power(pow_var(1, Rational(3, 2)), 1, m11, 0, 0);
  REQUIRE(fit1);
  CHECK(std::abs(*fit1 - 1.5) < 1e-3);

  auto f2 = mul(pow_var(1, Rational(2, 3)), ipow(log_var(1), 2));
  auto fit2 = fit_leading_power(f2, 1, m11, 2, 0);
  REQUIRE(fit2);
  CHECK(std::abs(*fit2 - 2.0 / 3.0) < 1e-3);

  auto fit3 = fit_leading_power(ipow(log_var(1), -1), 1, m11, -1, 0);
  REQUIRE(fit3);
  CHECK(std::abs(*fit3) < 1e-3);

  auto f4 = div(num(1), log_neg_log(1));
  auto fit4 = fit_leading_power(f4, 1, m11, 0, -1);
  REQUIRE(fit4);
  CHECK(std::abs(*fit4) < 1e-3);

  CHECK(check_bounded_oscillation(mul(pow_var(1, Rational(2, 3)), sin_(log_var(1))), 1, m11,
                                  K(Rational(2, 3))));
}

TEST_CASE("rapid scales combine through products and sums") {
  // e^(1/x) * e^(-1/x^2) decays: the exponents add exactly
  auto f = mul(exp_(pow_var(1, Rational(-1))), exp_(neg(pow_var(1, Rational(-2)))));
  CHECK(face_series(f, 1, m11).tag == FaceSeries::Tag::RapidDecay);
  // e^(1/x) * e^(-1/x) collapses to 1
  auto g = mul(exp_(pow_var(1, Rational(-1))), exp_(neg(pow_var(1, Rational(-1)))));
  auto sg = face_series(g, 1, m11);
  REQUIRE(sg.tag == FaceSeries::Tag::Series);
  CHECK(symbolically_equal(sg.terms.begin()->second.coeff, num(1)));
  // (1/x + 1/x^2) e^(1/x): equal scales merge their polynomial factors
  auto h = add(mul(pow_var(1, Rational(-1)), exp_(pow_var(1, Rational(-1)))),
               mul(pow_var(1, Rational(-2)), exp_(pow_var(1, Rational(-1)))));
  auto sh = face_series(h, 1, m11);
  CHECK(sh.tag == FaceSeries::Tag::RapidGrowth);
  CHECK(sh.terms.size() == 2);
  // cancellation of matching rapid parts
  auto z = sub(exp_(pow_var(1, Rational(-1))), exp_(pow_var(1, Rational(-1))));
  CHECK(face_series(z, 1, m11).is_zero());
}

TEST_CASE("indeterminate configurations are reported") {
  CHECK_THROWS_AS(face_series(exp_(mul(var(2), log_var(1))), 1, m22), Indeterminate);
  CHECK_THROWS_AS(face_series(div(num(1), sin_(log_var(1))), 1, m11), Indeterminate);
  // growth between the power and exponential scales
  CHECK_THROWS_AS(face_series(exp_(ipow(log_neg_log(1), 2)), 1, m11), Indeterminate);
}

TEST_CASE("leading_behavior extracts exponent, log power, and coefficient") {
  auto lb = leading_behavior(mul(pow_var(1, Rational(1, 2)), add(num(1), var(1))), 1, m11);
  CHECK(lb.alpha == Rational(1, 2));
  CHECK(lb.b == 0);
  CHECK(lb.c == 0);
  CHECK(is_num(lb.coeff, Rational(1)));

  auto lc = leading_behavior(ipow(log_var(1), -1), 1, m11);
  CHECK(lc.alpha == Rational(0));
  CHECK(lc.b == -1);
  CHECK(is_num(lc.coeff, Rational(1)));

  auto ld = leading_behavior(add(mul(var(1), log_var(1)), ipow(var(1), 2)), 1, m11);
  CHECK(ld.alpha == Rational(1));
  CHECK(ld.b == 1);
  CHECK(is_num(ld.coeff, Rational(1)));

  CHECK(leading_behavior(num(0), 1, m11).zero);
  CHECK_THROWS_AS(leading_behavior(exp_(pow_var(1, Rational(-1))), 1, m11), Indeterminate);
}
