#pragma once

#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <string_view>

namespace bcw {

struct RationalError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Exact rational number with int64 numerator/denominator, always reduced,
/// denominator > 0. Intermediate products use 128-bit arithmetic; results
/// that do not fit in int64 after reduction throw RationalError.
class Rational {
 public:
  constexpr Rational() : p_(0), q_(1) {}
  Rational(std::int64_t n) : p_(n), q_(1) {}
  Rational(std::int64_t p, std::int64_t q) { assign(p, q); }

  std::int64_t num() const { return p_; }
  std::int64_t den() const { return q_; }

  bool is_zero() const { return p_ == 0; }
  bool is_integer() const { return q_ == 1; }
  bool is_positive() const { return p_ > 0; }
  bool is_negative() const { return p_ < 0; }

  double to_double() const { return static_cast<double>(p_) / static_cast<double>(q_); }

  friend Rational operator+(const Rational& a, const Rational& b) {
    return from128(i128(a.p_) * b.q_ + i128(b.p_) * a.q_, i128(a.q_) * b.q_);
  }
  friend Rational operator-(const Rational& a, const Rational& b) {
    return from128(i128(a.p_) * b.q_ - i128(b.p_) * a.q_, i128(a.q_) * b.q_);
  }
  friend Rational operator*(const Rational& a, const Rational& b) {
    return from128(i128(a.p_) * b.p_, i128(a.q_) * b.q_);
  }
  friend Rational operator/(const Rational& a, const Rational& b) {
    if (b.p_ == 0) throw RationalError("rational division by zero");
    return from128(i128(a.p_) * b.q_, i128(a.q_) * b.p_);
  }
  Rational operator-() const {
    Rational r;
    r.p_ = -p_;
    r.q_ = q_;
    return r;
  }
  Rational& operator+=(const Rational& o) { return *this = *this + o; }
  Rational& operator-=(const Rational& o) { return *this = *this - o; }
  Rational& operator*=(const Rational& o) { return *this = *this * o; }
  Rational& operator/=(const Rational& o) { return *this = *this / o; }

  friend bool operator==(const Rational& a, const Rational& b) {
    return a.p_ == b.p_ && a.q_ == b.q_;
  }
  friend bool operator!=(const Rational& a, const Rational& b) { return !(a == b); }
  friend bool operator<(const Rational& a, const Rational& b) {
    return i128(a.p_) * b.q_ < i128(b.p_) * a.q_;
  }
  friend bool operator>(const Rational& a, const Rational& b) { return b < a; }
  friend bool operator<=(const Rational& a, const Rational& b) { return !(b < a); }
  friend bool operator>=(const Rational& a, const Rational& b) { return !(a < b); }

  /// Integer power; negative exponents invert (zero base throws).
  Rational pow(int e) const {
    Rational base = *this;
    if (e < 0) {
      if (p_ == 0) throw RationalError("inverse of zero");
      base = Rational(q_, p_);
      e = -e;
    }
    Rational r(1);
    while (e > 0) {
      if (e & 1) r *= base;
      base = (e > 1) ? base * base : base;
      e >>= 1;
    }
    return r;
  }

  /// Parses "p", "p/q", with optional leading '-'.
  static Rational parse(std::string_view s) {
    auto bad = [&] { throw RationalError("bad rational: '" + std::string(s) + "'"); };
    if (s.empty()) bad();
    std::size_t slash = s.find('/');
    std::int64_t p = 0, q = 1;
    try {
      if (slash == std::string_view::npos) {
        p = std::stoll(std::string(s));
      } else {
        p = std::stoll(std::string(s.substr(0, slash)));
        q = std::stoll(std::string(s.substr(slash + 1)));
      }
    } catch (const std::exception&) {
      bad();
    }
    return Rational(p, q);
  }

  std::string str() const {
    if (q_ == 1) return std::to_string(p_);
    return std::to_string(p_) + "/" + std::to_string(q_);
  }

 private:
  using i128 = __int128;
  std::int64_t p_, q_;

  void assign(std::int64_t p, std::int64_t q) {
    if (q == 0) throw RationalError("zero denominator");
    if (q < 0) {
      p = -p;
      q = -q;
    }
    std::int64_t g = std::gcd(p < 0 ? -p : p, q);
    if (g > 1) {
      p /= g;
      q /= g;
    }
    p_ = p;
    q_ = q;
  }

  static Rational from128(i128 p, i128 q) {
    if (q == 0) throw RationalError("zero denominator");
    if (q < 0) {
      p = -p;
      q = -q;
    }
    i128 a = p < 0 ? -p : p;
    i128 g = gcd128(a, q);
    if (g > 1) {
      p /= g;
      q /= g;
    }
    if (p > INT64_MAX || p < INT64_MIN || q > INT64_MAX)
      throw RationalError("rational overflow");
    Rational r;
    r.p_ = static_cast<std::int64_t>(p);
    r.q_ = static_cast<std::int64_t>(q);
    return r;
  }

  static i128 gcd128(i128 a, i128 b) {
    while (b != 0) {
      i128 t = a % b;
      a = b;
      b = t;
    }
    return a;
  }
};

}  // namespace bcw
