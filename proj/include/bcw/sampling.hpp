#pragma once

#include <cstdint>
#include <vector>

#include "bcw/errors.hpp"

namespace bcw {

// Closed coordinate interval of a chart box.
struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

// Van der Corput radical inverse in the given base.
inline double radical_inverse(std::uint64_t n, unsigned base) {
  double inv = 1.0 / base;
  double f = inv;
  double r = 0.0;
  while (n) {
    r += f * static_cast<double>(n % base);
    n /= base;
    f *= inv;
  }
  return r;
}

inline unsigned nth_prime(std::size_t i) {
  static const unsigned ps[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29,
                                31, 37, 41, 43, 47, 53, 59, 61, 67, 71};
  if (i >= sizeof(ps) / sizeof(ps[0])) throw DomainError("sampling dimension too large");
  return ps[i];
}

// Deterministic low-discrepancy samples of a box (Halton sequence, one prime
// base per coordinate, starting at index 1 so no point sits on a face).
// `margin` shrinks each interval toward its center by that relative amount.
inline std::vector<std::vector<double>> sample_box(const std::vector<Interval>& box, int count,
                                                   double margin = 0.0,
                                                   std::uint64_t offset = 1) {
  std::vector<std::vector<double>> pts;
  pts.reserve(static_cast<std::size_t>(count));
  for (int n = 0; n < count; ++n) {
    std::vector<double> p(box.size());
    for (std::size_t d = 0; d < box.size(); ++d) {
      double u = radical_inverse(offset + static_cast<std::uint64_t>(n), nth_prime(d));
      u = margin + (1.0 - 2.0 * margin) * u;
      p[d] = box[d].lo + (box[d].hi - box[d].lo) * u;
    }
    pts.push_back(std::move(p));
  }
  return pts;
}

}  // namespace bcw
