#pragma once

// b-tangent calculus: b-Jacobians of maps in the b-frames, b-submersion and
// b-fibration tests, and the b-Lie bracket of b-vector fields.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "bcw/atlas.hpp"
#include "bcw/bderiv.hpp"

namespace bcw {

// Matrix of the b-differential with respect to the b-frames
// (x_1 d/dx_1, ..., x_k d/dx_k, d/dx_{k+1}, ...) of source and target.
// Rows are indexed by target coordinates, columns by source coordinates;
// entries are expressions on the source chart.
struct BFrameMatrix {
  int rows = 0;  // target dimension
  int cols = 0;  // source dimension
  std::vector<std::vector<ExprPtr>> entry;  // [row][col]
};

// b-vector field on a chart: one coefficient per b-frame element.
struct BVectorField {
  Chart chart;
  std::vector<ExprPtr> coeff;
};

// Entry (j,i) of the b-Jacobian:
//   boundary j, boundary i:  f_j^{-1} * x_i * df_j/dx_i
//   boundary j, interior i:  f_j^{-1} * df_j/dx_i
//   interior j, boundary i:  x_i * df_j/dx_i
//   interior j, interior i:  df_j/dx_i
// For boundary j and boundary i this equals a_{i,j} + F_j^{-1} x_i dF_j/dx_i,
// so each entry extends a-smoothly to the faces; `certify` re-derives that and
// checks the face value against the exponent matrix exactly.
inline BFrameMatrix b_jacobian(const ChartedMap& f, bool certify = true, int order = 6) {
  const LocalModel sm = f.source.model();
  std::vector<FactoredComponent> local;
  const std::vector<FactoredComponent>* fact = &f.factored;
  if (f.factored.size() != static_cast<std::size_t>(f.target.depth)) {
    local = detail::exponent_skeleton(f);
    fact = &local;
  }
  for (int j = 1; j <= f.target.depth; ++j)
    if ((*fact)[static_cast<std::size_t>(j - 1)].zero)
      throw NotInterior("b-Jacobian undefined: target component " + std::to_string(j) +
                        " vanishes identically");

  BFrameMatrix J;
  J.rows = f.target.dim;
  J.cols = f.source.dim;
  J.entry.assign(static_cast<std::size_t>(J.rows), std::vector<ExprPtr>());
  for (int j = 1; j <= f.target.dim; ++j) {
    const ExprPtr& fj = f.components[static_cast<std::size_t>(j - 1)];
    auto& row = J.entry[static_cast<std::size_t>(j - 1)];
    row.reserve(static_cast<std::size_t>(J.cols));
    for (int i = 1; i <= f.source.dim; ++i) {
      ExprPtr d = sm.is_boundary(i) ? mul(var(i), d_ordinary(fj, i)) : d_ordinary(fj, i);
      ExprPtr e = j <= f.target.depth ? div(std::move(d), fj, /*nonvanishing=*/true)
                                      : std::move(d);
      row.push_back(simplify(e));
    }
  }

  if (certify) {
    for (int j = 1; j <= f.target.dim; ++j)
      for (int i = 1; i <= f.source.dim; ++i) {
        const ExprPtr& e = J.entry[static_cast<std::size_t>(j - 1)][static_cast<std::size_t>(i - 1)];
        Classification cls = classify_function(e, sm, order);
        if (cls.overall != SmoothClass::ASmooth)
          throw FactorizationFailure("b-Jacobian entry (" + std::to_string(j) + "," +
                                     std::to_string(i) + ") is not a-smooth (" +
                                     std::string(to_string(cls.overall)) + ")");
        if (j <= f.target.depth && sm.is_boundary(i)) {
          FaceLimit lim = face_limit(e, i, sm);
          const Rational& aij =
              (*fact)[static_cast<std::size_t>(j - 1)].exponents[static_cast<std::size_t>(i - 1)];
          if (lim.kind != LimitKind::Finite || !symbolically_equal(lim.value, num(aij)))
            throw FactorizationFailure("b-Jacobian entry (" + std::to_string(j) + "," +
                                       std::to_string(i) +
                                       ") does not restrict to the exponent on the face");
        }
      }
  }
  return J;
}

enum class CheckStatus { Pass, Warn, Fail };

struct SubmersionCheck {
  bool submersion = false;
  CheckStatus status = CheckStatus::Fail;
  double worst_ratio = 0.0;  // min over samples of sigma_min / sigma_max
  int points = 0;
};

// Full target rank of the b-Jacobian at interior, face, and corner samples.
// Rank uses singular values with relative threshold 1e-8; passing samples
// within two decades of the threshold downgrade the status to Warn.
inline SubmersionCheck is_b_submersion_check(const ChartedMap& f, int samples = 32) {
  BFrameMatrix J = b_jacobian(f, /*certify=*/false);
  const LocalModel sm = f.source.model();
  if (J.rows == 0) return {true, CheckStatus::Pass, 1.0, 0};
  if (J.rows > J.cols) {
    SubmersionCheck out;
    out.status = CheckStatus::Fail;
    return out;
  }

  std::vector<std::vector<double>> pts = sample_box(f.domain, samples);
  std::vector<std::vector<double>> extra;
  for (std::size_t n = 0; n < pts.size() && n < 6; ++n) {
    for (int i = 1; i <= sm.depth; ++i) {
      auto p = pts[n];
      p[static_cast<std::size_t>(i - 1)] = 0.0;
      extra.push_back(std::move(p));
    }
    if (sm.depth > 1) {
      auto p = pts[n];
      for (int i = 1; i <= sm.depth; ++i) p[static_cast<std::size_t>(i - 1)] = 0.0;
      extra.push_back(std::move(p));
    }
  }
  pts.insert(pts.end(), extra.begin(), extra.end());
  if (pts.empty()) pts.push_back({});

  SubmersionCheck out;
  out.worst_ratio = 1.0;
  for (const auto& p : pts) {
    Eigen::MatrixXd M(J.rows, J.cols);
    try {
      for (int r = 0; r < J.rows; ++r)
        for (int c = 0; c < J.cols; ++c)
          M(r, c) = evaluate(J.entry[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)], p,
                             sm);
    } catch (const Error&) {
      continue;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(M);
    double smax = svd.singularValues()(0);
    double smin = svd.singularValues()(J.rows - 1);
    double ratio = smax > 0.0 ? smin / smax : 0.0;
    out.worst_ratio = std::min(out.worst_ratio, ratio);
    ++out.points;
  }
  if (out.points == 0) {
    out.status = CheckStatus::Fail;
    return out;
  }
  out.submersion = out.worst_ratio > 1e-8;
  out.status = !out.submersion ? CheckStatus::Fail
               : out.worst_ratio < 1e-6 ? CheckStatus::Warn
                                        : CheckStatus::Pass;
  return out;
}

inline bool is_b_submersion(const ChartedMap& f, int samples = 32) {
  return is_b_submersion_check(f, samples).submersion;
}

// b-normal (from the exponent matrix) and a b-submersion.
inline bool is_b_fibration(ChartedMap& f, int samples = 32, int order = 6) {
  MapFlags fl = classify_map(f, order);
  if (!fl.interior) throw NotInterior("b-fibration test requires an interior map");
  return fl.b_normal && is_b_submersion(f, samples);
}

// [u,v]_i = sum_j (u_j * bd_j v_i - v_j * bd_j u_i), with bd_j the
// b-derivative in the j-th coordinate of the chart's local model.
inline BVectorField b_lie_bracket(const BVectorField& u, const BVectorField& v) {
  if (u.chart.id != v.chart.id || u.chart.dim != v.chart.dim)
    throw DomainError("b-Lie bracket requires fields on the same chart");
  if (u.coeff.size() != static_cast<std::size_t>(u.chart.dim) ||
      v.coeff.size() != static_cast<std::size_t>(v.chart.dim))
    throw DomainError("b-vector field has the wrong number of coefficients");
  const LocalModel m = u.chart.model();
  BVectorField w;
  w.chart = u.chart;
  w.coeff.reserve(static_cast<std::size_t>(m.dim));
  for (int i = 1; i <= m.dim; ++i) {
    std::vector<ExprPtr> terms;
    for (int j = 1; j <= m.dim; ++j) {
      const ExprPtr& uj = u.coeff[static_cast<std::size_t>(j - 1)];
      const ExprPtr& vj = v.coeff[static_cast<std::size_t>(j - 1)];
      terms.push_back(mul(uj, b_derivative(v.coeff[static_cast<std::size_t>(i - 1)], j, m)));
      terms.push_back(neg(mul(vj, b_derivative(u.coeff[static_cast<std::size_t>(i - 1)], j, m))));
    }
    w.coeff.push_back(simplify(add(std::move(terms))));
  }
  return w;
}

}  // namespace bcw
