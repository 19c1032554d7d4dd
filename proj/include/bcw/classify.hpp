#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bcw/leading.hpp"

namespace bcw {

// Boundary smoothness classes, coarsest to finest obstruction:
//   NotRDifferentiable   some b-derivative of order <= 1 has no continuous
//                        boundary extension
//   RDifferentiableOnly  order-1 extensions exist, some higher order fails
//   RSmoothNotA          all examined b-derivatives extend continuously but
//                        some lacks a positive-power decay bound at a face
//   ASmooth              every examined b-derivative at each face either
//                        vanishes to a positive power or decays rapidly
enum class SmoothClass {
  NotRDifferentiable,
  RDifferentiableOnly,
  RSmoothNotA,
  ASmooth,
};

inline const char* to_string(SmoothClass c) {
  switch (c) {
    case SmoothClass::ASmooth:
      return "a-smooth";
    case SmoothClass::RSmoothNotA:
      return "r-smooth-not-a";
    case SmoothClass::RDifferentiableOnly:
      return "r-differentiable-only";
    case SmoothClass::NotRDifferentiable:
      return "not-r-differentiable";
  }
  return "?";
}

inline std::string format_series_key(const SeriesKey& k) {
  std::string s = "x^(" + k.alpha.str() + ")";
  if (k.b != 0) s += " (log x)^" + std::to_string(k.b);
  if (k.c != 0) s += " (loglog x)^" + std::to_string(k.c);
  return s;
}

struct FaceClassification {
  int face = 0;
  SmoothClass verdict = SmoothClass::ASmooth;
  bool log_decay = false;           // obstructions are all log-type decay to 0
  std::string witness;              // derivative word exhibiting the obstruction
  std::optional<SeriesKey> witness_key;
  std::optional<SeriesKey> leading;  // leading behavior of the function itself
  bool numeric_ok = true;
  std::optional<double> fitted_power;
};

struct Classification {
  SmoothClass overall = SmoothClass::ASmooth;
  bool log_decay = false;
  int order = 0;
  bool numeric_ok = true;
  std::vector<FaceClassification> faces;
};

namespace detail {

inline std::string word_str(const std::vector<int>& beta) {
  std::string s;
  for (std::size_t j = 0; j < beta.size(); ++j) {
    if (beta[j] == 0) continue;
    if (!s.empty()) s += " ";
    s += "x" + std::to_string(j + 1);
    if (beta[j] > 1) s += "^" + std::to_string(beta[j]);
  }
  return s.empty() ? "id" : s;
}

inline void enumerate_multi_indices(int dim, int order, std::vector<int>& beta, int from,
                                    std::vector<std::vector<int>>& out) {
  out.push_back(beta);
  for (int j = from; j < dim; ++j) {
    int used = 0;
    for (int v : beta) used += v;
    if (used >= order) break;
    ++beta[j];
    enumerate_multi_indices(dim, order, beta, j, out);
    --beta[j];
  }
}

// Does a face series admit a continuous extension to the face?
inline bool series_continuous(const FaceSeries& s) {
  if (s.tag != FaceSeries::Tag::Series) return s.tag == FaceSeries::Tag::RapidDecay;
  if (s.terms.empty()) return true;
  const auto& [k, t] = *s.terms.begin();
  if (key_unbounded(k)) return false;
  if (key_is_zero(k) && t.osc) return false;
  return true;
}

enum class DecayCheck { Positive, LogType, Fails };

// Decay quality of a derivative that must vanish at the face.
inline DecayCheck series_decay(const FaceSeries& s) {
  if (s.tag != FaceSeries::Tag::Series)
    return s.tag == FaceSeries::Tag::RapidDecay ? DecayCheck::Positive : DecayCheck::Fails;
  if (s.terms.empty()) return DecayCheck::Positive;
  const auto& [k, t] = *s.terms.begin();
  if (k.alpha.is_positive()) return DecayCheck::Positive;
  if (k.alpha.is_zero() && key_vanishes(k)) return DecayCheck::LogType;
  return DecayCheck::Fails;
}

}  // namespace detail

// Classify one scalar function on a local model by examining all iterated
// b-derivatives up to the given order at every boundary face, with a numeric
// cross-check of the leading power.
inline Classification classify_function(const ExprPtr& f, const LocalModel& model, int order = 6) {
  std::vector<std::vector<int>> indices;
  {
    std::vector<int> beta(static_cast<std::size_t>(model.dim), 0);
    detail::enumerate_multi_indices(model.dim, order, beta, 0, indices);
  }
  // memoized iterated derivatives keyed by multi-index
  std::map<std::vector<int>, ExprPtr> derivs;
  derivs.emplace(std::vector<int>(static_cast<std::size_t>(model.dim), 0), f);
  for (const auto& beta : indices) {
    if (derivs.count(beta)) continue;
    std::vector<int> prev = beta;
    int axis = 0;
    for (int j = model.dim - 1; j >= 0; --j)
      if (beta[static_cast<std::size_t>(j)] > 0) {
        axis = j + 1;
        break;
      }
    --prev[static_cast<std::size_t>(axis - 1)];
    derivs.emplace(beta, b_derivative(derivs.at(prev), axis, model));
  }

  Classification out;
  out.order = order;
  for (int face = 1; face <= model.depth; ++face) {
    FaceClassification fc;
    fc.face = face;
    int continuity_fail = order + 1;  // smallest failing derivative order
    bool a_fail = false;
    bool all_log_type = true;

    for (const auto& beta : indices) {
      int total = 0;
      for (int v : beta) total += v;
      const ExprPtr& d = derivs.at(beta);
      FaceSeries s = face_series(d, face, model);
      if (!detail::series_continuous(s)) {
        if (total < continuity_fail) {
          continuity_fail = total;
          fc.witness = detail::word_str(beta);
          if (s.tag == FaceSeries::Tag::Series && !s.terms.empty())
            fc.witness_key = s.terms.begin()->first;
        }
      }
      if (beta[static_cast<std::size_t>(face - 1)] >= 1) {
        auto decay = detail::series_decay(s);
        if (decay != detail::DecayCheck::Positive) {
          if (!a_fail && continuity_fail > order) {
            fc.witness = detail::word_str(beta);
            if (s.tag == FaceSeries::Tag::Series && !s.terms.empty())
              fc.witness_key = s.terms.begin()->first;
          }
          a_fail = true;
          if (decay == detail::DecayCheck::Fails) all_log_type = false;
        }
      }
    }

    if (continuity_fail <= 1)
      fc.verdict = SmoothClass::NotRDifferentiable;
    else if (continuity_fail <= order)
      fc.verdict = SmoothClass::RDifferentiableOnly;
    else if (a_fail) {
      fc.verdict = SmoothClass::RSmoothNotA;
      fc.log_decay = all_log_type;
    } else {
      fc.verdict = SmoothClass::ASmooth;
    }

    // numeric cross-check on the function's own leading behavior
    FaceSeries fs = face_series(f, face, model);
    if (fs.tag == FaceSeries::Tag::Series && !fs.terms.empty()) {
      const auto& [k, t] = *fs.terms.begin();
      fc.leading = k;
      if (t.osc) {
        fc.numeric_ok = check_bounded_oscillation(f, face, model, k);
      } else {
        auto fit = fit_leading_power(f, face, model, k.b, k.c);
        if (fit) {
          fc.fitted_power = *fit;
          fc.numeric_ok = std::abs(*fit - k.alpha.to_double()) <= 1e-3;
        }
      }
    }

    out.numeric_ok = out.numeric_ok && fc.numeric_ok;
    out.faces.push_back(std::move(fc));
  }

  out.overall = SmoothClass::ASmooth;
  for (const auto& fc : out.faces)
    if (static_cast<int>(fc.verdict) < static_cast<int>(out.overall)) out.overall = fc.verdict;
  if (out.overall == SmoothClass::RSmoothNotA) {
    out.log_decay = true;
    for (const auto& fc : out.faces)
      if (fc.verdict == SmoothClass::RSmoothNotA && !fc.log_decay) out.log_decay = false;
  }
  return out;
}

}  // namespace bcw
