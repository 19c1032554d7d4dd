#pragma once

#include <stdexcept>
#include <string>

namespace bcw {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Expression-level
struct UnsupportedNode : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct Indeterminate : Error {
  using Error::Error;
};
struct NormalFormTooLarge : Error {
  using Error::Error;
};

// Map/atlas-level
struct FactorizationFailure : Error {
  using Error::Error;
};
struct NotInterior : Error {
  using Error::Error;
};
struct NotADiffeo : Error {
  using Error::Error;
};
struct NotStronglySmooth : Error {
  using Error::Error;
};

// Weights / index sets
struct NotBNormal : Error {
  using Error::Error;
};
struct WeightInconsistent : Error {
  using Error::Error;
};
struct PositivityViolated : Error {
  using Error::Error;
};

// Elliptic
struct NotElliptic : Error {
  using Error::Error;
};
struct NotFredholm : Error {
  using Error::Error;
};
struct DiscretizationUnstable : Error {
  using Error::Error;
};

}  // namespace bcw
