#pragma once

#include "bcw/errors.hpp"

namespace bcw {

// Local model [0,inf)^k x R^(m-k): coordinates 1..depth carry a boundary
// face, coordinates depth+1..dim are interior.  dim 0 is the one-point model.
struct LocalModel {
  int dim = 1;
  int depth = 0;

  LocalModel() = default;
  LocalModel(int m, int k) : dim(m), depth(k) {
    if (m < 0 || k < 0 || k > m) throw DomainError("invalid local model dimensions");
  }
  bool is_boundary(int i) const { return i >= 1 && i <= depth; }
  bool is_interior(int i) const { return i > depth && i <= dim; }
};

}  // namespace bcw
