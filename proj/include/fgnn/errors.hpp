#pragma once

#include <stdexcept>
#include <string>

namespace fgnn {

// Shape/dimension mismatches between tensors, nets, or feature families.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Structural preconditions on graphs: bad scopes, missing edges, invalid matchings.
struct StructureError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Problem instance too large for an exact method (e.g. brute force state space).
struct CapacityError : std::length_error {
  using std::length_error::length_error;
};

}  // namespace fgnn
