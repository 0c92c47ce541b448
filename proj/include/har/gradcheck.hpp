#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "har/tape.hpp"

namespace har {

/// Builds a scalar on `tape` from the registered inputs.
using TapeFunction = std::function<Var(Tape& tape, std::span<const Var> inputs)>;

struct GradCoordinate {
  std::size_t input = 0;
  std::size_t index = 0;
};

struct GradCheckOptions {
  double eps = 1e-5;
  /// Five-point central stencil (error O(eps^4)); the three-point one is
  /// O(eps^2).
  bool fourth_order = false;
  /// Denominator floor. A central difference carries about 1e-16 |f| / eps of
  /// round-off, so gradients far below this floor are compared absolutely.
  double floor = 1e-6;
  /// Coordinates to probe; all coordinates of all inputs when empty.
  std::vector<GradCoordinate> coordinates;
};

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t probed = 0;
  GradCoordinate worst;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares reverse-mode gradients against central differences.
///
/// Relative error per coordinate is |a - n| / max(floor, |a| + |n|). Throws
/// DimensionError when `fn` does not produce a single value.
GradCheckReport grad_check(const TapeFunction& fn, std::span<const Tensor> inputs,
                           const GradCheckOptions& options = {});

/// Single-input convenience form; returns the max relative error.
double grad_check(const std::function<Var(Tape&, Var)>& fn, const Tensor& input, double eps = 1e-5);

}  // namespace har
