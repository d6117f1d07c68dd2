#pragma once

#include <functional>
#include <string>
#include <vector>

#include "fmvp/autodiff.hpp"
#include "fmvp/params.hpp"

namespace fmvp {

/// Builds a scalar loss in `g`. Must register each entry of `params` it uses
/// as a leaf under the entry's name, and must be deterministic.
using LossBuilder = std::function<Var(Graph& g, const ParamStore& params)>;

struct LeafCheck {
  std::string name;
  /// max_i |analytic_i - numeric_i| / max(max|analytic|, max|numeric|, floor)
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t worst_index = 0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<LeafCheck> leaves;
  bool passed() const;
  /// Names of leaves over tolerance.
  std::vector<std::string> failures() const;
};

/// Central finite differences against backward() for every element of every
/// parameter. The error of a leaf is normalized by the leaf's gradient scale
/// (with an absolute floor) rather than per element: float32 evaluation puts
/// a noise floor under each difference quotient, which would swamp the
/// smallest components.
GradCheckReport grad_check(const LossBuilder& build, const ParamStore& params, float h = 1e-3f,
                           double tol = 1e-3, double abs_floor = 1e-6);

}  // namespace fmvp
