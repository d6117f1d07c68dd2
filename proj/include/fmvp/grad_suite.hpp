#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fmvp/grad_check.hpp"

namespace fmvp {

struct NamedGradCheck {
  std::string name;
  GradCheckReport report;
};

/// Finite-difference checks for every graph primitive, the pooling and
/// cross-entropy ops, fgl_loss (both residual forms), cfm_loss and the
/// velocity network end to end on a (1, 1, 2, 8, 8) input. Inputs are drawn
/// from `seed` and kept away from the kinks of relu and clamp01.
std::vector<NamedGradCheck> run_grad_suite(std::uint64_t seed, double tol = 1e-3, double abs_floor = 1e-6);

}  // namespace fmvp
