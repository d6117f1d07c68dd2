// Independent reference computations shared by the unit and acceptance tests.
#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <numbers>
#include <vector>

namespace fmvp::oracle {

/// Orthonormal 2D DFT straight from the definition, half spectrum only.
inline std::vector<std::complex<double>> naive_rdft2(const std::vector<float>& x, std::size_t H, std::size_t W) {
  using cd = std::complex<double>;
  const std::size_t Wh = W / 2 + 1;
  std::vector<cd> out(H * Wh);
  const double norm = 1.0 / std::sqrt(double(H * W));
  for (std::size_t k = 0; k < H; ++k)
    for (std::size_t l = 0; l < Wh; ++l) {
      cd acc = 0.0;
      for (std::size_t m = 0; m < H; ++m)
        for (std::size_t n = 0; n < W; ++n) {
          const double ang = -2.0 * std::numbers::pi * (double(k * m) / H + double(l * n) / W);
          acc += double(x[m * W + n]) * cd(std::cos(ang), std::sin(ang));
        }
      out[k * Wh + l] = acc * norm;
    }
  return out;
}

/// P(adv > clean) + 0.5 P(adv == clean) by counting every pair.
inline double pair_auc(const std::vector<double>& clean, const std::vector<double>& adv) {
  double s = 0;
  for (double c : clean)
    for (double a : adv) s += a > c ? 1.0 : (a == c ? 0.5 : 0.0);
  return s / double(clean.size() * adv.size());
}

}  // namespace fmvp::oracle
