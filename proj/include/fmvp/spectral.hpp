#pragma once

#include <complex>
#include <iosfwd>
#include <span>
#include <vector>

#include "fmvp/autodiff.hpp"
#include "fmvp/tensor.hpp"

namespace fmvp {

// ---------------------------------------------------------------------------
// 1D and 2D transforms

/// In-place unnormalized DFT, X_k = sum_n x_n exp(-+2 pi i k n / N).
/// Radix-2 Cooley-Tukey for power-of-two lengths, Bluestein otherwise.
void fft_inplace(std::vector<std::complex<double>>& data, bool inverse);

/// Orthonormal real 2D DFT of one H x W plane (row-major), returning the
/// H x (W/2+1) half spectrum, row-major.
std::vector<std::complex<double>> rdft2_plane(std::span<const float> plane, std::size_t H, std::size_t W);

/// Inverse of rdft2_plane: rebuilds the full spectrum by conjugate symmetry.
std::vector<double> irdft2_plane(std::span<const std::complex<double>> half, std::size_t H, std::size_t W);

inline std::size_t half_width(std::size_t W) { return W / 2 + 1; }

/// Weight of half-spectrum column l in the full spectrum: 2 for columns with
/// a conjugate mirror, 1 for DC and (even W) Nyquist.
inline double symmetry_weight(std::size_t l, std::size_t W) {
  return (l == 0 || (W % 2 == 0 && l == W / 2)) ? 1.0 : 2.0;
}

/// Half spectrum of a rank-5 video (B, C, T, H, W) -> (B, C, T, H, W/2+1),
/// one orthonormal transform per (b, c, t) plane. Stored as interleaved
/// float (re, im) pairs.
struct HalfSpectrum {
  Shape shape;            // (B, C, T, H, W')
  std::size_t width = 0;  // original W
  std::vector<std::complex<float>> data;

  std::size_t planes() const { return shape[0] * shape[1] * shape[2]; }
  std::size_t plane_size() const { return shape[3] * shape[4]; }
};

HalfSpectrum rdft2(const Tensor& video);
Tensor irdft2(const HalfSpectrum& spec);

/// Energy of the full spectrum implied by a half spectrum.
double spectral_energy(const HalfSpectrum& spec);

// ---------------------------------------------------------------------------
// Frequency gate

/// w_ij = exp(-tau * d_ij) + floor over the half-spectrum grid, where
/// d_ij = sqrt((i/H)^2 + (j/W')^2).
struct FrequencyWeightMask {
  std::size_t height = 0;
  std::size_t width = 0;  // W'
  double tau = 5.0;
  double floor = 0.1;
  std::vector<float> weights;  // height x width, row-major

  float at(std::size_t i, std::size_t j) const { return weights[i * width + j]; }
  double distance(std::size_t i, std::size_t j) const;
};

FrequencyWeightMask build_weight_mask(std::size_t H, std::size_t W_half, double tau = 5.0, double floor = 0.1);

// ---------------------------------------------------------------------------
// Frequency-gated loss

enum class FglResidual {
  /// mean (w * |F(v) - F(u)|)^2, the magnitude of the complex difference.
  complex_difference,
  /// mean (w * (|F(v)| - |F(u)|))^2, the difference of magnitudes.
  magnitude_difference,
};

/// Magnitudes below this get a zero gradient.
inline constexpr double kMagnitudeGuard = 1e-8;

/// Frequency-gated loss between a predicted velocity (differentiable) and a
/// fixed target, mean-reduced over all B*C*T*H*W' spectral entries.
Var fgl_loss(Var v_pred, const Tensor& v_target, const FrequencyWeightMask& mask,
             FglResidual residual = FglResidual::complex_difference);

// ---------------------------------------------------------------------------
// Radial power spectral density

struct PsdCurve {
  std::vector<double> radius;      // bin centres in [0, 1]
  std::vector<double> mean_power;  // mean power per full-spectrum position
  std::vector<double> weight;      // full-spectrum positions per bin, summed over planes
  std::vector<double> log10_power; // log10(max(mean_power, 1e-12))

  /// Sum of un-logged power over all bins.
  double total_power() const;
};

inline constexpr double kPsdFloor = 1e-12;

/// Radially binned power spectrum averaged over every (b, c, t) plane.
/// Radius of (k, l) is sqrt((fy^2 + fx^2) / 2) with fy = min(k, H-k)/(H/2)
/// and fx = l/(W/2), so it spans [0, 1].
PsdCurve psd_radial(const Tensor& video, std::size_t bins);

/// Average of several curves with identical binning (log recomputed from the
/// averaged power).
PsdCurve average_curves(std::span<const PsdCurve> curves);

/// L1 distance between two curves' log10 power.
double psd_log_l1(const PsdCurve& a, const PsdCurve& b);

void write_psd_csv(std::ostream& os, const PsdCurve& curve);

}  // namespace fmvp
