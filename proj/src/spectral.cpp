#include "fmvp/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

#include "fmvp/csv.hpp"
#include "fmvp/errors.hpp"

namespace fmvp {

using cd = std::complex<double>;

namespace {

bool is_pow2(std::size_t n) { return n && (n & (n - 1)) == 0; }

void fft_radix2(std::vector<cd>& a, bool inverse) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = sign * 2.0 * std::numbers::pi / static_cast<double>(len);
    const std::size_t half = len / 2;
    for (std::size_t k = 0; k < half; ++k) {
      const cd w = std::polar(1.0, ang * static_cast<double>(k));
      for (std::size_t i = 0; i < n; i += len) {
        const cd u = a[i + k];
        const cd v = a[i + k + half] * w;
        a[i + k] = u + v;
        a[i + k + half] = u - v;
      }
    }
  }
}

// Chirp-z: X_k = conj(c_k) * sum_n (x_n conj(c_n)) c_{k-n}, c_j = exp(i pi j^2 / N).
void fft_bluestein(std::vector<cd>& a, bool inverse) {
  const std::size_t n = a.size();
  std::size_t m = 1;
  while (m < 2 * n - 1) m <<= 1;
  const double sign = inverse ? -1.0 : 1.0;
  std::vector<cd> chirp(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t k2 = (k * k) % (2 * n);
    chirp[k] = std::polar(1.0, sign * std::numbers::pi * static_cast<double>(k2) / static_cast<double>(n));
  }
  std::vector<cd> x(m), y(m);
  for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * std::conj(chirp[k]);
  y[0] = chirp[0];
  for (std::size_t k = 1; k < n; ++k) y[k] = y[m - k] = chirp[k];
  fft_radix2(x, false);
  fft_radix2(y, false);
  for (std::size_t k = 0; k < m; ++k) x[k] *= y[k];
  fft_radix2(x, true);
  const double inv_m = 1.0 / static_cast<double>(m);
  for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * inv_m * std::conj(chirp[k]);
}

}  // namespace

void fft_inplace(std::vector<cd>& data, bool inverse) {
  if (data.size() <= 1) return;
  if (is_pow2(data.size())) {
    fft_radix2(data, inverse);
  } else {
    fft_bluestein(data, inverse);
  }
}

std::vector<cd> rdft2_plane(std::span<const float> plane, std::size_t H, std::size_t W) {
  if (plane.size() != H * W) throw ShapeError("rdft2: plane size does not match H*W");
  const std::size_t Wh = half_width(W);
  std::vector<cd> out(H * Wh);
  std::vector<cd> row(W);
  for (std::size_t m = 0; m < H; ++m) {
    for (std::size_t n = 0; n < W; ++n) row[n] = plane[m * W + n];
    fft_inplace(row, false);
    for (std::size_t l = 0; l < Wh; ++l) out[m * Wh + l] = row[l];
  }
  std::vector<cd> col(H);
  const double s = 1.0 / std::sqrt(static_cast<double>(H * W));
  for (std::size_t l = 0; l < Wh; ++l) {
    for (std::size_t k = 0; k < H; ++k) col[k] = out[k * Wh + l];
    fft_inplace(col, false);
    for (std::size_t k = 0; k < H; ++k) out[k * Wh + l] = col[k] * s;
  }
  return out;
}

std::vector<double> irdft2_plane(std::span<const cd> half, std::size_t H, std::size_t W) {
  const std::size_t Wh = half_width(W);
  if (half.size() != H * Wh) throw ShapeError("irdft2: half spectrum size does not match H*(W/2+1)");
  std::vector<cd> full(H * W);
  for (std::size_t k = 0; k < H; ++k) {
    for (std::size_t l = 0; l < W; ++l) {
      if (l < Wh) {
        full[k * W + l] = half[k * Wh + l];
      } else {
        full[k * W + l] = std::conj(half[((H - k) % H) * Wh + (W - l)]);
      }
    }
  }
  std::vector<cd> buf(std::max(H, W));
  for (std::size_t k = 0; k < H; ++k) {
    buf.assign(full.begin() + k * W, full.begin() + (k + 1) * W);
    fft_inplace(buf, true);
    std::copy(buf.begin(), buf.end(), full.begin() + k * W);
  }
  buf.resize(H);
  for (std::size_t n = 0; n < W; ++n) {
    for (std::size_t k = 0; k < H; ++k) buf[k] = full[k * W + n];
    fft_inplace(buf, true);
    for (std::size_t k = 0; k < H; ++k) full[k * W + n] = buf[k];
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(H * W));
  std::vector<double> out(H * W);
  for (std::size_t i = 0; i < H * W; ++i) out[i] = full[i].real() * s;
  return out;
}

namespace {

void require_video(const char* what, const Shape& s) {
  if (s.size() != 5) throw ShapeError(std::string(what) + ": expected rank-5 video, got " + shape_str(s));
}

}  // namespace

HalfSpectrum rdft2(const Tensor& video) {
  require_video("rdft2", video.shape());
  const auto& s = video.shape();
  const std::size_t H = s[3], W = s[4], Wh = half_width(W);
  HalfSpectrum out;
  out.shape = {s[0], s[1], s[2], H, Wh};
  out.width = W;
  const std::size_t planes = s[0] * s[1] * s[2];
  out.data.resize(planes * H * Wh);
  for (std::size_t p = 0; p < planes; ++p) {
    auto z = rdft2_plane(video.data().subspan(p * H * W, H * W), H, W);
    for (std::size_t i = 0; i < z.size(); ++i) out.data[p * H * Wh + i] = std::complex<float>(z[i]);
  }
  return out;
}

Tensor irdft2(const HalfSpectrum& spec) {
  const std::size_t H = spec.shape[3], W = spec.width, Wh = spec.shape[4];
  Tensor out(Shape{spec.shape[0], spec.shape[1], spec.shape[2], H, W});
  std::vector<cd> half(H * Wh);
  for (std::size_t p = 0; p < spec.planes(); ++p) {
    for (std::size_t i = 0; i < H * Wh; ++i) half[i] = cd(spec.data[p * H * Wh + i]);
    auto x = irdft2_plane(half, H, W);
    for (std::size_t i = 0; i < H * W; ++i) out[p * H * W + i] = static_cast<float>(x[i]);
  }
  return out;
}

double spectral_energy(const HalfSpectrum& spec) {
  const std::size_t Wh = spec.shape[4];
  double e = 0.0;
  for (std::size_t i = 0; i < spec.data.size(); ++i) {
    const std::size_t l = i % Wh;
    e += symmetry_weight(l, spec.width) * std::norm(cd(spec.data[i]));
  }
  return e;
}

// ---------------------------------------------------------------------------

double FrequencyWeightMask::distance(std::size_t i, std::size_t j) const {
  const double y = static_cast<double>(i) / static_cast<double>(height);
  const double x = static_cast<double>(j) / static_cast<double>(width);
  return std::sqrt(y * y + x * x);
}

FrequencyWeightMask build_weight_mask(std::size_t H, std::size_t W_half, double tau, double floor) {
  if (H == 0 || W_half == 0) throw ContractError("weight mask: empty grid");
  if (!(tau > 0.0)) throw ContractError("weight mask: tau must be positive");
  if (!(floor >= 0.0)) throw ContractError("weight mask: floor must be non-negative");
  FrequencyWeightMask m;
  m.height = H;
  m.width = W_half;
  m.tau = tau;
  m.floor = floor;
  m.weights.resize(H * W_half);
  for (std::size_t i = 0; i < H; ++i)
    for (std::size_t j = 0; j < W_half; ++j)
      m.weights[i * W_half + j] = static_cast<float>(std::exp(-tau * m.distance(i, j)) + floor);
  return m;
}

// ---------------------------------------------------------------------------

namespace {

// d/dv of sum_kl Re(conj(G_kl) Z_kl) for Z = rdft2(v): s * Re(sum_kl G_kl e^{+i theta}).
void half_spectrum_adjoint(std::span<const cd> G, std::size_t H, std::size_t W, float* out) {
  const std::size_t Wh = half_width(W);
  std::vector<cd> a(H * Wh);
  std::vector<cd> col(H);
  for (std::size_t l = 0; l < Wh; ++l) {
    for (std::size_t k = 0; k < H; ++k) col[k] = G[k * Wh + l];
    fft_inplace(col, true);
    for (std::size_t m = 0; m < H; ++m) a[m * Wh + l] = col[m];
  }
  const double s = 1.0 / std::sqrt(static_cast<double>(H * W));
  std::vector<cd> row(W);
  for (std::size_t m = 0; m < H; ++m) {
    std::fill(row.begin(), row.end(), cd{});
    for (std::size_t l = 0; l < Wh; ++l) row[l] = a[m * Wh + l];
    fft_inplace(row, true);
    for (std::size_t n = 0; n < W; ++n) out[m * W + n] = static_cast<float>(row[n].real() * s);
  }
}

}  // namespace

Var fgl_loss(Var v_pred, const Tensor& v_target, const FrequencyWeightMask& mask, FglResidual residual) {
  const auto& s = v_pred.shape();
  require_video("fgl_loss", s);
  if (v_target.shape() != s) {
    throw ShapeError("fgl_loss: shape mismatch " + shape_str(s) + " vs " + shape_str(v_target.shape()));
  }
  const std::size_t H = s[3], W = s[4], Wh = half_width(W);
  if (mask.height != H || mask.width != Wh) {
    throw ShapeError("fgl_loss: weight mask (" + std::to_string(mask.height) + "," +
                     std::to_string(mask.width) + ") does not match spectrum (" + std::to_string(H) +
                     "," + std::to_string(Wh) + ")");
  }
  const std::size_t planes = s[0] * s[1] * s[2];
  const double n = static_cast<double>(planes * H * Wh);

  // Per-entry gradient coefficient G = dL/dRe + i dL/dIm, kept for backward.
  std::vector<cd> G(planes * H * Wh);
  double loss = 0.0;
  for (std::size_t p = 0; p < planes; ++p) {
    auto zp = rdft2_plane(v_pred.value().data().subspan(p * H * W, H * W), H, W);
    auto zt = rdft2_plane(v_target.data().subspan(p * H * W, H * W), H, W);
    for (std::size_t i = 0; i < H * Wh; ++i) {
      const double w = mask.weights[i];
      cd g{};
      if (residual == FglResidual::complex_difference) {
        const cd d = zp[i] - zt[i];
        const double mag = std::abs(d);
        loss += w * w * mag * mag;
        if (mag >= kMagnitudeGuard) g = (2.0 / n) * w * w * mag * (d / mag);
      } else {
        const double mp = std::abs(zp[i]);
        const double r = mp - std::abs(zt[i]);
        loss += w * w * r * r;
        if (mp >= kMagnitudeGuard) g = (2.0 / n) * w * w * r * (zp[i] / mp);
      }
      G[p * H * Wh + i] = g;
    }
  }
  loss /= n;
  Shape in_shape = s;
  return v_pred.graph()->record(
      "fgl_loss", Tensor::scalar(static_cast<float>(loss)), {v_pred},
      [G = std::move(G), in_shape, planes, H, W, Wh](const Tensor& g, std::vector<Tensor>& gin,
                                                     const std::vector<bool>& needs) {
        if (!needs[0]) return;
        gin[0] = Tensor(in_shape);
        std::vector<cd> scaled(H * Wh);
        for (std::size_t p = 0; p < planes; ++p) {
          for (std::size_t i = 0; i < H * Wh; ++i) scaled[i] = G[p * H * Wh + i] * static_cast<double>(g[0]);
          half_spectrum_adjoint(scaled, H, W, gin[0].ptr() + p * H * W);
        }
      },
      loss);
}

// ---------------------------------------------------------------------------

double PsdCurve::total_power() const {
  double t = 0.0;
  for (std::size_t b = 0; b < mean_power.size(); ++b) t += mean_power[b] * weight[b];
  return t;
}

PsdCurve psd_radial(const Tensor& video, std::size_t bins) {
  require_video("psd_radial", video.shape());
  if (bins < 2) throw ContractError("psd_radial: need at least 2 bins");
  const auto& s = video.shape();
  const std::size_t H = s[3], W = s[4], Wh = half_width(W);
  const double fy_den = static_cast<double>(std::max<std::size_t>(1, H / 2));
  const double fx_den = static_cast<double>(std::max<std::size_t>(1, W / 2));

  std::vector<std::size_t> bin_of(H * Wh);
  for (std::size_t k = 0; k < H; ++k)
    for (std::size_t l = 0; l < Wh; ++l) {
      const double fy = static_cast<double>(std::min(k, H - k)) / fy_den;
      const double fx = static_cast<double>(l) / fx_den;
      const double r = std::sqrt((fy * fy + fx * fx) / 2.0);
      bin_of[k * Wh + l] = std::min(bins - 1, static_cast<std::size_t>(r * static_cast<double>(bins)));
    }

  std::vector<double> power(bins, 0.0), weight(bins, 0.0);
  const std::size_t planes = s[0] * s[1] * s[2];
  for (std::size_t p = 0; p < planes; ++p) {
    auto z = rdft2_plane(video.data().subspan(p * H * W, H * W), H, W);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double wt = symmetry_weight(i % Wh, W);
      power[bin_of[i]] += wt * std::norm(z[i]);
      weight[bin_of[i]] += wt;
    }
  }

  PsdCurve c;
  for (std::size_t b = 0; b < bins; ++b) {
    c.radius.push_back((static_cast<double>(b) + 0.5) / static_cast<double>(bins));
    c.mean_power.push_back(weight[b] > 0.0 ? power[b] / weight[b] : 0.0);
    c.weight.push_back(weight[b]);
    c.log10_power.push_back(std::log10(std::max(c.mean_power.back(), kPsdFloor)));
  }
  return c;
}

PsdCurve average_curves(std::span<const PsdCurve> curves) {
  if (curves.empty()) throw ContractError("average_curves: no curves");
  PsdCurve out = curves[0];
  const std::size_t bins = out.radius.size();
  std::fill(out.mean_power.begin(), out.mean_power.end(), 0.0);
  std::fill(out.weight.begin(), out.weight.end(), 0.0);
  std::vector<double> energy(bins, 0.0);
  for (const auto& c : curves) {
    if (c.radius.size() != bins) throw ContractError("average_curves: bin counts differ");
    for (std::size_t b = 0; b < bins; ++b) {
      energy[b] += c.mean_power[b] * c.weight[b];
      out.weight[b] += c.weight[b];
    }
  }
  for (std::size_t b = 0; b < bins; ++b) {
    out.mean_power[b] = out.weight[b] > 0.0 ? energy[b] / out.weight[b] : 0.0;
    out.log10_power[b] = std::log10(std::max(out.mean_power[b], kPsdFloor));
  }
  return out;
}

double psd_log_l1(const PsdCurve& a, const PsdCurve& b) {
  if (a.log10_power.size() != b.log10_power.size()) throw ContractError("psd_log_l1: bin counts differ");
  double d = 0.0;
  for (std::size_t i = 0; i < a.log10_power.size(); ++i) d += std::abs(a.log10_power[i] - b.log10_power[i]);
  return d;
}

void write_psd_csv(std::ostream& os, const PsdCurve& curve) {
  os << "radius,log10_power\n";
  for (std::size_t b = 0; b < curve.radius.size(); ++b) {
    os << fmt_num(curve.radius[b]) << ',' << fmt_num(curve.log10_power[b]) << '\n';
  }
}

}  // namespace fmvp
