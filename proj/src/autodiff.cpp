#include "fmvp/autodiff.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#include "fmvp/errors.hpp"

namespace fmvp {

using RowMat = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// ---------------------------------------------------------------------------
// Var / Graph

const Tensor& Var::value() const {
  if (!graph_) throw ContractError("var: use of an empty handle");
  return graph_->nodes_[id_].value;
}

double Var::scalar() const {
  const auto& node = graph_->nodes_[id_];
  if (node.exact) return *node.exact;
  return node.value.item();
}

bool Var::requires_grad() const { return graph_->nodes_[id_].requires_grad; }

std::uint32_t Graph::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<std::uint32_t>(nodes_.size() - 1);
}

Var Graph::leaf(std::string name, Tensor value, bool requires_grad) {
  if (backward_done_) throw ContractError("graph: leaf added after backward");
  if (leaf_names_.count(name)) throw ContractError("graph: duplicate leaf name '" + name + "'");
  Node n;
  n.kind = "leaf";
  n.name = name;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.is_leaf = true;
  auto id = push(std::move(n));
  leaf_names_.emplace(std::move(name), id);
  return Var(this, id);
}

Var Graph::constant(Tensor value) {
  Node n;
  n.kind = "constant";
  n.value = std::move(value);
  return Var(this, push(std::move(n)));
}

Var Graph::record(std::string_view kind, Tensor value, std::vector<Var> parents,
                  BackwardFn backward, std::optional<double> exact_scalar) {
  if (backward_done_) throw ContractError("graph: operation recorded after backward");
  Node n;
  n.kind = std::string(kind);
  n.value = std::move(value);
  n.backward = std::move(backward);
  n.exact = exact_scalar;
  for (const auto& p : parents) {
    if (p.graph_ != this) throw ContractError(n.kind + ": operand from a different graph");
    n.parents.push_back(p.id_);
    n.requires_grad = n.requires_grad || nodes_[p.id_].requires_grad;
  }
  return Var(this, push(std::move(n)));
}

GradientMap Graph::backward(Var loss) {
  if (loss.graph_ != this) throw ContractError("backward: loss from a different graph");
  if (backward_done_) throw ContractError("backward: graph already consumed by a previous backward");
  const auto& loss_node = nodes_[loss.id_];
  if (loss_node.value.numel() != 1) {
    throw ContractError("backward: loss must have a single element, got shape " +
                        shape_str(loss_node.value.shape()));
  }
  backward_done_ = true;

  std::vector<Tensor> grads(nodes_.size());
  grads[loss.id_] = Tensor::ones(loss_node.value.shape());

  std::vector<Tensor> grad_in;
  std::vector<bool> needs;
  for (std::int64_t i = loss.id_; i >= 0; --i) {
    auto& node = nodes_[static_cast<std::size_t>(i)];
    if (node.is_leaf || grads[i].empty() || !node.requires_grad || !node.backward) continue;
    grad_in.assign(node.parents.size(), Tensor());
    needs.assign(node.parents.size(), false);
    for (std::size_t p = 0; p < node.parents.size(); ++p) {
      needs[p] = nodes_[node.parents[p]].requires_grad;
    }
    node.backward(grads[i], grad_in, needs);
    for (std::size_t p = 0; p < node.parents.size(); ++p) {
      if (!needs[p]) continue;
      auto& dst = grads[node.parents[p]];
      auto& src = grad_in[p];
      if (src.shape() != nodes_[node.parents[p]].value.shape()) {
        throw ShapeError(node.kind + ": backward produced gradient " + shape_str(src.shape()) +
                         " for operand " + shape_str(nodes_[node.parents[p]].value.shape()));
      }
      if (dst.empty()) {
        dst = std::move(src);
      } else {
        auto d = dst.data();
        auto s = src.data();
        for (std::size_t k = 0; k < d.size(); ++k) d[k] += s[k];
      }
    }
    grads[i] = Tensor();
  }

  GradientMap out;
  for (const auto& [name, id] : leaf_names_) {
    const auto& node = nodes_[id];
    if (!node.requires_grad) continue;
    out.emplace(name, grads[id].empty() ? Tensor::zeros_like(node.value) : std::move(grads[id]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// primitives

namespace ops {

namespace {

void same_graph(const char* kind, Var a, Var b) {
  if (a.graph() != b.graph()) throw ContractError(std::string(kind) + ": operands from different graphs");
}

void same_shape(const char* kind, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(kind) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

std::optional<double> scalar_pair(Var a, Var b, double sa, double sb) {
  if (a.value().numel() == 1 && b.value().numel() == 1) return sa + sb;
  return std::nullopt;
}

template <class F>
Tensor map_unary(const Tensor& x, F f) {
  Tensor out(x.shape());
  auto src = x.data();
  auto dst = out.data();
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = f(src[i]);
  return out;
}

float sigmoid(float x) { return 1.0f / (1.0f + std::exp(-x)); }

}  // namespace

Var add(Var a, Var b) {
  same_graph("add", a, b);
  same_shape("add", a, b);
  Tensor out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] + y[i];
  std::optional<double> exact;
  if (o.size() == 1) exact = scalar_pair(a, b, a.scalar(), b.scalar());
  return a.graph()->record(
      "add", std::move(out), {a, b},
      [](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        if (needs[0]) gin[0] = g;
        if (needs[1]) gin[1] = g;
      },
      exact);
}

Var sub(Var a, Var b) {
  same_graph("sub", a, b);
  same_shape("sub", a, b);
  Tensor out(a.shape());
  auto x = a.value().data(), y = b.value().data();
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = x[i] - y[i];
  std::optional<double> exact;
  if (o.size() == 1) exact = scalar_pair(a, b, a.scalar(), -b.scalar());
  return a.graph()->record(
      "sub", std::move(out), {a, b},
      [](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        if (needs[0]) gin[0] = g;
        if (needs[1]) gin[1] = map_unary(g, [](float v) { return -v; });
      },
      exact);
}

Var mul(Var a, Var b) {
  same_graph("hadamard", a, b);
  same_shape("hadamard", a, b);
  const Tensor* av = &a.value();
  const Tensor* bv = &b.value();
  Tensor out(a.shape());
  auto o = out.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = (*av)[i] * (*bv)[i];
  std::optional<double> exact;
  if (o.size() == 1) exact = a.scalar() * b.scalar();
  return a.graph()->record(
      "hadamard", std::move(out), {a, b},
      [av, bv](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        if (needs[0]) {
          gin[0] = Tensor(g.shape());
          for (std::size_t i = 0; i < g.numel(); ++i) gin[0][i] = g[i] * (*bv)[i];
        }
        if (needs[1]) {
          gin[1] = Tensor(g.shape());
          for (std::size_t i = 0; i < g.numel(); ++i) gin[1][i] = g[i] * (*av)[i];
        }
      },
      exact);
}

Var scale(Var a, float s) {
  Tensor out = map_unary(a.value(), [s](float v) { return v * s; });
  std::optional<double> exact;
  if (out.numel() == 1) exact = a.scalar() * static_cast<double>(s);
  return a.graph()->record(
      "scalar-mul", std::move(out), {a},
      [s](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        if (needs[0]) gin[0] = map_unary(g, [s](float v) { return v * s; });
      },
      exact);
}

Var linear(Var x, Var weight, Var bias) {
  same_graph("linear", x, weight);
  same_graph("linear", x, bias);
  const auto& xs = x.shape();
  const auto& ws = weight.shape();
  const auto& bs = bias.shape();
  if (xs.size() != 2 || ws.size() != 2 || bs.size() != 1 || xs[1] != ws[1] || bs[0] != ws[0]) {
    throw ShapeError("linear: incompatible x " + shape_str(xs) + ", weight " + shape_str(ws) +
                     ", bias " + shape_str(bs));
  }
  const std::size_t batch = xs[0], in = xs[1], outf = ws[0];
  const Tensor* xv = &x.value();
  const Tensor* wv = &weight.value();
  Tensor out(Shape{batch, outf});
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t o = 0; o < outf; ++o) {
      float acc = bias.value()[o];
      for (std::size_t i = 0; i < in; ++i) acc += (*xv)[b * in + i] * (*wv)[o * in + i];
      out[b * outf + o] = acc;
    }
  }
  return x.graph()->record(
      "linear", std::move(out), {x, weight, bias},
      [xv, wv, batch, in, outf](const Tensor& g, std::vector<Tensor>& gin,
                                const std::vector<bool>& needs) {
        if (needs[0]) {
          gin[0] = Tensor(xv->shape());
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t o = 0; o < outf; ++o) {
              const float go = g[b * outf + o];
              for (std::size_t i = 0; i < in; ++i) gin[0][b * in + i] += go * (*wv)[o * in + i];
            }
        }
        if (needs[1]) {
          gin[1] = Tensor(wv->shape());
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t o = 0; o < outf; ++o) {
              const float go = g[b * outf + o];
              for (std::size_t i = 0; i < in; ++i) gin[1][o * in + i] += go * (*xv)[b * in + i];
            }
        }
        if (needs[2]) {
          gin[2] = Tensor(Shape{outf});
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t o = 0; o < outf; ++o) gin[2][o] += g[b * outf + o];
        }
      });
}

namespace {

struct ConvGeom {
  std::size_t batch, cin, cout, t, h, w, kt, kh, kw;
  std::size_t spatial() const { return t * h * w; }
  std::size_t patch() const { return cin * kt * kh * kw; }
};

// Unfold output frames [t0, t1) of one batch element into a
// (Cin*kt*kh*kw, (t1-t0)*H*W) matrix.
void im2col(const ConvGeom& g, const float* x, float* col, std::size_t t0, std::size_t t1) {
  const std::ptrdiff_t pt = g.kt / 2, ph = g.kh / 2, pw = g.kw / 2;
  const std::ptrdiff_t T = g.t, H = g.h, W = g.w;
  const std::ptrdiff_t T0 = static_cast<std::ptrdiff_t>(t0), T1 = static_cast<std::ptrdiff_t>(t1);
  const std::size_t cols = (t1 - t0) * g.h * g.w;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    const float* xc = x + ci * g.spatial();
    for (std::ptrdiff_t dt = 0; dt < static_cast<std::ptrdiff_t>(g.kt); ++dt)
      for (std::ptrdiff_t dh = 0; dh < static_cast<std::ptrdiff_t>(g.kh); ++dh)
        for (std::ptrdiff_t dw = 0; dw < static_cast<std::ptrdiff_t>(g.kw); ++dw, ++row) {
          float* dst = col + row * cols;
          const std::ptrdiff_t w_lo = std::max<std::ptrdiff_t>(0, pw - dw);
          const std::ptrdiff_t w_hi = std::min<std::ptrdiff_t>(W, W + pw - dw);
          for (std::ptrdiff_t t = T0; t < T1; ++t) {
            const std::ptrdiff_t st = t + dt - pt;
            for (std::ptrdiff_t h = 0; h < H; ++h) {
              float* d = dst + ((t - T0) * H + h) * W;
              const std::ptrdiff_t sh = h + dh - ph;
              if (st < 0 || st >= T || sh < 0 || sh >= H || w_lo >= w_hi) {
                std::fill(d, d + W, 0.0f);
                continue;
              }
              const float* s = xc + (st * H + sh) * W + (dw - pw);
              std::fill(d, d + w_lo, 0.0f);
              std::memcpy(d + w_lo, s + w_lo, static_cast<std::size_t>(w_hi - w_lo) * sizeof(float));
              std::fill(d + w_hi, d + W, 0.0f);
            }
          }
        }
  }
}

// Adjoint of im2col: scatter-add the columns of frames [t0, t1) back into
// one batch element.
void col2im(const ConvGeom& g, const float* col, float* x, std::size_t t0, std::size_t t1) {
  const std::ptrdiff_t pt = g.kt / 2, ph = g.kh / 2, pw = g.kw / 2;
  const std::ptrdiff_t T = g.t, H = g.h, W = g.w;
  const std::ptrdiff_t T0 = static_cast<std::ptrdiff_t>(t0), T1 = static_cast<std::ptrdiff_t>(t1);
  const std::size_t cols = (t1 - t0) * g.h * g.w;
  std::size_t row = 0;
  for (std::size_t ci = 0; ci < g.cin; ++ci) {
    float* xc = x + ci * g.spatial();
    for (std::ptrdiff_t dt = 0; dt < static_cast<std::ptrdiff_t>(g.kt); ++dt)
      for (std::ptrdiff_t dh = 0; dh < static_cast<std::ptrdiff_t>(g.kh); ++dh)
        for (std::ptrdiff_t dw = 0; dw < static_cast<std::ptrdiff_t>(g.kw); ++dw, ++row) {
          const float* src = col + row * cols;
          const std::ptrdiff_t w_lo = std::max<std::ptrdiff_t>(0, pw - dw);
          const std::ptrdiff_t w_hi = std::min<std::ptrdiff_t>(W, W + pw - dw);
          if (w_lo >= w_hi) continue;
          for (std::ptrdiff_t t = T0; t < T1; ++t) {
            const std::ptrdiff_t st = t + dt - pt;
            if (st < 0 || st >= T) continue;
            for (std::ptrdiff_t h = 0; h < H; ++h) {
              const std::ptrdiff_t sh = h + dh - ph;
              if (sh < 0 || sh >= H) continue;
              const float* s = src + ((t - T0) * H + h) * W;
              float* d = xc + (st * H + sh) * W + (dw - pw);
              for (std::ptrdiff_t w = w_lo; w < w_hi; ++w) d[w] += s[w];
            }
          }
        }
  }
}

// Output frames per GEMM tile, sized so the unfolded tile stays near L2.
std::size_t frames_per_tile(const ConvGeom& g) {
  constexpr std::size_t kTileFloats = 1u << 20;
  const std::size_t per_frame = g.patch() * g.h * g.w;
  return std::clamp<std::size_t>(kTileFloats / std::max<std::size_t>(per_frame, 1), 1, g.t);
}

}  // namespace

Var conv3d(Var x, Var kernel, std::optional<Var> bias) {
  same_graph("conv3d", x, kernel);
  const auto& xs = x.shape();
  const auto& ks = kernel.shape();
  if (xs.size() != 5 || ks.size() != 5 || ks[1] != xs[1]) {
    throw ShapeError("conv3d: input " + shape_str(xs) + " incompatible with kernel " + shape_str(ks));
  }
  if (ks[2] % 2 == 0 || ks[3] % 2 == 0 || ks[4] % 2 == 0) {
    throw ShapeError("conv3d: kernel extents must be odd, got " + shape_str(ks));
  }
  if (bias) {
    same_graph("conv3d", x, *bias);
    if (bias->shape() != Shape{ks[0]}) {
      throw ShapeError("conv3d: bias " + shape_str(bias->shape()) + " for kernel " + shape_str(ks));
    }
  }
  ConvGeom geo{xs[0], xs[1], ks[0], xs[2], xs[3], xs[4], ks[2], ks[3], ks[4]};
  const Tensor* xv = &x.value();
  const Tensor* kv = &kernel.value();
  const std::size_t S = geo.spatial(), CK = geo.patch();

  Tensor out(Shape{geo.batch, geo.cout, geo.t, geo.h, geo.w});
  const std::size_t ft = frames_per_tile(geo), plane = geo.h * geo.w;
  std::vector<float> col(CK * ft * plane);
  Eigen::Map<const RowMat> K(kv->ptr(), static_cast<Eigen::Index>(geo.cout), static_cast<Eigen::Index>(CK));
  for (std::size_t b = 0; b < geo.batch; ++b) {
    for (std::size_t t0 = 0; t0 < geo.t; t0 += ft) {
      const std::size_t t1 = std::min(geo.t, t0 + ft);
      const auto n = static_cast<Eigen::Index>((t1 - t0) * plane);
      im2col(geo, xv->ptr() + b * geo.cin * S, col.data(), t0, t1);
      Eigen::Map<const RowMat> C(col.data(), static_cast<Eigen::Index>(CK), n);
      Eigen::Map<RowMat, 0, Eigen::OuterStride<>> O(out.ptr() + b * geo.cout * S + t0 * plane,
                                                     static_cast<Eigen::Index>(geo.cout), n,
                                                     Eigen::OuterStride<>(static_cast<Eigen::Index>(S)));
      O.noalias() = K * C;
    }
    if (bias) {
      for (std::size_t co = 0; co < geo.cout; ++co) {
        float* o = out.ptr() + (b * geo.cout + co) * S;
        const float bv = bias->value()[co];
        for (std::size_t i = 0; i < S; ++i) o[i] += bv;
      }
    }
  }

  std::vector<Var> parents{x, kernel};
  if (bias) parents.push_back(*bias);
  const bool has_bias = bias.has_value();
  return x.graph()->record(
      "conv3d", std::move(out), std::move(parents),
      [geo, xv, kv, has_bias](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        const std::size_t S = geo.spatial(), CK = geo.patch();
        const std::size_t ft = frames_per_tile(geo), plane = geo.h * geo.w;
        const auto cout = static_cast<Eigen::Index>(geo.cout);
        const auto ck = static_cast<Eigen::Index>(CK);
        Eigen::Map<const RowMat> K(kv->ptr(), cout, ck);
        std::vector<float> col(CK * ft * plane);
        if (needs[0]) gin[0] = Tensor(xv->shape());
        if (needs[1]) gin[1] = Tensor(kv->shape());
        if (has_bias && needs[2]) gin[2] = Tensor(Shape{geo.cout});
        for (std::size_t b = 0; b < geo.batch; ++b) {
          for (std::size_t t0 = 0; t0 < geo.t; t0 += ft) {
            const std::size_t t1 = std::min(geo.t, t0 + ft);
            const auto n = static_cast<Eigen::Index>((t1 - t0) * plane);
            Eigen::Map<const RowMat, 0, Eigen::OuterStride<>> G(g.ptr() + b * geo.cout * S + t0 * plane, cout, n,
                                                                Eigen::OuterStride<>(static_cast<Eigen::Index>(S)));
            if (needs[1]) {
              im2col(geo, xv->ptr() + b * geo.cin * S, col.data(), t0, t1);
              Eigen::Map<const RowMat> C(col.data(), ck, n);
              Eigen::Map<RowMat> dK(gin[1].ptr(), cout, ck);
              dK.noalias() += G * C.transpose();
            }
            if (needs[0]) {
              Eigen::Map<RowMat> dC(col.data(), ck, n);
              dC.noalias() = K.transpose() * G;
              col2im(geo, col.data(), gin[0].ptr() + b * geo.cin * S, t0, t1);
            }
          }
          if (has_bias && needs[2]) {
            for (std::size_t co = 0; co < geo.cout; ++co) {
              const float* gp = g.ptr() + (b * geo.cout + co) * S;
              double acc = 0.0;
              for (std::size_t i = 0; i < S; ++i) acc += gp[i];
              gin[2][co] += static_cast<float>(acc);
            }
          }
        }
      });
}

Var silu(Var x) {
  const Tensor* xv = &x.value();
  Tensor out = map_unary(*xv, [](float v) { return v * sigmoid(v); });
  return x.graph()->record(
      "silu", std::move(out), {x},
      [xv](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        if (!needs[0]) return;
        gin[0] = Tensor(g.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const float v = (*xv)[i];
          const float s = sigmoid(v);
          gin[0][i] = g[i] * s * (1.0f + v * (1.0f - s));
        }
      });
}

Var relu(Var x) {
  const Tensor* xv = &x.value();
  Tensor out = map_unary(*xv, [](float v) { return v > 0.0f ? v : 0.0f; });
  return x.graph()->record(
      "relu", std::move(out), {x},
      [xv](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        if (!needs[0]) return;
        gin[0] = Tensor(g.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) gin[0][i] = (*xv)[i] > 0.0f ? g[i] : 0.0f;
      });
}

Var clamp01(Var x) {
  const Tensor* xv = &x.value();
  Tensor out = map_unary(*xv, [](float v) { return std::clamp(v, 0.0f, 1.0f); });
  return x.graph()->record(
      "clamp01", std::move(out), {x},
      [xv](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        if (!needs[0]) return;
        gin[0] = Tensor(g.shape());
        for (std::size_t i = 0; i < g.numel(); ++i) {
          const float v = (*xv)[i];
          gin[0][i] = (v >= 0.0f && v <= 1.0f) ? g[i] : 0.0f;
        }
      });
}

Var sum(Var x) {
  double acc = 0.0;
  for (float v : x.value().data()) acc += v;
  Shape in_shape = x.shape();
  return x.graph()->record(
      "sum", Tensor::scalar(static_cast<float>(acc)), {x},
      [in_shape](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        if (needs[0]) gin[0] = Tensor(in_shape, g[0]);
      },
      acc);
}

Var mean(Var x) {
  double acc = 0.0;
  for (float v : x.value().data()) acc += v;
  const auto n = static_cast<double>(x.value().numel());
  acc /= n;
  Shape in_shape = x.shape();
  return x.graph()->record(
      "mean", Tensor::scalar(static_cast<float>(acc)), {x},
      [in_shape, n](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        if (needs[0]) gin[0] = Tensor(in_shape, static_cast<float>(g[0] / n));
      },
      acc);
}

Var l2norm(Var x) {
  const Tensor* xv = &x.value();
  double acc = 0.0;
  for (float v : xv->data()) acc += static_cast<double>(v) * v;
  const double norm = std::sqrt(acc);
  return x.graph()->record(
      "l2norm", Tensor::scalar(static_cast<float>(norm)), {x},
      [xv, norm](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        if (!needs[0]) return;
        gin[0] = Tensor(xv->shape());
        if (norm == 0.0) return;
        const double f = g[0] / norm;
        for (std::size_t i = 0; i < xv->numel(); ++i) gin[0][i] = static_cast<float>((*xv)[i] * f);
      },
      norm);
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value().reshaped(shape);
  Shape in_shape = x.shape();
  const auto n = out.numel();
  std::optional<double> exact;
  if (n == 1) exact = x.scalar();
  return x.graph()->record(
      "reshape", std::move(out), {x},
      [in_shape](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        if (needs[0]) gin[0] = g.reshaped(in_shape);
      },
      exact);
}

Var concat_channel(std::span<const Var> xs) {
  if (xs.empty()) throw ShapeError("concat-channel: no inputs");
  const Shape& s0 = xs[0].shape();
  if (s0.size() != 5) throw ShapeError("concat-channel: rank-5 inputs required, got " + shape_str(s0));
  std::vector<std::size_t> chans;
  std::size_t total = 0;
  for (const auto& x : xs) {
    same_graph("concat-channel", xs[0], x);
    const auto& s = x.shape();
    if (s.size() != 5 || s[0] != s0[0] || s[2] != s0[2] || s[3] != s0[3] || s[4] != s0[4]) {
      throw ShapeError("concat-channel: " + shape_str(s0) + " vs " + shape_str(s));
    }
    chans.push_back(s[1]);
    total += s[1];
  }
  const std::size_t B = s0[0], S = s0[2] * s0[3] * s0[4];
  Tensor out(Shape{B, total, s0[2], s0[3], s0[4]});
  for (std::size_t b = 0; b < B; ++b) {
    std::size_t c0 = 0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const float* src = xs[k].value().ptr() + b * chans[k] * S;
      std::copy(src, src + chans[k] * S, out.ptr() + (b * total + c0) * S);
      c0 += chans[k];
    }
  }
  std::vector<Shape> shapes;
  for (const auto& x : xs) shapes.push_back(x.shape());
  return xs[0].graph()->record(
      "concat-channel", std::move(out), std::vector<Var>(xs.begin(), xs.end()),
      [chans, shapes, B, S, total](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        std::size_t c0 = 0;
        for (std::size_t k = 0; k < chans.size(); ++k) {
          if (needs[k]) {
            gin[k] = Tensor(shapes[k]);
            for (std::size_t b = 0; b < B; ++b) {
              const float* src = g.ptr() + (b * total + c0) * S;
              std::copy(src, src + chans[k] * S, gin[k].ptr() + b * chans[k] * S);
            }
          }
          c0 += chans[k];
        }
      });
}

Var broadcast(Var x, Shape shape) {
  const auto& xs = x.shape();
  if (xs.size() > shape.size() || !std::equal(xs.begin(), xs.end(), shape.begin())) {
    throw ShapeError("broadcast: " + shape_str(xs) + " is not a leading prefix of " + shape_str(shape));
  }
  const std::size_t outer = x.value().numel();
  const std::size_t inner = shape_numel(shape) / outer;
  Tensor out(shape);
  for (std::size_t i = 0; i < outer; ++i) {
    std::fill(out.ptr() + i * inner, out.ptr() + (i + 1) * inner, x.value()[i]);
  }
  Shape in_shape = xs;
  return x.graph()->record(
      "broadcast", std::move(out), {x},
      [in_shape, outer, inner](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        if (!needs[0]) return;
        gin[0] = Tensor(in_shape);
        for (std::size_t i = 0; i < outer; ++i) {
          double acc = 0.0;
          for (std::size_t j = 0; j < inner; ++j) acc += g[i * inner + j];
          gin[0][i] = static_cast<float>(acc);
        }
      });
}

Var avg_pool3d(Var x) {
  const auto& s = x.shape();
  if (s.size() != 5 || s[2] % 2 || s[3] % 2 || s[4] % 2) {
    throw ShapeError("avg_pool3d: need rank 5 with even T,H,W, got " + shape_str(s));
  }
  const std::size_t BC = s[0] * s[1], T = s[2], H = s[3], W = s[4];
  const std::size_t To = T / 2, Ho = H / 2, Wo = W / 2;
  Tensor out(Shape{s[0], s[1], To, Ho, Wo});
  const float* in = x.value().ptr();
  for (std::size_t bc = 0; bc < BC; ++bc)
    for (std::size_t t = 0; t < To; ++t)
      for (std::size_t h = 0; h < Ho; ++h)
        for (std::size_t w = 0; w < Wo; ++w) {
          float acc = 0.0f;
          for (std::size_t a = 0; a < 2; ++a)
            for (std::size_t b = 0; b < 2; ++b)
              for (std::size_t c = 0; c < 2; ++c)
                acc += in[((bc * T + 2 * t + a) * H + 2 * h + b) * W + 2 * w + c];
          out[((bc * To + t) * Ho + h) * Wo + w] = acc * 0.125f;
        }
  Shape in_shape = s;
  return x.graph()->record(
      "avg_pool3d", std::move(out), {x},
      [in_shape, BC, T, H, W, To, Ho, Wo](const Tensor& g, std::vector<Tensor>& gin,
                                           const std::vector<bool>& needs) {
        if (!needs[0]) return;
        gin[0] = Tensor(in_shape);
        for (std::size_t bc = 0; bc < BC; ++bc)
          for (std::size_t t = 0; t < To; ++t)
            for (std::size_t h = 0; h < Ho; ++h)
              for (std::size_t w = 0; w < Wo; ++w) {
                const float v = g[((bc * To + t) * Ho + h) * Wo + w] * 0.125f;
                for (std::size_t a = 0; a < 2; ++a)
                  for (std::size_t b = 0; b < 2; ++b)
                    for (std::size_t c = 0; c < 2; ++c)
                      gin[0][((bc * T + 2 * t + a) * H + 2 * h + b) * W + 2 * w + c] = v;
              }
      });
}

Var global_avg_pool(Var x) {
  const auto& s = x.shape();
  if (s.size() < 3) throw ShapeError("global_avg_pool: need rank >= 3, got " + shape_str(s));
  const std::size_t BC = s[0] * s[1];
  const std::size_t inner = x.value().numel() / BC;
  Tensor out(Shape{s[0], s[1]});
  for (std::size_t i = 0; i < BC; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < inner; ++j) acc += x.value()[i * inner + j];
    out[i] = static_cast<float>(acc / static_cast<double>(inner));
  }
  Shape in_shape = s;
  return x.graph()->record(
      "global_avg_pool", std::move(out), {x},
      [in_shape, BC, inner](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        if (!needs[0]) return;
        gin[0] = Tensor(in_shape);
        for (std::size_t i = 0; i < BC; ++i) {
          const float v = g[i] / static_cast<float>(inner);
          std::fill(gin[0].ptr() + i * inner, gin[0].ptr() + (i + 1) * inner, v);
        }
      });
}

Var softmax_cross_entropy(Var logits, std::span<const int> labels) {
  const auto& s = logits.shape();
  if (s.size() != 2 || labels.size() != s[0]) {
    throw ShapeError("softmax_cross_entropy: logits " + shape_str(s) + " with " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t B = s[0], K = s[1];
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= K) {
      throw ContractError("softmax_cross_entropy: label " + std::to_string(y) + " out of range");
    }
  }
  Tensor probs(s);
  double loss = 0.0;
  const Tensor& z = logits.value();
  for (std::size_t b = 0; b < B; ++b) {
    double mx = z[b * K];
    for (std::size_t k = 1; k < K; ++k) mx = std::max<double>(mx, z[b * K + k]);
    double se = 0.0;
    for (std::size_t k = 0; k < K; ++k) se += std::exp(static_cast<double>(z[b * K + k]) - mx);
    const double lse = mx + std::log(se);
    loss += lse - z[b * K + static_cast<std::size_t>(labels[b])];
    for (std::size_t k = 0; k < K; ++k) {
      probs[b * K + k] = static_cast<float>(std::exp(static_cast<double>(z[b * K + k]) - lse));
    }
  }
  loss /= static_cast<double>(B);
  std::vector<int> ys(labels.begin(), labels.end());
  return logits.graph()->record(
      "softmax_cross_entropy", Tensor::scalar(static_cast<float>(loss)), {logits},
      [probs = std::move(probs), ys, B, K](const Tensor& g, std::vector<Tensor>& gin,
                                           const std::vector<bool>& needs) {
        if (!needs[0]) return;
        gin[0] = probs;
        for (std::size_t b = 0; b < B; ++b) gin[0][b * K + static_cast<std::size_t>(ys[b])] -= 1.0f;
        const float f = g[0] / static_cast<float>(B);
        for (auto& v : gin[0].data()) v *= f;
      },
      loss);
}

}  // namespace ops

// ---------------------------------------------------------------------------
// dispatcher

namespace {

constexpr std::array kAllPrimitives{
    Primitive::add,     Primitive::sub,    Primitive::hadamard, Primitive::scalar_mul,
    Primitive::linear,  Primitive::conv3d, Primitive::silu,     Primitive::relu,
    Primitive::clamp01, Primitive::sum,    Primitive::mean,     Primitive::l2norm,
    Primitive::reshape, Primitive::concat_channel, Primitive::broadcast,
};

void arity(Primitive kind, std::span<const Var> in, std::size_t lo, std::size_t hi) {
  if (in.size() < lo || in.size() > hi) {
    throw ContractError(std::string(primitive_name(kind)) + ": expected " + std::to_string(lo) +
                        (lo == hi ? "" : ".." + std::to_string(hi)) + " inputs, got " +
                        std::to_string(in.size()));
  }
}

}  // namespace

std::string_view primitive_name(Primitive kind) {
  switch (kind) {
    case Primitive::add: return "add";
    case Primitive::sub: return "sub";
    case Primitive::hadamard: return "hadamard";
    case Primitive::scalar_mul: return "scalar-mul";
    case Primitive::linear: return "linear";
    case Primitive::conv3d: return "conv3d";
    case Primitive::silu: return "silu";
    case Primitive::relu: return "relu";
    case Primitive::clamp01: return "clamp01";
    case Primitive::sum: return "sum";
    case Primitive::mean: return "mean";
    case Primitive::l2norm: return "l2norm";
    case Primitive::reshape: return "reshape";
    case Primitive::concat_channel: return "concat-channel";
    case Primitive::broadcast: return "broadcast";
  }
  return "unknown";
}

std::span<const Primitive> all_primitives() { return kAllPrimitives; }

Var apply_primitive(Primitive kind, std::span<const Var> in, const PrimitiveArgs& args) {
  switch (kind) {
    case Primitive::add: arity(kind, in, 2, 2); return ops::add(in[0], in[1]);
    case Primitive::sub: arity(kind, in, 2, 2); return ops::sub(in[0], in[1]);
    case Primitive::hadamard: arity(kind, in, 2, 2); return ops::mul(in[0], in[1]);
    case Primitive::scalar_mul: arity(kind, in, 1, 1); return ops::scale(in[0], args.scalar);
    case Primitive::linear: arity(kind, in, 3, 3); return ops::linear(in[0], in[1], in[2]);
    case Primitive::conv3d:
      arity(kind, in, 2, 3);
      return in.size() == 3 ? ops::conv3d(in[0], in[1], in[2]) : ops::conv3d(in[0], in[1]);
    case Primitive::silu: arity(kind, in, 1, 1); return ops::silu(in[0]);
    case Primitive::relu: arity(kind, in, 1, 1); return ops::relu(in[0]);
    case Primitive::clamp01: arity(kind, in, 1, 1); return ops::clamp01(in[0]);
    case Primitive::sum: arity(kind, in, 1, 1); return ops::sum(in[0]);
    case Primitive::mean: arity(kind, in, 1, 1); return ops::mean(in[0]);
    case Primitive::l2norm: arity(kind, in, 1, 1); return ops::l2norm(in[0]);
    case Primitive::reshape: arity(kind, in, 1, 1); return ops::reshape(in[0], args.shape);
    case Primitive::concat_channel: arity(kind, in, 1, 64); return ops::concat_channel(in);
    case Primitive::broadcast: arity(kind, in, 1, 1); return ops::broadcast(in[0], args.shape);
  }
  throw ContractError("apply_primitive: unknown kind");
}

}  // namespace fmvp
