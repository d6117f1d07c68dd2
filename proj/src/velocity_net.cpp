#include "fmvp/velocity_net.hpp"

#include <cmath>
#include <string>

#include "fmvp/errors.hpp"
#include "fmvp/rng.hpp"

namespace fmvp {

namespace vnet {

std::size_t parameter_count(std::size_t channels) {
  const std::size_t k3 = kKernel * kKernel * kKernel;
  const std::size_t stem = kHidden * channels * k3 + kHidden;
  const std::size_t conv = kHidden * kHidden * k3 + kHidden;
  const std::size_t mlp = (kEmbedDim * kEmbedDim + kEmbedDim) + 2 * (kEmbedDim * kHidden + kHidden);
  const std::size_t head = channels * kHidden * k3 + channels;
  return stem + 2 * (conv + mlp) + head;
}

}  // namespace vnet

std::array<float, vnet::kEmbedDim> time_embedding(float t) {
  constexpr std::size_t half = vnet::kEmbedDim / 2;
  std::array<float, vnet::kEmbedDim> e{};
  for (std::size_t k = 0; k < half; ++k) {
    const double f = std::pow(10.0, 4.0 * static_cast<double>(k) / static_cast<double>(half - 1));
    e[k] = static_cast<float>(std::sin(f * t));
    e[half + k] = static_cast<float>(std::cos(f * t));
  }
  return e;
}

namespace {

Tensor uniform_tensor(Shape shape, float bound, SeededRng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = (2.0f * rng.uniform() - 1.0f) * bound;
  return t;
}

Tensor kaiming_conv(std::size_t cout, std::size_t cin, SeededRng& rng) {
  const std::size_t k = vnet::kKernel;
  const float bound = std::sqrt(6.0f / static_cast<float>(cin * k * k * k));
  return uniform_tensor({cout, cin, k, k, k}, bound, rng);
}

const std::string& pfx() {
  static const std::string p = vnet::kPrefix;
  return p;
}

std::string block_name(int b, const char* leaf) {
  return pfx() + "block" + std::to_string(b + 1) + "." + leaf;
}

}  // namespace

ParamStore init_velocity_params(std::size_t channels, std::uint64_t seed) {
  if (channels < 1) throw ContractError("velocity net: channels must be >= 1");
  using namespace vnet;
  SeededRng root(seed);
  SeededRng rng = root.split(0x766e6574);
  ParamStore p;
  p.add(pfx() + "stem.w", kaiming_conv(kHidden, channels, rng));
  p.add(pfx() + "stem.b", Tensor::zeros({kHidden}));
  for (int b = 0; b < 2; ++b) {
    p.add(block_name(b, "conv.w"), kaiming_conv(kHidden, kHidden, rng));
    p.add(block_name(b, "conv.b"), Tensor::zeros({kHidden}));
    p.add(block_name(b, "fc1.w"), uniform_tensor({kEmbedDim, kEmbedDim}, std::sqrt(6.0f / kEmbedDim), rng));
    p.add(block_name(b, "fc1.b"), Tensor::zeros({kEmbedDim}));
    const float out_bound = 1.0f / std::sqrt(static_cast<float>(kEmbedDim));
    p.add(block_name(b, "scale.w"), uniform_tensor({kHidden, kEmbedDim}, out_bound, rng));
    p.add(block_name(b, "scale.b"), Tensor::zeros({kHidden}));
    p.add(block_name(b, "shift.w"), uniform_tensor({kHidden, kEmbedDim}, out_bound, rng));
    p.add(block_name(b, "shift.b"), Tensor::zeros({kHidden}));
  }
  p.add(pfx() + "head.w", Tensor::zeros({channels, kHidden, kKernel, kKernel, kKernel}));
  p.add(pfx() + "head.b", Tensor::zeros({channels}));
  return p;
}

std::size_t velocity_channels(const ParamStore& params) {
  return params.at(pfx() + "stem.w").dim(1);
}

VelocityNetVars bind_velocity_params(Graph& g, const ParamStore& params, bool trainable) {
  auto bind = [&](const std::string& name) {
    return trainable ? g.leaf(name, params.at(name), true) : g.constant(params.at(name));
  };
  VelocityNetVars v;
  v.stem_w = bind(pfx() + "stem.w");
  v.stem_b = bind(pfx() + "stem.b");
  for (int b = 0; b < 2; ++b) {
    auto& blk = v.blocks[static_cast<std::size_t>(b)];
    blk.conv_w = bind(block_name(b, "conv.w"));
    blk.conv_b = bind(block_name(b, "conv.b"));
    blk.fc1_w = bind(block_name(b, "fc1.w"));
    blk.fc1_b = bind(block_name(b, "fc1.b"));
    blk.scale_w = bind(block_name(b, "scale.w"));
    blk.scale_b = bind(block_name(b, "scale.b"));
    blk.shift_w = bind(block_name(b, "shift.w"));
    blk.shift_b = bind(block_name(b, "shift.b"));
  }
  v.head_w = bind(pfx() + "head.w");
  v.head_b = bind(pfx() + "head.b");
  return v;
}

Var predict_velocity(Graph& g, const VelocityNetVars& net, Var x_t, std::span<const float> t) {
  const auto& s = x_t.shape();
  if (s.size() != 5) throw ShapeError("predict_velocity: expected (B,C,T,H,W), got " + shape_str(s));
  if (!x_t.value().all_finite()) throw NumericError("predict_velocity: non-finite input");
  const std::size_t B = s[0];
  if (t.size() != B && t.size() != 1) {
    throw ShapeError("predict_velocity: " + std::to_string(t.size()) + " times for batch " + std::to_string(B));
  }

  Tensor emb(Shape{B, vnet::kEmbedDim});
  for (std::size_t b = 0; b < B; ++b) {
    const float tb = t.size() == 1 ? t[0] : t[b];
    if (!(tb >= 0.0f && tb <= 1.0f)) throw ContractError("predict_velocity: t outside [0,1]");
    const auto e = time_embedding(tb);
    std::copy(e.begin(), e.end(), emb.ptr() + b * vnet::kEmbedDim);
  }
  Var e = g.constant(std::move(emb));

  Shape hidden_shape{B, vnet::kHidden, s[2], s[3], s[4]};
  Var h = ops::silu(ops::conv3d(x_t, net.stem_w, net.stem_b));
  for (const auto& blk : net.blocks) {
    Var z = ops::silu(ops::linear(e, blk.fc1_w, blk.fc1_b));
    Var scale = ops::broadcast(ops::linear(z, blk.scale_w, blk.scale_b), hidden_shape);
    Var shift = ops::broadcast(ops::linear(z, blk.shift_w, blk.shift_b), hidden_shape);
    Var c = ops::conv3d(h, blk.conv_w, blk.conv_b);
    h = ops::silu(ops::add(ops::add(c, ops::mul(c, scale)), shift));
  }
  return ops::conv3d(h, net.head_w, net.head_b);
}

Tensor predict_velocity(const ParamStore& params, const Tensor& x_t, float t) {
  Graph g;
  auto net = bind_velocity_params(g, params, false);
  Var x = g.constant(x_t);
  const float ts[1] = {t};
  return predict_velocity(g, net, x, ts).value();
}

}  // namespace fmvp
