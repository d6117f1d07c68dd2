#pragma once

#include <array>
#include <cstdint>
#include <span>

#include "fmvp/autodiff.hpp"
#include "fmvp/params.hpp"

namespace fmvp {

/// Time-conditioned velocity predictor v(x_t, t):
///
///   stem   conv C->16 (3x3x3), SiLU
///   block  conv 16->16 (3x3x3), FiLM from an MLP over the time embedding, SiLU   (x2)
///   head   conv 16->C (3x3x3), zero-initialized
///
/// The FiLM MLP per block is fc(32->32), SiLU, then two fc(32->16) heads for
/// per-channel scale and shift; features become h * (1 + scale) + shift.
namespace vnet {

inline constexpr std::size_t kHidden = 16;
inline constexpr std::size_t kEmbedDim = 32;
inline constexpr std::size_t kKernel = 3;
inline constexpr const char* kPrefix = "vnet.";

/// Closed-form parameter count for `channels` input/output channels.
std::size_t parameter_count(std::size_t channels);

}  // namespace vnet

/// 16 sin/cos pairs at frequencies 10^(4k/15), k = 0..15 (spanning 1..1e4):
/// [sin(f_0 t) .. sin(f_15 t), cos(f_0 t) .. cos(f_15 t)].
std::array<float, vnet::kEmbedDim> time_embedding(float t);

/// Kaiming-uniform (fan-in) kernels, zero biases, zero head.
ParamStore init_velocity_params(std::size_t channels, std::uint64_t seed);

/// Number of video channels a parameter set was built for.
std::size_t velocity_channels(const ParamStore& params);

struct VelocityNetVars {
  struct Block {
    Var conv_w, conv_b, fc1_w, fc1_b, scale_w, scale_b, shift_w, shift_b;
  };
  Var stem_w, stem_b;
  std::array<Block, 2> blocks;
  Var head_w, head_b;
};

/// Register the parameters in `g` (as trainable leaves or constants).
VelocityNetVars bind_velocity_params(Graph& g, const ParamStore& params, bool trainable);

/// Differentiable forward pass. `t` holds one time per batch element (or a
/// single value broadcast to the batch), each in [0, 1]. Throws NumericError
/// on non-finite input.
Var predict_velocity(Graph& g, const VelocityNetVars& net, Var x_t, std::span<const float> t);

/// Forward-only convenience.
Tensor predict_velocity(const ParamStore& params, const Tensor& x_t, float t);

}  // namespace fmvp
