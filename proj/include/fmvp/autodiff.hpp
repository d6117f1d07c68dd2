#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fmvp/tensor.hpp"

namespace fmvp {

class Graph;

/// Handle to a node (a DiffNode) inside a Graph. Cheap to copy; valid for the
/// lifetime of the owning graph.
class Var {
 public:
  Var() = default;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  /// Scalar value. Reductions keep a double-precision copy of their result,
  /// which this returns when present.
  double scalar() const;
  bool requires_grad() const;

  Graph* graph() const { return graph_; }
  std::uint32_t id() const { return id_; }
  bool valid() const { return graph_ != nullptr; }

 private:
  friend class Graph;
  Var(Graph* g, std::uint32_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::uint32_t id_ = 0;
};

/// Vector-Jacobian product of one recorded operation. `grad_in[i]` must be
/// assigned (with the shape of parent i) whenever `needs[i]` is true.
using BackwardFn = std::function<void(const Tensor& grad_out, std::vector<Tensor>& grad_in,
                                      const std::vector<bool>& needs)>;

using GradientMap = std::map<std::string, Tensor>;

/// Reverse-mode tape. Nodes are appended in evaluation order, so the tape is
/// always a topological order and the graph is acyclic by construction.
///
/// A graph is single-owner: build it, call backward() once, discard it.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  /// Named input. Leaves that require grad appear in backward()'s result.
  Var leaf(std::string name, Tensor value, bool requires_grad = true);
  Var constant(Tensor value);

  /// Append an operation node. Used by the primitives in `ops` and by fused
  /// operations defined in other modules (spectral loss, cross-entropy).
  Var record(std::string_view kind, Tensor value, std::vector<Var> parents, BackwardFn backward,
             std::optional<double> exact_scalar = std::nullopt);

  /// Gradients of a single-element loss with respect to every leaf that
  /// requires grad. A graph supports exactly one backward pass; a second call
  /// throws ContractError.
  GradientMap backward(Var loss);

  std::size_t size() const { return nodes_.size(); }
  bool backward_done() const { return backward_done_; }

 private:
  friend class Var;

  struct Node {
    std::string kind;
    std::string name;
    Tensor value;
    std::vector<std::uint32_t> parents;
    BackwardFn backward;
    std::optional<double> exact;
    bool requires_grad = false;
    bool is_leaf = false;
  };

  std::uint32_t push(Node node);

  std::deque<Node> nodes_;
  std::map<std::string, std::uint32_t, std::less<>> leaf_names_;
  bool backward_done_ = false;
};

namespace ops {

Var add(Var a, Var b);
Var sub(Var a, Var b);
/// Elementwise (Hadamard) product.
Var mul(Var a, Var b);
Var scale(Var a, float s);
/// y = x W^T + b with x (B, in), W (out, in), b (out).
Var linear(Var x, Var weight, Var bias);
/// 3D convolution, stride 1, zero padding k/2 on each side (odd kernels only).
/// x (B, Cin, T, H, W), kernel (Cout, Cin, kt, kh, kw), optional bias (Cout).
Var conv3d(Var x, Var kernel, std::optional<Var> bias = std::nullopt);
Var silu(Var x);
Var relu(Var x);
/// Clamp to [0, 1] with a straight-through gradient: 1 inside [0, 1], 0 outside.
Var clamp01(Var x);
Var sum(Var x);
Var mean(Var x);
/// Euclidean norm over all elements; the gradient at the zero vector is zero.
Var l2norm(Var x);
Var reshape(Var x, Shape shape);
/// Concatenate rank-5 tensors along the channel axis.
Var concat_channel(std::span<const Var> xs);
/// Expand trailing axes: x's shape must be a prefix of `shape`.
Var broadcast(Var x, Shape shape);
/// Non-overlapping 2x2x2 average pooling on (B, C, T, H, W); even extents.
Var avg_pool3d(Var x);
/// (B, C, ...) -> (B, C), mean over all trailing axes.
Var global_avg_pool(Var x);
/// Mean softmax cross-entropy of logits (B, K) against integer labels.
Var softmax_cross_entropy(Var logits, std::span<const int> labels);

}  // namespace ops

enum class Primitive {
  add,
  sub,
  hadamard,
  scalar_mul,
  linear,
  conv3d,
  silu,
  relu,
  clamp01,
  sum,
  mean,
  l2norm,
  reshape,
  concat_channel,
  broadcast,
};

std::string_view primitive_name(Primitive kind);
std::span<const Primitive> all_primitives();

struct PrimitiveArgs {
  float scalar = 1.0f;
  Shape shape;
};

/// Uniform entry point over the primitive set. Arity is checked per kind.
Var apply_primitive(Primitive kind, std::span<const Var> inputs, const PrimitiveArgs& args = {});

}  // namespace fmvp
