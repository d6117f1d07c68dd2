#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fmvp/autodiff.hpp"
#include "fmvp/params.hpp"
#include "fmvp/rng.hpp"
#include "fmvp/velocity_net.hpp"

namespace fmvp {

struct PurifyConfig {
  float gamma = 0.5f;  // keep probability
  float xi = 1e-5f;
  std::size_t steps = 10;

  void validate() const;
};

/// x0 = m * (x_adv + xi * eps) + (1 - m) * eps.
/// Draw order: one uniform per element for the mask, then one normal per
/// element for eps (the same eps feeds both terms).
Tensor init_inference_state(const Tensor& x_adv, const PurifyConfig& cfg, SeededRng& rng);

/// Same draws, recorded in `g` (the gradient w.r.t. x_adv is the mask).
Var init_inference_state(Graph& g, Var x_adv, const PurifyConfig& cfg, SeededRng& rng);

/// v(x, t) evaluated on whole tensors.
class VelocityField {
 public:
  virtual ~VelocityField() = default;
  virtual Tensor velocity(const Tensor& x, float t) const = 0;
};

class NetworkField final : public VelocityField {
 public:
  explicit NetworkField(ParamStore params) : params_(std::move(params)) {}
  Tensor velocity(const Tensor& x, float t) const override { return predict_velocity(params_, x, t); }
  const ParamStore& params() const { return params_; }

 private:
  ParamStore params_;
};

/// Analytic or stubbed fields for tests.
class FunctionField final : public VelocityField {
 public:
  using Fn = std::function<Tensor(const Tensor&, float)>;
  explicit FunctionField(Fn fn) : fn_(std::move(fn)) {}
  Tensor velocity(const Tensor& x, float t) const override { return fn_(x, t); }

 private:
  Fn fn_;
};

/// x_{k+1} = x_k + v(x_k, k/N) / N for k = 0..N-1, without the final clamp.
/// A non-finite state throws NumericError naming the step.
Tensor euler_integrate(const Tensor& x0, const VelocityField& field, std::size_t steps);
/// euler_integrate followed by a clamp to [0, 1].
Tensor euler_purify(const Tensor& x0, const VelocityField& field, std::size_t steps);

/// Differentiable unrolled Euler trajectory through the network, ending in
/// the straight-through clamp.
Var euler_purify(Graph& g, const VelocityNetVars& net, Var x0, std::size_t steps);

/// L2 norm over all elements of v(x, 0) on the unmasked input.
double detection_score(const Tensor& x, const VelocityField& field);

// ---------------------------------------------------------------------------
// Purifiers as seen by attacks and the evaluation harness

class Purifier {
 public:
  virtual ~Purifier() = default;
  virtual std::string name() const = 0;
  virtual std::size_t default_steps() const = 0;
  /// Purify a batch. Stochastic purifiers consume `rng`.
  virtual Tensor purify(const Tensor& x, SeededRng& rng, std::size_t steps) const = 0;
  /// Same computation recorded in `g`, differentiable w.r.t. x. Given the
  /// same rng state it returns exactly what purify() returns.
  virtual Var purify_graph(Graph& g, Var x, SeededRng& rng, std::size_t steps) const = 0;

  Tensor purify(const Tensor& x, SeededRng& rng) const { return purify(x, rng, default_steps()); }
};

class IdentityPurifier final : public Purifier {
 public:
  using Purifier::purify;
  std::string name() const override { return "identity"; }
  std::size_t default_steps() const override { return 0; }
  Tensor purify(const Tensor& x, SeededRng&, std::size_t) const override { return x; }
  Var purify_graph(Graph&, Var x, SeededRng&, std::size_t) const override { return x; }
};

/// Masked Euler purification with a trained velocity network.
class FlowPurifier final : public Purifier {
 public:
  FlowPurifier(ParamStore params, PurifyConfig cfg);
  using Purifier::purify;
  std::string name() const override { return "fmvp"; }
  std::size_t default_steps() const override { return cfg_.steps; }
  Tensor purify(const Tensor& x, SeededRng& rng, std::size_t steps) const override;
  Var purify_graph(Graph& g, Var x, SeededRng& rng, std::size_t steps) const override;

  const PurifyConfig& config() const { return cfg_; }
  const NetworkField& field() const { return field_; }

 private:
  NetworkField field_;
  PurifyConfig cfg_;
};

// ---------------------------------------------------------------------------
// ROC / AUC

/// P(adv > clean) + 0.5 P(adv == clean) over all pairs.
double roc_auc(std::span<const double> scores_clean, std::span<const double> scores_adv);

struct RocPoint {
  double fpr, tpr;
};

/// One point per distinct threshold, from (0,0) to (1,1); adversarial is the
/// positive class and "score >= threshold" flags.
std::vector<RocPoint> roc_curve(std::span<const double> scores_clean, std::span<const double> scores_adv);
double trapezoid_area(std::span<const RocPoint> curve);

void write_roc_csv(const std::filesystem::path& path, std::span<const RocPoint> curve);

struct ScoredSample {
  std::size_t sample_id;
  int label;  // 0 clean, 1 adversarial
  double score;
};
void write_scores_csv(const std::filesystem::path& path, std::span<const ScoredSample> rows);

}  // namespace fmvp
