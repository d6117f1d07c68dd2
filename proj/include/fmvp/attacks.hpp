#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fmvp/autodiff.hpp"
#include "fmvp/params.hpp"
#include "fmvp/purify.hpp"
#include "fmvp/rng.hpp"

namespace fmvp {

/// A differentiable victim: records logits (B, K) for input x in x's graph.
using DiffModel = std::function<Var(Graph& g, Var x)>;

/// Victim built from classifier parameters (held as graph constants).
DiffModel classifier_model(const ParamStore& params);

struct PgdConfig {
  float epsilon = 8.0f / 255.0f;
  float eta = 2.0f / 255.0f;
  std::size_t iters = 10;
  void validate() const;
};

struct CwConfig {
  float c_init = 1e-3f;
  std::size_t search_steps = 9;
  float lr = 0.01f;
  float kappa = 0.0f;
  std::size_t iters = 50;
  void validate() const;
};

struct AdaptiveConfig {
  float epsilon = 8.0f / 255.0f;
  float alpha = 0.007f;
  std::size_t iters = 50;
  std::size_t eot_samples = 5;
  std::size_t restarts = 3;
  std::size_t purify_steps_grad = 4;
  std::size_t purify_steps_eval = 10;
  void validate() const;
};

struct AttackResult {
  Tensor x_adv;
  bool success = false;
  double linf = 0.0;
  double l2 = 0.0;
  std::size_t iters_used = 0;
};

/// Attacks operate on one sample x (1, C, T, H, W) with true label y.
/// Every result is checked against [0, 1] and (for the L-inf attacks) the
/// budget; a violation throws ContractError.

/// Signed-gradient ascent on cross-entropy from x (no random start), with
/// projection onto the eps-ball and [0, 1] after every step. sign(0) = 0.
AttackResult pgd_attack(const Tensor& x, int y, const DiffModel& model, const PgdConfig& cfg);

/// L2 Carlini-Wagner in tanh space with a binary search over c. Returns the
/// smallest-L2 success seen, or x with success == false.
AttackResult cw_attack(const Tensor& x, int y, const DiffModel& model, const CwConfig& cfg);

/// EOT-PGD through the purifier: every step averages input gradients over
/// `eot_samples` purifier randomizations unrolled for `purify_steps_grad`
/// Euler steps; each restart ends with one `purify_steps_eval` purification
/// to check success. Restarts stop at the first success; without one the
/// first restart's output is returned.
AttackResult eot_adaptive_attack(const Tensor& x, int y, const DiffModel& model, const Purifier& purifier,
                                 const AdaptiveConfig& cfg, SeededRng& rng);

/// argmax(logits) != y (lowest-index tie-break) and max_{i!=y} z_i - z_y >= kappa.
bool attack_succeeded(std::span<const float> logits, int y, float kappa = 0.0f);

struct AttackRecord {
  std::string attack;
  bool success;
  double linf, l2;
  std::size_t iters_used;
};

/// JSON array of {attack, success, linf, l2, iters_used}.
void write_attack_sidecar(const std::filesystem::path& path, std::span<const AttackRecord> records);
std::vector<AttackRecord> read_attack_sidecar(const std::filesystem::path& path);

}  // namespace fmvp
