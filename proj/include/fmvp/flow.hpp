#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fmvp/autodiff.hpp"
#include "fmvp/optim.hpp"
#include "fmvp/params.hpp"
#include "fmvp/rng.hpp"
#include "fmvp/spectral.hpp"

namespace fmvp {

// ---------------------------------------------------------------------------
// Masking and the straight-line path

/// Independent Bernoulli(keep_ratio) indicator per element, 1 = keep.
/// Element i is kept iff the i-th uniform draw is below keep_ratio.
Tensor sample_mask(const Shape& shape, float keep_ratio, SeededRng& rng);

/// x0 = m * x_adv + (1 - m) * eps with eps drawn from `rng` (one standard
/// normal per element, in element order).
Tensor make_source(const Tensor& x_adv, const Tensor& mask, SeededRng& rng);

/// x_t = (1 - t) x0 + t x1.
Tensor interpolate(const Tensor& x0, const Tensor& x1, float t);
/// u* = x1 - x0.
Tensor target_velocity(const Tensor& x0, const Tensor& x1);

// ---------------------------------------------------------------------------
// Losses

struct LossConfig {
  float lambda_cfm = 1.0f;
  float lambda_fgl = 0.2f;
  FglResidual residual = FglResidual::complex_difference;
  double tau = 5.0;
  double floor = 0.1;
};

/// Mean over all elements of (v_pred - u*)^2.
Var cfm_loss(Var v_pred, const Tensor& u_star);

struct TotalLoss {
  Var total, cfm, fgl;  // fgl is empty when lambda_fgl == 0
};

/// lambda_cfm * L_cfm + lambda_fgl * L_fgl. With lambda_fgl == 0 the spectral
/// term is not evaluated and the total equals the CFM term exactly.
TotalLoss total_loss(Var v_pred, const Tensor& u_star, const LossConfig& cfg, const FrequencyWeightMask& mask);

// ---------------------------------------------------------------------------
// Training

enum class TrainVariant { pgd_aware, cw_aware, gaussian_generalist };

std::string_view variant_name(TrainVariant v);
TrainVariant parse_variant(std::string_view s);

/// Clean videos plus (for attack-aware variants) their adversarial
/// counterparts. `adv_from_attack` is the taint flag: set whenever `adv`
/// came out of an attack.
struct TrainBatch {
  Tensor clean;
  std::optional<Tensor> adv;
  bool adv_from_attack = false;
};

struct TrainConfig {
  LossConfig loss;
  float rho_min = 0.2f;
  float rho_max = 0.6f;
};

struct LossRecord {
  std::size_t step = 0;
  double total = 0.0;
  double cfm = 0.0;
  double fgl = 0.0;
  bool applied = true;
  std::string diagnostic;
};

/// One optimization step: per sample draw t ~ U(0,1), rho ~ U(rho_min,
/// rho_max), the keep mask and the fill noise; build x0, x_t and u*; evaluate
/// the total loss and apply one AdamW update. Per-sample draws come from
/// independent child streams, so they do not depend on batch order.
///
/// A non-finite loss leaves params and optimizer untouched and returns a
/// record with applied == false.
LossRecord train_step(const TrainBatch& batch, TrainVariant variant, ParamStore& params, AdamW& opt,
                      SeededRng& rng, const TrainConfig& cfg);

struct PurifierTrainConfig {
  TrainConfig flow;
  AdamWConfig optim;  // lr 1e-4, betas (0.9, 0.999), decay 0.01
  std::size_t steps = 8000;
  std::size_t batch_size = 1;
  std::uint64_t seed = 0;
};

struct PurifierTrainResult {
  ParamStore params;
  std::vector<LossRecord> log;  // one record per step, skipped steps included
  std::size_t skipped = 0;
};

/// Stage-1 training loop. Every step draws `batch_size` record indices with
/// replacement and calls train_step. `adv`, when given, must be aligned with
/// `clean` record for record; the gaussian variant ignores it and rejects a
/// tainted one. Parameters start from init_velocity_params(C, seed).
PurifierTrainResult train_purifier(const Tensor& clean, const std::optional<Tensor>& adv, bool adv_from_attack,
                                   TrainVariant variant, const PurifierTrainConfig& cfg,
                                   const std::function<void(const LossRecord&)>& on_step = {});

void write_loss_header(std::ostream& os);
void write_loss_row(std::ostream& os, const LossRecord& r);

}  // namespace fmvp
