#include "fmvp/flow.hpp"

#include <cmath>
#include <ostream>

#include "fmvp/csv.hpp"
#include "fmvp/errors.hpp"
#include "fmvp/velocity_net.hpp"

namespace fmvp {

Tensor sample_mask(const Shape& shape, float keep_ratio, SeededRng& rng) {
  if (!(keep_ratio >= 0.0f && keep_ratio <= 1.0f)) {
    throw ContractError("sample_mask: keep ratio must be in [0,1]");
  }
  Tensor m(shape);
  for (auto& v : m.data()) v = rng.uniform() < keep_ratio ? 1.0f : 0.0f;
  return m;
}

Tensor make_source(const Tensor& x_adv, const Tensor& mask, SeededRng& rng) {
  require_same_shape("make_source", x_adv, mask);
  Tensor x0(x_adv.shape());
  for (std::size_t i = 0; i < x0.numel(); ++i) {
    const float eps = rng.gaussian();
    x0[i] = mask[i] != 0.0f ? x_adv[i] : eps;
  }
  return x0;
}

Tensor interpolate(const Tensor& x0, const Tensor& x1, float t) {
  require_same_shape("interpolate", x0, x1);
  if (!(t >= 0.0f && t <= 1.0f)) throw ContractError("interpolate: t outside [0,1]");
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = (1.0f - t) * x0[i] + t * x1[i];
  return out;
}

Tensor target_velocity(const Tensor& x0, const Tensor& x1) {
  require_same_shape("target_velocity", x0, x1);
  Tensor out(x0.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = x1[i] - x0[i];
  return out;
}

Var cfm_loss(Var v_pred, const Tensor& u_star) {
  if (v_pred.shape() != u_star.shape()) {
    throw ShapeError("cfm_loss: shape mismatch " + shape_str(v_pred.shape()) + " vs " + shape_str(u_star.shape()));
  }
  Var d = ops::sub(v_pred, v_pred.graph()->constant(u_star));
  return ops::mean(ops::mul(d, d));
}

TotalLoss total_loss(Var v_pred, const Tensor& u_star, const LossConfig& cfg, const FrequencyWeightMask& mask) {
  if (cfg.lambda_cfm < 0.0f || cfg.lambda_fgl < 0.0f) throw ContractError("total_loss: negative loss weight");
  TotalLoss out;
  out.cfm = cfm_loss(v_pred, u_star);
  if (cfg.lambda_fgl == 0.0f) {
    out.total = cfg.lambda_cfm == 1.0f ? out.cfm : ops::scale(out.cfm, cfg.lambda_cfm);
    return out;
  }
  out.fgl = fgl_loss(v_pred, u_star, mask, cfg.residual);
  out.total = ops::add(ops::scale(out.cfm, cfg.lambda_cfm), ops::scale(out.fgl, cfg.lambda_fgl));
  return out;
}

std::string_view variant_name(TrainVariant v) {
  switch (v) {
    case TrainVariant::pgd_aware: return "pgd";
    case TrainVariant::cw_aware: return "cw";
    case TrainVariant::gaussian_generalist: return "gaussian";
  }
  return "?";
}

TrainVariant parse_variant(std::string_view s) {
  if (s == "pgd") return TrainVariant::pgd_aware;
  if (s == "cw") return TrainVariant::cw_aware;
  if (s == "gaussian") return TrainVariant::gaussian_generalist;
  throw ContractError("unknown training variant '" + std::string(s) + "' (expected pgd|cw|gaussian)");
}

LossRecord train_step(const TrainBatch& batch, TrainVariant variant, ParamStore& params, AdamW& opt,
                      SeededRng& rng, const TrainConfig& cfg) {
  const Tensor& clean = batch.clean;
  if (clean.rank() != 5) throw ShapeError("train_step: expected (B,C,T,H,W), got " + shape_str(clean.shape()));
  if (!(cfg.rho_min >= 0.0f && cfg.rho_min <= cfg.rho_max && cfg.rho_max <= 1.0f)) {
    throw ContractError("train_step: keep-ratio range must satisfy 0 <= min <= max <= 1");
  }

  const Tensor* source = &clean;
  if (variant == TrainVariant::gaussian_generalist) {
    if (batch.adv && batch.adv_from_attack) {
      throw ContractError("train_step: the gaussian variant must not consume attack outputs");
    }
  } else {
    if (!batch.adv) throw ContractError("train_step: attack-aware variant needs adversarial inputs");
    require_same_shape("train_step", clean, *batch.adv);
    source = &*batch.adv;
  }

  const std::size_t B = clean.dim(0);
  const std::size_t per = clean.numel() / B;
  Shape sample_shape = clean.shape();
  sample_shape[0] = 1;

  const std::uint64_t step_key = rng.next_u64();
  Tensor x_t(clean.shape()), u(clean.shape());
  std::vector<float> times(B);
  for (std::size_t b = 0; b < B; ++b) {
    SeededRng s = SeededRng(step_key).split(b);
    const float t = s.uniform();
    const float rho = cfg.rho_min + (cfg.rho_max - cfg.rho_min) * s.uniform();
    Tensor m = sample_mask(sample_shape, rho, s);
    Tensor x0 = make_source(source->slice0(b, b + 1), m, s);
    Tensor x1 = clean.slice0(b, b + 1);
    Tensor xt = interpolate(x0, x1, t);
    Tensor ub = target_velocity(x0, x1);
    std::copy(xt.data().begin(), xt.data().end(), x_t.ptr() + b * per);
    std::copy(ub.data().begin(), ub.data().end(), u.ptr() + b * per);
    times[b] = t;
  }

  const auto mask = build_weight_mask(clean.dim(3), half_width(clean.dim(4)), cfg.loss.tau, cfg.loss.floor);
  Graph g;
  auto net = bind_velocity_params(g, params, true);
  Var v = predict_velocity(g, net, g.constant(std::move(x_t)), times);
  TotalLoss loss = total_loss(v, u, cfg.loss, mask);

  LossRecord rec;
  rec.step = opt.steps_taken() + 1;
  rec.total = loss.total.scalar();
  rec.cfm = loss.cfm.scalar();
  rec.fgl = loss.fgl.valid() ? loss.fgl.scalar() : 0.0;
  if (!std::isfinite(rec.total)) {
    rec.applied = false;
    rec.diagnostic = "non-finite loss (cfm=" + fmt_num(rec.cfm) + ", fgl=" + fmt_num(rec.fgl) + "); update skipped";
    return rec;
  }
  opt.step(params, g.backward(loss.total));
  return rec;
}

PurifierTrainResult train_purifier(const Tensor& clean, const std::optional<Tensor>& adv, bool adv_from_attack,
                                   TrainVariant variant, const PurifierTrainConfig& cfg,
                                   const std::function<void(const LossRecord&)>& on_step) {
  if (clean.rank() != 5) throw ShapeError("train_purifier: clean set must be (N,C,T,H,W)");
  if (cfg.batch_size == 0) throw ContractError("train_purifier: batch_size must be positive");
  if (variant == TrainVariant::gaussian_generalist && adv && adv_from_attack) {
    throw ContractError("train_purifier: the gaussian variant must not consume attack outputs");
  }
  if (variant != TrainVariant::gaussian_generalist) {
    if (!adv) throw ContractError("train_purifier: variant '" + std::string(variant_name(variant)) + "' needs adversarial inputs");
    require_same_shape("train_purifier", clean, *adv);
  }
  const bool use_adv = variant != TrainVariant::gaussian_generalist;
  const std::size_t n = clean.dim(0);

  PurifierTrainResult res;
  res.params = init_velocity_params(clean.dim(1), cfg.seed);
  AdamW opt(cfg.optim);
  const SeededRng root(cfg.seed);
  SeededRng pick = root.split(0x62617463);
  SeededRng steps_rng = root.split(0x73746570);
  res.log.reserve(cfg.steps);
  for (std::size_t s = 0; s < cfg.steps; ++s) {
    std::vector<Tensor> xs, as;
    for (std::size_t b = 0; b < cfg.batch_size; ++b) {
      const std::size_t i = static_cast<std::size_t>(pick.next_u64() % n);
      xs.push_back(clean.slice0(i, i + 1));
      if (use_adv) as.push_back(adv->slice0(i, i + 1));
    }
    TrainBatch batch{concat0(xs), std::nullopt, use_adv && adv_from_attack};
    if (use_adv) batch.adv = concat0(as);
    LossRecord rec = train_step(batch, variant, res.params, opt, steps_rng, cfg.flow);
    rec.step = s + 1;
    if (!rec.applied) ++res.skipped;
    if (on_step) on_step(rec);
    res.log.push_back(std::move(rec));
  }
  return res;
}

void write_loss_header(std::ostream& os) { os << "step,loss_total,loss_cfm,loss_fgl\n"; }

void write_loss_row(std::ostream& os, const LossRecord& r) {
  os << r.step << ',' << fmt_num(r.total) << ',' << fmt_num(r.cfm) << ',' << fmt_num(r.fgl) << '\n';
}

}  // namespace fmvp
