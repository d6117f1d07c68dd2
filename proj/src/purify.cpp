#include "fmvp/purify.hpp"

#include <algorithm>
#include <cmath>

#include "fmvp/csv.hpp"
#include "fmvp/errors.hpp"

namespace fmvp {

void PurifyConfig::validate() const {
  if (!(gamma >= 0.0f && gamma <= 1.0f)) throw ContractError("purify: gamma must be in [0,1]");
  if (!(xi >= 0.0f)) throw ContractError("purify: xi must be >= 0");
  if (steps < 1) throw ContractError("purify: steps must be >= 1");
}

namespace {

struct InitDraws {
  Tensor mask;    // 1 keep, 0 replace
  Tensor offset;  // xi*eps where kept, eps where replaced
};

InitDraws draw_init(const Shape& shape, const PurifyConfig& cfg, SeededRng& rng) {
  cfg.validate();
  InitDraws d{Tensor(shape), Tensor(shape)};
  for (auto& m : d.mask.data()) m = rng.uniform() < cfg.gamma ? 1.0f : 0.0f;
  for (std::size_t i = 0; i < d.offset.numel(); ++i) {
    const float eps = rng.gaussian();
    d.offset[i] = d.mask[i] != 0.0f ? cfg.xi * eps : eps;
  }
  return d;
}

void check_state(const Tensor& x, std::size_t step) {
  if (!x.all_finite()) throw NumericError("euler: non-finite state after step " + std::to_string(step));
}

}  // namespace

Tensor init_inference_state(const Tensor& x_adv, const PurifyConfig& cfg, SeededRng& rng) {
  const InitDraws d = draw_init(x_adv.shape(), cfg, rng);
  Tensor x0(x_adv.shape());
  for (std::size_t i = 0; i < x0.numel(); ++i) {
    x0[i] = d.mask[i] != 0.0f ? x_adv[i] + d.offset[i] : d.offset[i];
  }
  return x0;
}

Var init_inference_state(Graph& g, Var x_adv, const PurifyConfig& cfg, SeededRng& rng) {
  InitDraws d = draw_init(x_adv.shape(), cfg, rng);
  return ops::add(ops::mul(x_adv, g.constant(std::move(d.mask))), g.constant(std::move(d.offset)));
}

Tensor euler_integrate(const Tensor& x0, const VelocityField& field, std::size_t steps) {
  if (steps < 1) throw ContractError("euler: steps must be >= 1");
  const float dt = 1.0f / static_cast<float>(steps);
  Tensor x = x0;
  for (std::size_t k = 0; k < steps; ++k) {
    const float t = static_cast<float>(k) * dt;
    const Tensor v = field.velocity(x, t);
    require_same_shape("euler: velocity", v, x);
    for (std::size_t i = 0; i < x.numel(); ++i) {
      const float step = v[i] * dt;
      x[i] = x[i] + step;
    }
    check_state(x, k);
  }
  return x;
}

Tensor euler_purify(const Tensor& x0, const VelocityField& field, std::size_t steps) {
  Tensor x = euler_integrate(x0, field, steps);
  for (auto& v : x.data()) v = std::clamp(v, 0.0f, 1.0f);
  return x;
}

Var euler_purify(Graph& g, const VelocityNetVars& net, Var x0, std::size_t steps) {
  if (steps < 1) throw ContractError("euler: steps must be >= 1");
  const float dt = 1.0f / static_cast<float>(steps);
  Var x = x0;
  for (std::size_t k = 0; k < steps; ++k) {
    const float t[1] = {static_cast<float>(k) * dt};
    Var v = predict_velocity(g, net, x, t);
    x = ops::add(x, ops::scale(v, dt));
    check_state(x.value(), k);
  }
  return ops::clamp01(x);
}

double detection_score(const Tensor& x, const VelocityField& field) {
  const Tensor v = field.velocity(x, 0.0f);
  double acc = 0.0;
  for (float e : v.data()) acc += static_cast<double>(e) * e;
  return std::sqrt(acc);
}

FlowPurifier::FlowPurifier(ParamStore params, PurifyConfig cfg) : field_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
}

Tensor FlowPurifier::purify(const Tensor& x, SeededRng& rng, std::size_t steps) const {
  return euler_purify(init_inference_state(x, cfg_, rng), field_, steps);
}

Var FlowPurifier::purify_graph(Graph& g, Var x, SeededRng& rng, std::size_t steps) const {
  auto net = bind_velocity_params(g, field_.params(), false);
  return euler_purify(g, net, init_inference_state(g, x, cfg_, rng), steps);
}

double roc_auc(std::span<const double> clean, std::span<const double> adv) {
  if (clean.empty() || adv.empty()) throw ContractError("roc_auc: both score lists must be nonempty");
  // Mann-Whitney via a merged sort; tied groups contribute half a win per pair.
  std::vector<double> c(clean.begin(), clean.end());
  std::sort(c.begin(), c.end());
  double wins = 0.0;
  for (double a : adv) {
    const auto lo = std::lower_bound(c.begin(), c.end(), a);
    const auto hi = std::upper_bound(lo, c.end(), a);
    wins += static_cast<double>(lo - c.begin()) + 0.5 * static_cast<double>(hi - lo);
  }
  return wins / (static_cast<double>(c.size()) * static_cast<double>(adv.size()));
}

std::vector<RocPoint> roc_curve(std::span<const double> clean, std::span<const double> adv) {
  if (clean.empty() || adv.empty()) throw ContractError("roc_curve: both score lists must be nonempty");
  std::vector<double> c(clean.begin(), clean.end()), a(adv.begin(), adv.end());
  std::sort(c.begin(), c.end(), std::greater<>());
  std::sort(a.begin(), a.end(), std::greater<>());
  std::vector<double> thresholds(c);
  thresholds.insert(thresholds.end(), a.begin(), a.end());
  std::sort(thresholds.begin(), thresholds.end(), std::greater<>());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  std::vector<RocPoint> curve{{0.0, 0.0}};
  std::size_t ic = 0, ia = 0;
  for (double th : thresholds) {
    while (ic < c.size() && c[ic] >= th) ++ic;
    while (ia < a.size() && a[ia] >= th) ++ia;
    curve.push_back({static_cast<double>(ic) / static_cast<double>(c.size()),
                     static_cast<double>(ia) / static_cast<double>(a.size())});
  }
  return curve;
}

double trapezoid_area(std::span<const RocPoint> curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    area += (curve[i].fpr - curve[i - 1].fpr) * 0.5 * (curve[i].tpr + curve[i - 1].tpr);
  }
  return area;
}

void write_roc_csv(const std::filesystem::path& path, std::span<const RocPoint> curve) {
  auto os = open_output(path);
  os << "fpr,tpr\n";
  for (const auto& p : curve) os << fmt_num(p.fpr) << ',' << fmt_num(p.tpr) << '\n';
}

void write_scores_csv(const std::filesystem::path& path, std::span<const ScoredSample> rows) {
  auto os = open_output(path);
  os << "sample_id,label,score\n";
  for (const auto& r : rows) os << r.sample_id << ',' << r.label << ',' << fmt_num(r.score) << '\n';
}

}  // namespace fmvp
