#include "fmvp/attacks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include <json.hpp>

#include "fmvp/classifier.hpp"
#include "fmvp/csv.hpp"
#include "fmvp/errors.hpp"
#include "fmvp/optim.hpp"

namespace fmvp {

using nlohmann::json;

DiffModel classifier_model(const ParamStore& params) {
  return [params](Graph& g, Var x) { return classifier_logits(bind_classifier_params(g, params, false), x); };
}

void PgdConfig::validate() const {
  if (!(epsilon >= 0.0f) || !(eta > 0.0f) || iters < 1) {
    throw ContractError("pgd: need epsilon >= 0, eta > 0, iters >= 1");
  }
}

void CwConfig::validate() const {
  if (!(c_init > 0.0f) || !(lr > 0.0f) || !(kappa >= 0.0f) || search_steps < 1 || iters < 1) {
    throw ContractError("cw: need c_init > 0, lr > 0, kappa >= 0, search_steps >= 1, iters >= 1");
  }
}

void AdaptiveConfig::validate() const {
  if (!(epsilon >= 0.0f) || !(alpha > 0.0f) || iters < 1 || eot_samples < 1 || restarts < 1 ||
      purify_steps_grad < 1 || purify_steps_eval < 1) {
    throw ContractError("adaptive: need epsilon >= 0, alpha > 0 and all counts >= 1");
  }
}

bool attack_succeeded(std::span<const float> logits, int y, float kappa) {
  const auto K = logits.size();
  if (y < 0 || static_cast<std::size_t>(y) >= K) throw ContractError("attack: label outside logits");
  const std::size_t top = static_cast<std::size_t>(std::max_element(logits.begin(), logits.end()) - logits.begin());
  if (top == static_cast<std::size_t>(y)) return false;
  float best_other = -std::numeric_limits<float>::infinity();
  for (std::size_t i = 0; i < K; ++i) {
    if (i != static_cast<std::size_t>(y)) best_other = std::max(best_other, logits[i]);
  }
  return best_other - logits[static_cast<std::size_t>(y)] >= kappa;
}

namespace {

void require_single(const char* what, const Tensor& x) {
  if (x.rank() != 5 || x.dim(0) != 1) throw ShapeError(std::string(what) + ": expected (1,C,T,H,W), got " + shape_str(x.shape()));
}

Tensor forward_logits(const DiffModel& model, const Tensor& x) {
  Graph g;
  return model(g, g.constant(x)).value();
}

Tensor input_gradient(const DiffModel& model, const Tensor& x, int y, const Purifier* purifier, SeededRng* rng,
                      std::size_t steps) {
  Graph g;
  Var xv = g.leaf("x", x);
  Var in = purifier ? purifier->purify_graph(g, xv, *rng, steps) : xv;
  const int labels[1] = {y};
  Var loss = ops::softmax_cross_entropy(model(g, in), labels);
  return g.backward(loss).at("x");
}

float sign(float v) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); }

// One projected signed step: x_adv <- clip01(clip_{x +- eps}(x_adv + step * sign(grad))).
void signed_step(Tensor& x_adv, const Tensor& x, const Tensor& grad, float step, float eps) {
  for (std::size_t i = 0; i < x_adv.numel(); ++i) {
    float v = x_adv[i] + step * sign(grad[i]);
    v = std::clamp(v, x[i] - eps, x[i] + eps);
    x_adv[i] = std::clamp(v, 0.0f, 1.0f);
  }
}

void fill_norms(AttackResult& r, const Tensor& x) {
  double linf = 0.0, l2 = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double d = static_cast<double>(r.x_adv[i]) - x[i];
    linf = std::max(linf, std::abs(d));
    l2 += d * d;
  }
  r.linf = linf;
  r.l2 = std::sqrt(l2);
}

void check_budget(const char* what, const AttackResult& r, std::optional<float> eps) {
  for (float v : r.x_adv.data()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw ContractError(std::string(what) + ": output left [0,1]");
  }
  if (eps && r.linf > static_cast<double>(*eps) + 1e-6) {
    throw ContractError(std::string(what) + ": L-inf " + fmt_num(r.linf) + " exceeds budget " + fmt_num(*eps));
  }
}

// 0.5 * (tanh(w) + 1), elementwise.
Var tanh_box(Var w) {
  const Tensor& wv = w.value();
  Tensor out(wv.shape()), deriv(wv.shape());
  for (std::size_t i = 0; i < wv.numel(); ++i) {
    const float th = std::tanh(wv[i]);
    out[i] = 0.5f * (th + 1.0f);
    deriv[i] = 0.5f * (1.0f - th * th);
  }
  return w.graph()->record("tanh-box", std::move(out), {w},
                           [deriv = std::move(deriv)](const Tensor& g, std::vector<Tensor>& gin,
                                                      const std::vector<bool>& needs) {
                             if (!needs[0]) return;
                             gin[0] = Tensor(g.shape());
                             for (std::size_t i = 0; i < g.numel(); ++i) gin[0][i] = g[i] * deriv[i];
                           });
}

// max(z_y - max_{i != y} z_i, -kappa) for logits (1, K).
Var cw_margin(Var logits, int y, float kappa) {
  const Tensor& z = logits.value();
  const std::size_t K = z.numel();
  const auto yi = static_cast<std::size_t>(y);
  std::size_t j = yi == 0 ? 1 : 0;
  for (std::size_t i = 0; i < K; ++i) {
    if (i != yi && z[i] > z[j]) j = i;
  }
  const double raw = static_cast<double>(z[yi]) - z[j];
  const bool active = raw > -static_cast<double>(kappa);
  const double value = active ? raw : -static_cast<double>(kappa);
  return logits.graph()->record(
      "cw-margin", Tensor::scalar(static_cast<float>(value)), {logits},
      [=](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>& needs) {
        if (!needs[0]) return;
        gin[0] = Tensor(Shape{1, K});
        if (active) {
          gin[0][yi] = g[0];
          gin[0][j] = -g[0];
        }
      },
      value);
}

}  // namespace

AttackResult pgd_attack(const Tensor& x, int y, const DiffModel& model, const PgdConfig& cfg) {
  cfg.validate();
  require_single("pgd", x);
  AttackResult r;
  r.x_adv = x;
  for (std::size_t it = 0; it < cfg.iters; ++it) {
    signed_step(r.x_adv, x, input_gradient(model, r.x_adv, y, nullptr, nullptr, 0), cfg.eta, cfg.epsilon);
  }
  r.iters_used = cfg.iters;
  r.success = attack_succeeded(forward_logits(model, r.x_adv).data(), y);
  fill_norms(r, x);
  check_budget("pgd", r, cfg.epsilon);
  return r;
}

AttackResult cw_attack(const Tensor& x, int y, const DiffModel& model, const CwConfig& cfg) {
  cfg.validate();
  require_single("cw", x);
  AttackResult best;
  best.x_adv = x;
  if (attack_succeeded(forward_logits(model, x).data(), y, cfg.kappa)) {
    best.success = true;
    check_budget("cw", best, std::nullopt);
    return best;
  }

  Tensor w0(x.shape());
  for (std::size_t i = 0; i < x.numel(); ++i) {
    w0[i] = std::atanh(std::clamp(2.0f * x[i] - 1.0f, -1.0f + 1e-6f, 1.0f - 1e-6f));
  }
  double best_l2sq = std::numeric_limits<double>::infinity();
  double c = cfg.c_init, lb = 0.0, ub = std::numeric_limits<double>::infinity();

  for (std::size_t s = 0; s < cfg.search_steps; ++s) {
    ParamStore w;
    w.add("w", w0);
    AdamWConfig oc;
    oc.lr = cfg.lr;
    oc.weight_decay = 0.0f;
    AdamW opt(oc);
    bool hit = false;
    for (std::size_t it = 0;; ++it) {
      Graph g;
      Var wv = g.leaf("w", w.at("w"));
      Var xa = tanh_box(wv);
      Var d = ops::sub(xa, g.constant(x));
      Var l2sq = ops::sum(ops::mul(d, d));
      Var logits = model(g, xa);
      if (attack_succeeded(logits.value().data(), y, cfg.kappa)) {
        hit = true;
        if (l2sq.scalar() < best_l2sq) {
          best_l2sq = l2sq.scalar();
          best.x_adv = xa.value();
          best.success = true;
        }
      }
      if (it == cfg.iters) break;
      Var loss = ops::add(l2sq, ops::scale(cw_margin(logits, y, cfg.kappa), static_cast<float>(c)));
      opt.step(w, g.backward(loss));
      ++best.iters_used;
    }
    if (hit) {
      ub = c;
      c = 0.5 * (lb + ub);
    } else {
      lb = c;
      c = std::isinf(ub) ? 2.0 * c : 0.5 * (lb + ub);
    }
  }
  fill_norms(best, x);
  check_budget("cw", best, std::nullopt);
  return best;
}

AttackResult eot_adaptive_attack(const Tensor& x, int y, const DiffModel& model, const Purifier& purifier,
                                 const AdaptiveConfig& cfg, SeededRng& rng) {
  cfg.validate();
  require_single("adaptive", x);
  AttackResult first;
  std::size_t used = 0;
  for (std::size_t r = 0; r < cfg.restarts; ++r) {
    SeededRng rr = rng.split(r);
    Tensor xa = x;
    for (std::size_t it = 0; it < cfg.iters; ++it) {
      Tensor grad = input_gradient(model, xa, y, &purifier, &rr, cfg.purify_steps_grad);
      for (std::size_t s = 1; s < cfg.eot_samples; ++s) {
        const Tensor gs = input_gradient(model, xa, y, &purifier, &rr, cfg.purify_steps_grad);
        for (std::size_t i = 0; i < grad.numel(); ++i) grad[i] += gs[i];
      }
      const float inv = 1.0f / static_cast<float>(cfg.eot_samples);
      for (auto& v : grad.data()) v *= inv;
      signed_step(xa, x, grad, cfg.alpha, cfg.epsilon);
      ++used;
    }
    const Tensor purified = purifier.purify(xa, rr, cfg.purify_steps_eval);
    AttackResult res;
    res.x_adv = std::move(xa);
    res.success = attack_succeeded(forward_logits(model, purified).data(), y);
    if (res.success || r == 0) {
      res.iters_used = used;
      fill_norms(res, x);
      check_budget("adaptive", res, cfg.epsilon);
      if (res.success) return res;
      first = std::move(res);
    }
  }
  first.iters_used = used;
  return first;
}

void write_attack_sidecar(const std::filesystem::path& path, std::span<const AttackRecord> records) {
  json arr = json::array();
  for (const auto& r : records) {
    arr.push_back({{"attack", r.attack}, {"success", r.success}, {"linf", r.linf}, {"l2", r.l2},
                   {"iters_used", r.iters_used}});
  }
  auto os = open_output(path);
  os << arr.dump(2) << '\n';
}

std::vector<AttackRecord> read_attack_sidecar(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open attack sidecar '" + path.string() + "'");
  try {
    const json arr = json::parse(is);
    std::vector<AttackRecord> out;
    for (const auto& o : arr) {
      out.push_back({o.at("attack").get<std::string>(), o.at("success").get<bool>(), o.at("linf").get<double>(),
                     o.at("l2").get<double>(), o.at("iters_used").get<std::size_t>()});
    }
    return out;
  } catch (const json::exception& e) {
    throw FormatError("attack sidecar '" + path.string() + "': " + e.what());
  }
}

}  // namespace fmvp
