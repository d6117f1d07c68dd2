#include "fmvp/optim.hpp"

#include <cmath>

#include "fmvp/errors.hpp"

namespace fmvp {

void AdamW::step(ParamStore& params, const GradientMap& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(static_cast<double>(cfg_.beta1), static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(static_cast<double>(cfg_.beta2), static_cast<double>(t_));
  for (auto& [name, p] : params) {
    auto it = grads.find(name);
    if (it == grads.end()) continue;
    const Tensor& g = it->second;
    require_same_shape("adamw", p, g);
    auto [mit, fresh] = m_.try_emplace(name, Tensor::zeros_like(p));
    if (fresh) v_.emplace(name, Tensor::zeros_like(p));
    Tensor& m = mit->second;
    Tensor& v = v_.at(name);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0f - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0f - cfg_.beta2) * g[i] * g[i];
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      const double update = mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * p[i];
      p[i] = static_cast<float>(p[i] - cfg_.lr * update);
    }
  }
}

}  // namespace fmvp
