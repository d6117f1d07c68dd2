#include "fmvp/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "fmvp/errors.hpp"

namespace fmvp {

bool GradCheckReport::passed() const {
  return std::all_of(leaves.begin(), leaves.end(), [](const LeafCheck& l) { return l.passed; });
}

std::vector<std::string> GradCheckReport::failures() const {
  std::vector<std::string> out;
  for (const auto& l : leaves)
    if (!l.passed) out.push_back(l.name);
  return out;
}

namespace {

double eval_loss(const LossBuilder& build, const ParamStore& params) {
  Graph g;
  Var loss = build(g, params);
  if (loss.value().numel() != 1) throw ContractError("grad_check: loss builder returned a non-scalar");
  return loss.scalar();
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& build, const ParamStore& params, float h, double tol,
                           double abs_floor) {
  GradCheckReport report;
  if (params.empty()) return report;

  GradientMap analytic;
  {
    Graph g;
    Var loss = build(g, params);
    analytic = g.backward(loss);
  }

  ParamStore work = params;
  for (const auto& [name, value] : params) {
    auto it = analytic.find(name);
    const Tensor grad = it != analytic.end() ? it->second : Tensor::zeros_like(value);
    std::vector<double> numeric(value.numel());
    Tensor& p = work.at(name);
    for (std::size_t i = 0; i < value.numel(); ++i) {
      const float orig = value[i];
      const float up = orig + h;
      const float down = orig - h;
      p[i] = up;
      const double lp = eval_loss(build, work);
      p[i] = down;
      const double lm = eval_loss(build, work);
      p[i] = orig;
      numeric[i] = (lp - lm) / (static_cast<double>(up) - static_cast<double>(down));
    }
    LeafCheck leaf;
    leaf.name = name;
    double scale = abs_floor;
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      scale = std::max({scale, std::abs(numeric[i]), std::abs(static_cast<double>(grad[i]))});
    }
    for (std::size_t i = 0; i < numeric.size(); ++i) {
      const double err = std::abs(numeric[i] - grad[i]);
      if (err > leaf.max_abs_error) {
        leaf.max_abs_error = err;
        leaf.worst_index = i;
      }
    }
    leaf.max_rel_error = leaf.max_abs_error / scale;
    leaf.passed = leaf.max_rel_error < tol && std::isfinite(leaf.max_rel_error);
    report.leaves.push_back(leaf);
  }
  return report;
}

}  // namespace fmvp
