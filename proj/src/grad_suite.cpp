#include "fmvp/grad_suite.hpp"

#include <cmath>

#include "fmvp/flow.hpp"
#include "fmvp/rng.hpp"
#include "fmvp/spectral.hpp"
#include "fmvp/velocity_net.hpp"

namespace fmvp {
namespace {

Tensor uniform_in(const Shape& s, float lo, float hi, SeededRng& rng) {
  Tensor t(s);
  for (auto& v : t.data()) v = lo + (hi - lo) * rng.uniform();
  return t;
}

// Push values at least `gap` away from each kink.
Tensor avoid(Tensor t, std::initializer_list<float> kinks, float gap) {
  for (auto& v : t.data()) {
    for (float k : kinks) {
      if (std::fabs(v - k) < gap) v = v < k ? k - gap : k + gap;
    }
  }
  return t;
}

// Contract a non-scalar output against fixed random weights.
Var reduce(Graph& g, Var out, SeededRng rng) {
  if (out.value().numel() == 1) return out;
  return ops::sum(ops::mul(out, g.constant(uniform_in(out.shape(), -1.0f, 1.0f, rng))));
}

struct Case {
  std::string name;
  ParamStore params;
  std::function<Var(Graph&, std::vector<Var>&)> body;
};

Case primitive_case(Primitive p, SeededRng& rng) {
  Case c;
  c.name = std::string(primitive_name(p));
  auto add = [&](const char* n, Tensor t) { c.params.add(n, std::move(t)); };
  const Shape vid{1, 2, 2, 3, 3};
  PrimitiveArgs args;
  switch (p) {
    case Primitive::add:
    case Primitive::sub:
    case Primitive::hadamard:
      add("a", uniform_in({2, 5}, -1, 1, rng));
      add("b", uniform_in({2, 5}, -1, 1, rng));
      break;
    case Primitive::scalar_mul:
      add("a", uniform_in({3, 4}, -1, 1, rng));
      args.scalar = -1.7f;
      break;
    case Primitive::linear:
      add("x", uniform_in({3, 4}, -1, 1, rng));
      add("w", uniform_in({5, 4}, -1, 1, rng));
      add("b", uniform_in({5}, -1, 1, rng));
      break;
    case Primitive::conv3d:
      add("x", uniform_in(vid, -1, 1, rng));
      add("k", uniform_in({3, 2, 3, 3, 3}, -0.5f, 0.5f, rng));
      add("b", uniform_in({3}, -1, 1, rng));
      break;
    case Primitive::silu:
    case Primitive::sum:
    case Primitive::mean:
    case Primitive::l2norm:
      add("a", uniform_in({2, 6}, -2, 2, rng));
      break;
    case Primitive::relu:
      add("a", avoid(uniform_in({2, 6}, -1, 1, rng), {0.0f}, 0.05f));
      break;
    case Primitive::clamp01:
      add("a", avoid(uniform_in({2, 6}, -0.5f, 1.5f, rng), {0.0f, 1.0f}, 0.05f));
      break;
    case Primitive::reshape:
      add("a", uniform_in({2, 6}, -1, 1, rng));
      args.shape = {3, 4};
      break;
    case Primitive::concat_channel:
      add("a", uniform_in(vid, -1, 1, rng));
      add("b", uniform_in({1, 1, 2, 3, 3}, -1, 1, rng));
      break;
    case Primitive::broadcast:
      add("a", uniform_in({2, 3}, -1, 1, rng));
      args.shape = {2, 3, 4};
      break;
  }
  const SeededRng wrng = rng.split(0x77);
  c.body = [p, args, wrng](Graph& g, std::vector<Var>& in) { return reduce(g, apply_primitive(p, in, args), wrng); };
  return c;
}

}  // namespace

std::vector<NamedGradCheck> run_grad_suite(std::uint64_t seed, double tol, double abs_floor) {
  SeededRng root(seed);
  std::vector<Case> cases;
  std::uint64_t id = 0;
  for (Primitive p : all_primitives()) {
    SeededRng r = root.split(id++);
    cases.push_back(primitive_case(p, r));
  }

  {
    SeededRng r = root.split(id++);
    Case c{"avg_pool3d", {}, {}};
    c.params.add("a", uniform_in({1, 2, 2, 4, 4}, -1, 1, r));
    const SeededRng w = r.split(1);
    c.body = [w](Graph& g, std::vector<Var>& in) { return reduce(g, ops::avg_pool3d(in[0]), w); };
    cases.push_back(std::move(c));
  }
  {
    SeededRng r = root.split(id++);
    Case c{"global_avg_pool", {}, {}};
    c.params.add("a", uniform_in({2, 3, 2, 2, 2}, -1, 1, r));
    const SeededRng w = r.split(1);
    c.body = [w](Graph& g, std::vector<Var>& in) { return reduce(g, ops::global_avg_pool(in[0]), w); };
    cases.push_back(std::move(c));
  }
  {
    SeededRng r = root.split(id++);
    Case c{"softmax_cross_entropy", {}, {}};
    c.params.add("z", uniform_in({3, 4}, -2, 2, r));
    c.body = [](Graph&, std::vector<Var>& in) {
      const int labels[] = {0, 3, 1};
      return ops::softmax_cross_entropy(in[0], labels);
    };
    cases.push_back(std::move(c));
  }

  const Shape vshape{1, 1, 2, 8, 8};
  for (FglResidual res : {FglResidual::complex_difference, FglResidual::magnitude_difference}) {
    SeededRng r = root.split(id++);
    Case c{res == FglResidual::complex_difference ? "fgl_loss" : "fgl_loss_magnitude", {}, {}};
    c.params.add("v", uniform_in(vshape, -1, 1, r));
    Tensor target = uniform_in(vshape, -1, 1, r);
    c.body = [target, res](Graph&, std::vector<Var>& in) {
      const auto mask = build_weight_mask(8, half_width(8));
      return fgl_loss(in[0], target, mask, res);
    };
    cases.push_back(std::move(c));
  }
  {
    SeededRng r = root.split(id++);
    Case c{"cfm_loss", {}, {}};
    c.params.add("v", uniform_in(vshape, -1, 1, r));
    Tensor target = uniform_in(vshape, -1, 1, r);
    c.body = [target](Graph&, std::vector<Var>& in) { return cfm_loss(in[0], target); };
    cases.push_back(std::move(c));
  }

  std::vector<NamedGradCheck> out;
  for (auto& c : cases) {
    auto body = c.body;
    LossBuilder build = [body](Graph& g, const ParamStore& ps) {
      std::vector<Var> in;
      for (const auto& [name, value] : ps) in.push_back(g.leaf(name, value));
      return body(g, in);
    };
    out.push_back({c.name, grad_check(build, c.params, 1e-3f, tol, abs_floor)});
  }

  // Velocity network end to end: every parameter plus the input, through
  // the total training loss. Head weights start at zero, so perturb them.
  // A wider step keeps the float32 forward noise below the tolerance.
  {
    SeededRng r = root.split(id++);
    ParamStore ps = init_velocity_params(1, seed);
    for (auto& [name, value] : ps) {
      if (name.rfind("vnet.head", 0) == 0) value = uniform_in(value.shape(), -0.1f, 0.1f, r);
    }
    ps.add("x_t", uniform_in(vshape, -1, 1, r));
    Tensor target = uniform_in(vshape, -1, 1, r);
    LossBuilder build = [target](Graph& g, const ParamStore& all) {
      ParamStore net;
      for (const auto& [name, value] : all) {
        if (name != "x_t") net.add(name, value);
      }
      auto vars = bind_velocity_params(g, net, true);
      Var x = g.leaf("x_t", all.at("x_t"));
      const float t[] = {0.37f};
      Var v = predict_velocity(g, vars, x, t);
      const auto mask = build_weight_mask(8, half_width(8));
      return total_loss(v, target, LossConfig{}, mask).total;
    };
    out.push_back({"velocity_net", grad_check(build, ps, 1e-2f, tol, abs_floor)});
  }
  return out;
}

}  // namespace fmvp
