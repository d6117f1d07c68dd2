#include <doctest.h>

#include <cmath>
#include <sstream>

#include "fmvp/errors.hpp"
#include "fmvp/flow.hpp"
#include "fmvp/velocity_net.hpp"

using namespace fmvp;

namespace {

Tensor rand_tensor(Shape s, std::uint64_t seed, float lo = 0.0f, float hi = 1.0f) {
  SeededRng r(seed);
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = lo + (hi - lo) * r.uniform();
  return t;
}

}  // namespace

TEST_CASE("sample_mask degenerate and statistical") {
  SeededRng r(1);
  CHECK(sample_mask({2, 3}, 1.0f, r) == Tensor::ones({2, 3}));
  CHECK(sample_mask({2, 3}, 0.0f, r) == Tensor::zeros({2, 3}));
  CHECK_THROWS_AS(sample_mask({2}, 1.5f, r), ContractError);
  Tensor m = sample_mask({3, 8, 32, 32}, 0.4f, r);
  double kept = 0;
  for (float v : m.data()) kept += v;
  CHECK(std::fabs(kept / m.numel() - 0.4) < 0.006);
}

TEST_CASE("make_source positional replay") {
  const Tensor x = rand_tensor({1, 1, 2, 4, 4}, 2);
  SeededRng r(3);
  CHECK(make_source(x, Tensor::ones(x.shape()), r) == x);
  SeededRng r0(4), r0b(4);
  CHECK(make_source(x, Tensor::zeros(x.shape()), r0) == sample_gaussian(x.shape(), r0b));

  SeededRng rm(5);
  Tensor m = sample_mask(x.shape(), 0.5f, rm);
  SeededRng rs(6), replay(6);
  Tensor x0 = make_source(x, m, rs);
  Tensor eps = sample_gaussian(x.shape(), replay);
  for (std::size_t i = 0; i < x.numel(); ++i) CHECK(x0[i] == (m[i] > 0.5f ? x[i] : eps[i]));
}

TEST_CASE("path identities over random triples") {
  SeededRng r(7);
  for (int n = 0; n < 1000; ++n) {
    Tensor x0 = sample_gaussian({8}, r), x1 = sample_uniform({8}, r);
    const float t = r.uniform();
    Tensor xt = interpolate(x0, x1, t), u = target_velocity(x0, x1);
    for (std::size_t i = 0; i < 8; ++i) {
      // Exact up to the rounding of each float operation involved.
      const float a = xt[i] + (1.0f - t) * u[i];
      const float b = xt[i] - t * u[i];
      const float scale = std::fabs(x0[i]) + std::fabs(x1[i]) + 1.0f;
      REQUIRE(std::fabs(a - x1[i]) <= 4 * 1.2e-7f * scale);
      REQUIRE(std::fabs(b - x0[i]) <= 4 * 1.2e-7f * scale);
    }
  }
  Tensor x0 = rand_tensor({4}, 8), x1 = rand_tensor({4}, 9);
  CHECK(interpolate(x0, x1, 0.0f) == x0);
  CHECK(interpolate(x0, x1, 1.0f) == x1);
  CHECK_THROWS_AS(interpolate(x0, x1, 1.01f), ContractError);
  CHECK_THROWS_AS(interpolate(x0, x1, -0.01f), ContractError);
}

TEST_CASE("cfm_loss against a double-precision oracle") {
  const Tensor v = rand_tensor({2, 1, 2, 4, 4}, 10, -1, 1), u = rand_tensor({2, 1, 2, 4, 4}, 11, -1, 1);
  double ref = 0.0;
  for (std::size_t i = 0; i < v.numel(); ++i) ref += (double(v[i]) - u[i]) * (double(v[i]) - u[i]);
  ref /= v.numel();
  Graph g;
  CHECK(cfm_loss(g.leaf("v", v), u).scalar() == doctest::Approx(ref).epsilon(1e-5));
  Graph g2;
  CHECK(cfm_loss(g2.leaf("v", u), u).scalar() == 0.0);
  Tensor off = u;
  for (auto& e : off.data()) e += 0.25f;
  Graph g3;
  CHECK(cfm_loss(g3.leaf("v", off), u).scalar() == doctest::Approx(0.0625).epsilon(1e-5));
}

TEST_CASE("total_loss weights") {
  const Tensor v = rand_tensor({1, 1, 2, 4, 4}, 12, -1, 1), u = rand_tensor({1, 1, 2, 4, 4}, 13, -1, 1);
  auto mask = build_weight_mask(4, 3);
  LossConfig c0;
  c0.lambda_fgl = 0.0f;
  Graph g;
  TotalLoss t = total_loss(g.leaf("v", v), u, c0, mask);
  CHECK(t.total.scalar() == t.cfm.scalar());
  CHECK_FALSE(t.fgl.valid());

  Graph g2;
  TotalLoss d = total_loss(g2.leaf("v", v), u, LossConfig{}, mask);
  CHECK(d.total.scalar() == doctest::Approx(d.cfm.scalar() + 0.2 * d.fgl.scalar()).epsilon(1e-6));
  Graph g3;
  CHECK(total_loss(g3.leaf("v", u), u, LossConfig{}, mask).total.scalar() == 0.0);
}

TEST_CASE("FGL changes the gradient on high-frequency residuals") {
  ParamStore p = init_velocity_params(1, 1);
  for (auto& [name, value] : p) {
    if (name.rfind("vnet.head", 0) == 0) value = rand_tensor(value.shape(), 14, -0.1f, 0.1f);
  }
  Tensor x = rand_tensor({1, 1, 2, 8, 8}, 15);
  Tensor u({1, 1, 2, 8, 8});
  for (std::size_t i = 0; i < u.numel(); ++i) u[i] = (i % 2 ? 1.0f : -1.0f);  // checkerboard along W
  auto grads = [&](float lfgl) {
    Graph g;
    auto net = bind_velocity_params(g, p, true);
    const float t[] = {0.5f};
    Var v = predict_velocity(g, net, g.constant(x), t);
    LossConfig c;
    c.lambda_fgl = lfgl;
    return g.backward(total_loss(v, u, c, build_weight_mask(8, 5)).total);
  };
  CHECK_FALSE(grads(0.0f).at("vnet.head.w") == grads(0.2f).at("vnet.head.w"));
}

TEST_CASE("train_step variant contract") {
  ParamStore p = init_velocity_params(1, 2);
  AdamW opt;
  SeededRng r(1);
  Tensor clean = rand_tensor({1, 1, 2, 4, 4}, 16);
  TrainBatch tainted{clean, clean, true};
  CHECK_THROWS_AS(train_step(tainted, TrainVariant::gaussian_generalist, p, opt, r, {}), ContractError);
  TrainBatch plain{clean, std::nullopt, false};
  CHECK_THROWS_AS(train_step(plain, TrainVariant::pgd_aware, p, opt, r, {}), ContractError);
  CHECK(train_step(plain, TrainVariant::gaussian_generalist, p, opt, r, {}).applied);
  CHECK(parse_variant("cw") == TrainVariant::cw_aware);
  CHECK_THROWS_AS(parse_variant("fgsm"), ContractError);
}

TEST_CASE("train_step skips non-finite losses without touching params") {
  ParamStore p = init_velocity_params(1, 3);
  const ParamStore before = p;
  AdamW opt;
  SeededRng r(2);
  Tensor clean = rand_tensor({1, 1, 2, 4, 4}, 17);
  clean[3] = std::numeric_limits<float>::infinity();
  TrainBatch b{clean, std::nullopt, false};
  LossRecord rec;
  try {
    rec = train_step(b, TrainVariant::gaussian_generalist, p, opt, r, {});
    CHECK_FALSE(rec.applied);
    CHECK_FALSE(rec.diagnostic.empty());
  } catch (const NumericError&) {
    // the network refuses non-finite inputs before a loss exists
  }
  CHECK(p == before);
  CHECK(opt.steps_taken() == 0);
}

TEST_CASE("overfit one batch: moving-average loss decreases") {
  const Tensor batch = rand_tensor({2, 1, 2, 8, 8}, 18);
  PurifierTrainConfig cfg;
  cfg.steps = 200;
  cfg.batch_size = 2;
  cfg.seed = 4;
  cfg.optim.lr = 1e-3f;
  PurifierTrainResult r = train_purifier(batch.slice0(0, 1), std::nullopt, false, TrainVariant::gaussian_generalist, cfg);
  REQUIRE(r.log.size() == 200);
  auto window = [&](std::size_t a) {
    double s = 0;
    for (std::size_t i = a; i < a + 50; ++i) s += r.log[i].total;
    return s / 50;
  };
  CHECK(window(50) < window(0));
  CHECK(window(100) < window(50));
  CHECK(window(150) < window(100));
}

TEST_CASE("train_purifier is deterministic") {
  const Tensor data = rand_tensor({3, 1, 2, 4, 4}, 19);
  PurifierTrainConfig cfg;
  cfg.steps = 5;
  cfg.batch_size = 2;
  cfg.seed = 9;
  auto a = train_purifier(data, std::nullopt, false, TrainVariant::gaussian_generalist, cfg);
  auto b = train_purifier(data, std::nullopt, false, TrainVariant::gaussian_generalist, cfg);
  CHECK(a.params == b.params);
  CHECK_THROWS_AS(train_purifier(data, data, true, TrainVariant::gaussian_generalist, cfg), ContractError);
  CHECK_THROWS_AS(train_purifier(data, std::nullopt, false, TrainVariant::cw_aware, cfg), ContractError);
  auto c = train_purifier(data, data, true, TrainVariant::pgd_aware, cfg);
  CHECK(c.log.size() == 5);
}

TEST_CASE("loss csv format") {
  std::ostringstream os;
  write_loss_header(os);
  write_loss_row(os, LossRecord{3, 0.5, 0.25, 1.25, true, ""});
  CHECK(os.str() == "step,loss_total,loss_cfm,loss_fgl\n3,0.5,0.25,1.25\n");
}
