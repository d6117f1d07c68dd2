#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "fmvp/autodiff.hpp"
#include "fmvp/errors.hpp"
#include "fmvp/grad_check.hpp"
#include "fmvp/params.hpp"
#include "fmvp/rng.hpp"

using namespace fmvp;

namespace {

Tensor rand_tensor(Shape s, std::uint64_t seed, float lo = -1.0f, float hi = 1.0f) {
  SeededRng r(seed);
  Tensor t(std::move(s));
  for (auto& v : t.data()) v = lo + (hi - lo) * r.uniform();
  return t;
}

}  // namespace

TEST_CASE("tensor construction and shape checks") {
  Tensor t({2, 3}, 1.5f);
  CHECK(t.numel() == 6);
  CHECK(t[5] == 1.5f);
  CHECK_THROWS_AS(Tensor({2, 0}), ContractError);
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<float>(3)), ContractError);
  CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
}

TEST_CASE("primitive identities") {
  Graph g;
  Tensor x = rand_tensor({1, 2, 3, 4, 5}, 1);
  Var vx = g.constant(x);
  CHECK(ops::add(vx, g.constant(Tensor::zeros_like(x))).value() == x);

  Graph g2;
  Var one = g2.constant(Tensor::ones({1, 1, 1, 1, 1}));
  Tensor x1 = rand_tensor({2, 1, 3, 4, 5}, 2);
  CHECK(ops::conv3d(g2.constant(x1), one).value() == x1);

  Graph g3;
  CHECK(ops::mean(g3.constant(Tensor::full({3, 4}, 2.0f))).scalar() == 2.0);
}

TEST_CASE("conv3d is linear in input and kernel") {
  const Tensor a = rand_tensor({1, 2, 3, 5, 5}, 3), b = rand_tensor({1, 2, 3, 5, 5}, 4);
  const Tensor k = rand_tensor({3, 2, 3, 3, 3}, 5), k2 = rand_tensor({3, 2, 3, 3, 3}, 6);
  Graph g;
  Var va = g.constant(a), vb = g.constant(b), vk = g.constant(k), vk2 = g.constant(k2);
  Tensor lhs = ops::conv3d(ops::add(va, vb), vk).value();
  Tensor rhs = ops::add(ops::conv3d(va, vk), ops::conv3d(vb, vk)).value();
  Tensor lhs2 = ops::conv3d(va, ops::add(vk, vk2)).value();
  Tensor rhs2 = ops::add(ops::conv3d(va, vk), ops::conv3d(va, vk2)).value();
  for (std::size_t i = 0; i < lhs.numel(); ++i) {
    CHECK(lhs[i] == doctest::Approx(rhs[i]).epsilon(1e-5));
    CHECK(lhs2[i] == doctest::Approx(rhs2[i]).epsilon(1e-5));
  }
}

TEST_CASE("conv3d against a direct loop") {
  const Tensor x = rand_tensor({2, 2, 3, 4, 5}, 7), k = rand_tensor({3, 2, 3, 3, 3}, 8), b = rand_tensor({3}, 9);
  Graph g;
  Tensor y = ops::conv3d(g.constant(x), g.constant(k), g.constant(b)).value();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t o = 0; o < 3; ++o)
      for (std::size_t t = 0; t < 3; ++t)
        for (std::size_t h = 0; h < 4; ++h)
          for (std::size_t w = 0; w < 5; ++w) {
            double acc = b[o];
            for (std::size_t c = 0; c < 2; ++c)
              for (int dt = -1; dt <= 1; ++dt)
                for (int dh = -1; dh <= 1; ++dh)
                  for (int dw = -1; dw <= 1; ++dw) {
                    const long tt = long(t) + dt, hh = long(h) + dh, ww = long(w) + dw;
                    if (tt < 0 || tt >= 3 || hh < 0 || hh >= 4 || ww < 0 || ww >= 5) continue;
                    acc += double(x[x.offset5(n, c, tt, hh, ww)]) * k[k.offset5(o, c, dt + 1, dh + 1, dw + 1)];
                  }
            CHECK(y[y.offset5(n, o, t, h, w)] == doctest::Approx(acc).epsilon(1e-5));
          }
}

TEST_CASE("shape errors name the primitive") {
  Graph g;
  Var a = g.constant(Tensor::zeros({2, 3}));
  Var b = g.constant(Tensor::zeros({3, 2}));
  try {
    ops::add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("add") != std::string::npos);
  }
}

TEST_CASE("backward basics") {
  {
    Graph g;
    Var x = g.leaf("x", Tensor({2, 3}, 0.7f));
    auto grads = g.backward(ops::sum(x));
    CHECK(grads.at("x") == Tensor::ones({2, 3}));
  }
  {
    Graph g;
    Var x = g.leaf("x", Tensor({1}, 3.0f));
    auto grads = g.backward(ops::mean(ops::mul(x, x)));
    CHECK(grads.at("x")[0] == doctest::Approx(6.0));
  }
  {
    Graph g;
    Var x = g.leaf("x", Tensor({2}, 1.0f));
    CHECK_THROWS_AS(g.backward(x), ContractError);
    Var s = ops::sum(x);
    g.backward(s);
    CHECK_THROWS_AS(g.backward(s), ContractError);
  }
}

TEST_CASE("clamp01 passes gradient only inside the box") {
  Graph g;
  Var x = g.leaf("x", Tensor({4}, std::vector<float>{-0.5f, 0.0f, 0.5f, 1.5f}));
  auto grads = g.backward(ops::sum(ops::clamp01(x)));
  CHECK(grads.at("x").vec() == std::vector<float>{0.0f, 1.0f, 1.0f, 0.0f});
}

TEST_CASE("grad_check: quadratic passes, empty is vacuous") {
  ParamStore p;
  p.add("w", rand_tensor({3, 4}, 11));
  LossBuilder quad = [](Graph& g, const ParamStore& ps) {
    Var w = g.leaf("w", ps.at("w"));
    return ops::sum(ops::mul(w, w));
  };
  CHECK(grad_check(quad, p).passed());
  CHECK(grad_check(quad, ParamStore{}).leaves.empty());
}

TEST_CASE("grad_check catches a corrupted backward rule") {
  ParamStore p;
  p.add("good", rand_tensor({5}, 12));
  p.add("bad", rand_tensor({5}, 13));
  // cube with a backward of 2x^2 instead of 3x^2
  auto broken_cube = [](Var x) {
    Tensor v = x.value();
    for (auto& e : v.data()) e = e * e * e;
    const Tensor* xv = &x.value();
    return x.graph()->record("broken-cube", v, {x},
                             [xv](const Tensor& g, std::vector<Tensor>& gin, const std::vector<bool>&) {
                               gin[0] = Tensor(xv->shape());
                               for (std::size_t i = 0; i < g.numel(); ++i) gin[0][i] = g[i] * 2.0f * (*xv)[i] * (*xv)[i];
                             });
  };
  LossBuilder build = [&](Graph& g, const ParamStore& ps) {
    Var a = g.leaf("good", ps.at("good"));
    Var b = g.leaf("bad", ps.at("bad"));
    return ops::add(ops::sum(ops::mul(a, a)), ops::sum(broken_cube(b)));
  };
  GradCheckReport r = grad_check(build, p);
  CHECK_FALSE(r.passed());
  CHECK(r.failures() == std::vector<std::string>{"bad"});
}

TEST_CASE("rng determinism and splitting") {
  SeededRng a(42), b(42);
  CHECK(sample_gaussian({64}, a) == sample_gaussian({64}, b));
  SeededRng parent(42);
  SeededRng c1 = parent.split(3);
  parent.next_u64();
  SeededRng c2 = parent.split(3);
  CHECK(c1.next_u64() == c2.next_u64());
  CHECK(SeededRng(1).split(0).next_u64() != SeededRng(1).split(1).next_u64());
}

TEST_CASE("rng moments and ranges") {
  SeededRng r(7);
  Tensor u = sample_uniform({1000000}, r);
  for (float v : u.data()) REQUIRE((v >= 0.0f && v < 1.0f));
  Tensor n = sample_gaussian({1000000}, r);
  double m = 0, m2 = 0;
  for (float v : n.data()) {
    m += v;
    m2 += double(v) * v;
  }
  m /= n.numel();
  const double var = m2 / n.numel() - m * m;
  CHECK(std::fabs(m) < 0.01);
  CHECK(std::fabs(var - 1.0) < 0.01);
}

TEST_CASE("checkpoint byte layout and round trip") {
  ParamStore p;
  p.add("a", Tensor({2}, std::vector<float>{1.0f, -2.0f}));
  p.add("bb", Tensor({1, 1}, 0.5f));
  auto bytes = encode_checkpoint(p);
  const std::vector<std::uint8_t> head{'F', 'M', 'V', 'P', 'C', 'K', 'P', 'T', 1, 0, 0, 0, 2, 0, 0, 0,
                                       1, 0, 'a', 1, 2, 0, 0, 0, 0x00, 0x00, 0x80, 0x3f};
  REQUIRE(bytes.size() == 8 + 4 + 4 + (2 + 1 + 1 + 4 + 8) + (2 + 2 + 1 + 8 + 4));
  CHECK(std::equal(head.begin(), head.end(), bytes.begin()));
  CHECK(decode_checkpoint(bytes) == p);

  auto bad = bytes;
  bad[0] = 'X';
  try {
    decode_checkpoint(bad);
    FAIL("expected FormatError");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("XMVPCKPT") != std::string::npos);
  }
  bytes.pop_back();
  CHECK_THROWS_AS(decode_checkpoint(bytes), FormatError);

  const auto path = std::filesystem::temp_directory_path() / "fmvp_test.ckpt";
  save_checkpoint(path, p);
  CHECK(load_checkpoint(path) == p);
  std::filesystem::remove(path);
}
