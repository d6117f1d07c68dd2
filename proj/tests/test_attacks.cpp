#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "fmvp/attacks.hpp"
#include "fmvp/classifier.hpp"
#include "fmvp/dataset.hpp"
#include "fmvp/errors.hpp"

using namespace fmvp;

namespace {

// logits = [w * x, 0] for a single-pixel video.
DiffModel toy_model(float w) {
  return [w](Graph& g, Var x) {
    Var flat = ops::reshape(x, {1, 1});
    Var W = g.constant(Tensor({2, 1}, std::vector<float>{w, 0.0f}));
    Var b = g.constant(Tensor::zeros({2}));
    return ops::linear(flat, W, b);
  };
}

Tensor pixel(float v) { return Tensor({1, 1, 1, 1, 1}, v); }

struct Trained {
  CorpusSplits splits;
  ParamStore clf;
};

const Trained& trained() {
  static const Trained t = [] {
    CorpusSpec cs;
    cs.per_class = 20;
    cs.seed = 3;
    Trained out{split_corpus(gen_corpus(cs)), {}};
    ClassifierTrainConfig cc;
    cc.seed = 3;
    cc.epochs = 20;
    out.clf = train_classifier(out.splits.train, out.splits.val, cc).params;
    return out;
  }();
  return t;
}

}  // namespace

TEST_CASE("pgd on a one-pixel linear model") {
  PgdConfig one{8.0f / 255.0f, 2.0f / 255.0f, 1};
  AttackResult r = pgd_attack(pixel(0.5f), 0, toy_model(2.0f), one);
  CHECK(r.x_adv[0] == doctest::Approx(0.5f - 2.0f / 255.0f).epsilon(1e-7));
  AttackResult neg = pgd_attack(pixel(0.5f), 0, toy_model(-2.0f), one);
  CHECK(neg.x_adv[0] == doctest::Approx(0.5f + 2.0f / 255.0f).epsilon(1e-7));
  AttackResult edge = pgd_attack(pixel(0.001f), 0, toy_model(2.0f), one);
  CHECK(edge.x_adv[0] == 0.0f);
  AttackResult many = pgd_attack(pixel(0.5f), 0, toy_model(2.0f), PgdConfig{});
  CHECK(many.x_adv[0] == doctest::Approx(0.5f - 8.0f / 255.0f).epsilon(1e-7));
  CHECK(many.linf <= 8.0 / 255.0 + 1e-6);
}

TEST_CASE("pgd with a zero budget returns the input") {
  const auto& t = trained();
  const Tensor x = t.splits.test.video(0);
  CHECK(pgd_attack(x, t.splits.test.labels[0], classifier_model(t.clf), PgdConfig{0.0f, 2.0f / 255.0f, 10}).x_adv == x);
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS((PgdConfig{-1.0f, 0.1f, 10}.validate()), ContractError);
  CHECK_THROWS_AS((PgdConfig{0.1f, 0.1f, 0}.validate()), ContractError);
  CwConfig cw;
  cw.iters = 0;
  CHECK_THROWS_AS(cw.validate(), ContractError);
  AdaptiveConfig ad;
  ad.eot_samples = 0;
  CHECK_THROWS_AS(ad.validate(), ContractError);
}

TEST_CASE("cw: already misclassified and success semantics") {
  AttackResult r = cw_attack(pixel(0.5f), 1, toy_model(2.0f), CwConfig{});
  CHECK(r.success);
  CHECK(r.x_adv == pixel(0.5f));
  CHECK(r.l2 == 0.0);

  AttackResult s = cw_attack(pixel(0.05f), 0, toy_model(2.0f), CwConfig{});
  if (s.success) {
    Graph g;
    Var z = toy_model(2.0f)(g, g.constant(s.x_adv));
    CHECK(attack_succeeded(z.value().data(), 0));
  }
  const std::vector<float> tie{1.0f, 1.0f};
  CHECK_FALSE(attack_succeeded(tie, 0));
  CHECK(attack_succeeded(tie, 1));
}

TEST_CASE("attacks on a trained classifier respect budgets and semantics") {
  const auto& t = trained();
  const DiffModel m = classifier_model(t.clf);
  std::size_t cw_wins = 0, cw_smaller = 0;
  for (std::size_t i = 0; i < 8; ++i) {
    const Tensor x = t.splits.test.video(i);
    const int y = t.splits.test.labels[i];
    AttackResult p = pgd_attack(x, y, m, PgdConfig{});
    CHECK(p.linf <= 8.0 / 255.0 + 1e-6);
    for (float v : p.x_adv.data()) REQUIRE((v >= 0.0f && v <= 1.0f));
    CHECK(pgd_attack(x, y, m, PgdConfig{}).x_adv == p.x_adv);

    AttackResult c0 = cw_attack(x, y, m, CwConfig{});
    for (float v : c0.x_adv.data()) REQUIRE((v >= 0.0f && v <= 1.0f));
    if (c0.success) CHECK(classify(t.clf, c0.x_adv)[0] != y);

    // The default constant schedule rarely flips a confident classifier; start higher.
    CwConfig strong;
    strong.c_init = 10.0f;
    AttackResult c = cw_attack(x, y, m, strong);
    for (float v : c.x_adv.data()) REQUIRE((v >= 0.0f && v <= 1.0f));
    if (c.success) {
      ++cw_wins;
      CHECK(classify(t.clf, c.x_adv)[0] != y);
      // Compare with a PGD success at a larger budget on the same sample.
      AttackResult big = pgd_attack(x, y, m, PgdConfig{32.0f / 255.0f, 4.0f / 255.0f, 20});
      if (!big.success || c.l2 <= big.l2) ++cw_smaller;
    }
  }
  CHECK(cw_wins > 0);
  CHECK(cw_smaller * 10 >= cw_wins * 8);
}

TEST_CASE("adaptive attack through the identity equals pgd bit for bit") {
  const auto& t = trained();
  const DiffModel m = classifier_model(t.clf);
  IdentityPurifier id;
  AdaptiveConfig ad;
  ad.alpha = 2.0f / 255.0f;
  ad.iters = 10;
  for (std::size_t i = 0; i < 3; ++i) {
    const Tensor x = t.splits.test.video(i);
    const int y = t.splits.test.labels[i];
    SeededRng r(7);
    CHECK(eot_adaptive_attack(x, y, m, id, ad, r).x_adv == pgd_attack(x, y, m, PgdConfig{}).x_adv);
  }
}

TEST_CASE("attack sidecar round trip") {
  const auto path = std::filesystem::temp_directory_path() / "fmvp_attacks.json";
  std::vector<AttackRecord> recs{{"pgd", true, 0.03, 1.5, 10}, {"cw", false, 0.0, 0.0, 450}};
  write_attack_sidecar(path, recs);
  auto back = read_attack_sidecar(path);
  REQUIRE(back.size() == 2);
  CHECK(back[0].attack == "pgd");
  CHECK(back[0].l2 == 1.5);
  CHECK(back[1].iters_used == 450);
  std::filesystem::remove(path);
}

TEST_CASE("classifier training contracts") {
  const auto& t = trained();
  CHECK(accuracy(t.clf, t.splits.val) >= 0.95);
  Dataset one = t.splits.train;
  std::fill(one.labels.begin(), one.labels.end(), 0);
  one.num_classes = 1;
  CHECK_THROWS_AS(train_classifier(one, one, ClassifierTrainConfig{}), ContractError);

  CorpusSpec cs;
  cs.per_class = 5;
  cs.seed = 1;
  auto s = split_corpus(gen_corpus(cs));
  ClassifierTrainConfig cc;
  cc.seed = 5;
  cc.epochs = 1;
  CHECK(train_classifier(s.train, s.val, cc).params == train_classifier(s.train, s.val, cc).params);
  CHECK(argmax_rows(Tensor({2, 3}, std::vector<float>{1, 3, 3, 2, 2, 1})) == std::vector<int>{1, 0});
}
