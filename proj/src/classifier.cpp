#include "fmvp/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "fmvp/errors.hpp"
#include "fmvp/optim.hpp"
#include "fmvp/rng.hpp"

namespace fmvp {

namespace {

constexpr std::size_t kC1 = 8, kC2 = 16, kK = 3;

Tensor uniform_tensor(Shape shape, float bound, SeededRng& rng) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = (2.0f * rng.uniform() - 1.0f) * bound;
  return t;
}

}  // namespace

ParamStore init_classifier_params(std::size_t channels, std::size_t num_classes, std::uint64_t seed) {
  if (channels < 1) throw ContractError("classifier: channels must be >= 1");
  if (num_classes < 2) throw ContractError("classifier: need at least 2 classes");
  SeededRng rng = SeededRng(seed).split(0x636c66);
  const auto fan = [](std::size_t n) { return std::sqrt(6.0f / static_cast<float>(n)); };
  ParamStore p;
  p.add("clf.conv1.w", uniform_tensor({kC1, channels, kK, kK, kK}, fan(channels * kK * kK * kK), rng));
  p.add("clf.conv1.b", Tensor::zeros({kC1}));
  p.add("clf.conv2.w", uniform_tensor({kC2, kC1, kK, kK, kK}, fan(kC1 * kK * kK * kK), rng));
  p.add("clf.conv2.b", Tensor::zeros({kC2}));
  p.add("clf.fc.w", uniform_tensor({num_classes, kC2}, 1.0f / std::sqrt(static_cast<float>(kC2)), rng));
  p.add("clf.fc.b", Tensor::zeros({num_classes}));
  return p;
}

std::size_t classifier_classes(const ParamStore& params) { return params.at("clf.fc.w").dim(0); }

ClassifierVars bind_classifier_params(Graph& g, const ParamStore& params, bool trainable) {
  auto bind = [&](const char* name) {
    return trainable ? g.leaf(name, params.at(name), true) : g.constant(params.at(name));
  };
  return {bind("clf.conv1.w"), bind("clf.conv1.b"), bind("clf.conv2.w"),
          bind("clf.conv2.b"), bind("clf.fc.w"),    bind("clf.fc.b")};
}

Var classifier_logits(const ClassifierVars& net, Var x) {
  const auto& s = x.shape();
  if (s.size() != 5) throw ShapeError("classifier: expected (B,C,T,H,W), got " + shape_str(s));
  if (s[2] % 4 || s[3] % 4 || s[4] % 4) {
    throw ShapeError("classifier: T, H, W must be multiples of 4, got " + shape_str(s));
  }
  Var h = ops::avg_pool3d(ops::silu(ops::conv3d(x, net.conv1_w, net.conv1_b)));
  h = ops::avg_pool3d(ops::silu(ops::conv3d(h, net.conv2_w, net.conv2_b)));
  return ops::linear(ops::global_avg_pool(h), net.fc_w, net.fc_b);
}

Tensor classifier_logits(const ParamStore& params, const Tensor& x) {
  Graph g;
  auto net = bind_classifier_params(g, params, false);
  return classifier_logits(net, g.constant(x)).value();
}

std::vector<int> argmax_rows(const Tensor& logits) {
  if (logits.rank() != 2) throw ShapeError("argmax_rows: expected (B,K), got " + shape_str(logits.shape()));
  const std::size_t B = logits.dim(0), K = logits.dim(1);
  std::vector<int> out(B);
  for (std::size_t b = 0; b < B; ++b) {
    const float* row = logits.ptr() + b * K;
    out[b] = static_cast<int>(std::max_element(row, row + K) - row);  // first maximum
  }
  return out;
}

std::vector<int> classify(const ParamStore& params, const Tensor& x) {
  return argmax_rows(classifier_logits(params, x));
}

double accuracy(const ParamStore& params, const Dataset& d) {
  constexpr std::size_t chunk = 32;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < d.size(); i += chunk) {
    const std::size_t end = std::min(d.size(), i + chunk);
    const auto pred = classify(params, d.videos.slice0(i, end));
    for (std::size_t j = 0; j < pred.size(); ++j) correct += pred[j] == d.labels[i + j];
  }
  return static_cast<double>(correct) / static_cast<double>(d.size());
}

ClassifierTrainResult train_classifier(const Dataset& train, const Dataset& val, const ClassifierTrainConfig& cfg) {
  train.validate();
  if (train.num_classes < 2) throw ContractError("train_classifier: dataset must have at least 2 classes");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ContractError("train_classifier: epochs and batch size must be >= 1");

  ClassifierTrainResult res;
  res.params = init_classifier_params(train.videos.dim(1), train.num_classes, cfg.seed);
  AdamWConfig oc;
  oc.lr = cfg.lr;
  oc.weight_decay = cfg.weight_decay;
  AdamW opt(oc);
  SeededRng rng = SeededRng(cfg.seed).split(0x7368756666);

  std::vector<std::size_t> order(train.size());
  for (std::size_t e = 0; e < cfg.epochs && !res.diverged; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[rng.next_u64() % i]);
    }
    double total = 0.0;
    std::size_t batches = 0;
    for (std::size_t i = 0; i < order.size(); i += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), i + cfg.batch_size);
      const Dataset batch = train.select(std::span(order).subspan(i, end - i));
      Graph g;
      auto net = bind_classifier_params(g, res.params, true);
      Var loss = ops::softmax_cross_entropy(classifier_logits(net, g.constant(batch.videos)), batch.labels);
      const double l = loss.scalar();
      if (!std::isfinite(l)) {
        res.diverged = true;
        res.diagnostic = "non-finite loss at epoch " + std::to_string(e + 1) + ", batch " + std::to_string(batches + 1);
        break;
      }
      opt.step(res.params, g.backward(loss));
      total += l;
      ++batches;
    }
    if (batches > 0) res.epoch_loss.push_back(total / static_cast<double>(batches));
  }
  res.train_acc = accuracy(res.params, train);
  res.val_acc = accuracy(res.params, val);
  return res;
}

}  // namespace fmvp
