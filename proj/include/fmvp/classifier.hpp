#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fmvp/autodiff.hpp"
#include "fmvp/dataset.hpp"
#include "fmvp/params.hpp"

namespace fmvp {

/// Victim video classifier:
///   conv C->8 (3x3x3), SiLU, avgpool 2x2x2
///   conv 8->16 (3x3x3), SiLU, avgpool 2x2x2
///   global average pool, linear 16->K
/// Parameters are named "clf.conv1.w", ..., "clf.fc.b".
ParamStore init_classifier_params(std::size_t channels, std::size_t num_classes, std::uint64_t seed);
std::size_t classifier_classes(const ParamStore& params);

struct ClassifierVars {
  Var conv1_w, conv1_b, conv2_w, conv2_b, fc_w, fc_b;
};
ClassifierVars bind_classifier_params(Graph& g, const ParamStore& params, bool trainable);

/// Logits (B, K) for x (B, C, T, H, W); T, H, W must be multiples of 4.
Var classifier_logits(const ClassifierVars& net, Var x);
Tensor classifier_logits(const ParamStore& params, const Tensor& x);

/// Row-wise argmax; ties go to the lowest index.
std::vector<int> argmax_rows(const Tensor& logits);
std::vector<int> classify(const ParamStore& params, const Tensor& x);

struct ClassifierTrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 4;
  float lr = 1e-2f;
  float weight_decay = 0.01f;
  std::uint64_t seed = 0;
};

struct ClassifierTrainResult {
  ParamStore params;
  std::vector<double> epoch_loss;
  double train_acc = 0.0;
  double val_acc = 0.0;
  bool diverged = false;
  std::string diagnostic;
};

/// Mini-batch cross-entropy training with AdamW; the record order is
/// reshuffled every epoch from the seed. A non-finite loss stops training
/// and returns the last finite parameters with `diverged` set.
ClassifierTrainResult train_classifier(const Dataset& train, const Dataset& val, const ClassifierTrainConfig& cfg);

double accuracy(const ParamStore& params, const Dataset& d);

}  // namespace fmvp
