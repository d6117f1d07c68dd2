#pragma once

#include <map>
#include <string>

#include "fmvp/autodiff.hpp"
#include "fmvp/params.hpp"

namespace fmvp {

struct AdamWConfig {
  float lr = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float eps = 1e-8f;
  float weight_decay = 0.01f;
};

/// Adam with decoupled weight decay. Moment buffers are keyed by parameter
/// name and created lazily on first update.
class AdamW {
 public:
  explicit AdamW(AdamWConfig cfg = {}) : cfg_(cfg) {}

  /// Update every parameter that has an entry in `grads`.
  void step(ParamStore& params, const GradientMap& grads);

  const AdamWConfig& config() const { return cfg_; }
  std::size_t steps_taken() const { return t_; }

 private:
  AdamWConfig cfg_;
  std::size_t t_ = 0;
  std::map<std::string, Tensor> m_, v_;
};

}  // namespace fmvp
