#pragma once

#include <cstdint>

#include "fmvp/tensor.hpp"

namespace fmvp {

/// Counter-based random stream. Output i is a pure function of (key, i), so a
/// stream can be split into independent child streams by index without any
/// dependence on how much of the parent has been consumed.
class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1) with 24 bits of resolution.
  float uniform();
  /// Uniform in (0, 1].
  double uniform_open_low();
  /// Standard normal via Box-Muller; the sine branch is cached.
  float gaussian();

  /// Child stream determined only by this stream's key and `stream_id`.
  SeededRng split(std::uint64_t stream_id) const;

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

 private:
  SeededRng(std::uint64_t key, bool raw);

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  float spare_ = 0.0f;
};

Tensor sample_uniform(const Shape& shape, SeededRng& rng);
Tensor sample_gaussian(const Shape& shape, SeededRng& rng);

}  // namespace fmvp
