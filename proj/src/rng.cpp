#include "fmvp/rng.hpp"

#include <cmath>
#include <numbers>

namespace fmvp {

namespace {

constexpr std::uint64_t mix64(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

SeededRng::SeededRng(std::uint64_t seed) : key_(mix64(seed + 0x9e3779b97f4a7c15ULL)) {}

SeededRng::SeededRng(std::uint64_t key, bool) : key_(key) {}

std::uint64_t SeededRng::next_u64() {
  const std::uint64_t c = counter_++;
  return mix64(key_ ^ mix64(c * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL));
}

float SeededRng::uniform() {
  return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f;
}

double SeededRng::uniform_open_low() {
  return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

float SeededRng::gaussian() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  const double u1 = uniform_open_low();
  const double u2 = uniform_open_low();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = static_cast<float>(r * std::sin(theta));
  has_spare_ = true;
  return static_cast<float>(r * std::cos(theta));
}

SeededRng SeededRng::split(std::uint64_t stream_id) const {
  return SeededRng(mix64(key_ ^ mix64(~stream_id * 0xd1b54a32d192ed03ULL)), true);
}

Tensor sample_uniform(const Shape& shape, SeededRng& rng) {
  Tensor out(shape);
  for (auto& v : out.data()) v = rng.uniform();
  return out;
}

Tensor sample_gaussian(const Shape& shape, SeededRng& rng) {
  Tensor out(shape);
  for (auto& v : out.data()) v = rng.gaussian();
  return out;
}

}  // namespace fmvp
