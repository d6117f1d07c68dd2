#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "fmvp/tensor.hpp"

namespace fmvp {

/// Labelled video set: videos (N, C, T, H, W) with one label per record.
struct Dataset {
  Tensor videos;
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
  /// Record i as a (1, C, T, H, W) tensor.
  Tensor video(std::size_t i) const { return videos.slice0(i, i + 1); }
  Dataset slice(std::size_t begin, std::size_t end) const;
  /// Records at the given indices, in that order.
  Dataset select(std::span<const std::size_t> indices) const;
  /// Throws ContractError on inconsistent sizes or out-of-range labels.
  void validate() const;
};

/// Dataset file: "FMVPDATA", u32 version, u32 counts N C T H W num_classes,
/// then N records of {u16 label, C*T*H*W f32}. Little-endian throughout.
inline constexpr std::uint32_t kDatasetVersion = 1;

std::vector<std::uint8_t> encode_dataset(const Dataset& d);
Dataset decode_dataset(std::span<const std::uint8_t> bytes);
void save_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset load_dataset(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Synthetic moving-square corpus

enum class Motion { right = 0, left = 1, down = 2, up = 3 };

struct CorpusSpec {
  std::size_t per_class = 100;
  std::size_t frames = 8;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t square = 8;
  std::size_t speed = 2;  // pixels per frame
  float foreground = 0.9f;
  float background = 0.1f;
  float texture = 0.05f;  // half-width of the additive uniform noise
  std::uint64_t seed = 0;
};

struct CorpusSplits {
  Dataset train, val, test;
};

/// Per-class split sizes for n records: floor(0.6 n), floor(0.2 n), rest.
struct SplitSizes {
  std::size_t train, val, test;
};
SplitSizes split_sizes(std::size_t per_class);

/// All records, ordered [train | val | test] with classes interleaved inside
/// each split (record j of a split has label j mod 4). Throws ContractError
/// when the square cannot travel T-1 steps inside the canvas.
Dataset gen_corpus(const CorpusSpec& spec);

/// Recover the splits from a class-balanced file written by gen_corpus.
CorpusSplits split_corpus(const Dataset& all);

}  // namespace fmvp
