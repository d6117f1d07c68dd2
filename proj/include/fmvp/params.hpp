#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fmvp/autodiff.hpp"
#include "fmvp/tensor.hpp"

namespace fmvp {

/// Ordered, named collection of tensors (ModelParams). Insertion order is
/// the serialization order.
class ParamStore {
 public:
  void add(std::string name, Tensor value);
  bool contains(const std::string& name) const;
  const Tensor& at(const std::string& name) const;
  Tensor& at(const std::string& name);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t parameter_count() const;

  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }

  /// Register every entry as a leaf of `g` and return handles in order.
  std::vector<Var> as_leaves(Graph& g, bool requires_grad) const;

  friend bool operator==(const ParamStore&, const ParamStore&) = default;

 private:
  std::vector<std::pair<std::string, Tensor>> entries_;
};

/// Checkpoint format: "FMVPCKPT", u32 version, u32 entry count, then per
/// entry u16 name length, UTF-8 name, u8 rank, u32 extents, f32 payload.
/// All integers and floats little-endian.
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const ParamStore& params);
ParamStore decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params);
ParamStore load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace fmvp
