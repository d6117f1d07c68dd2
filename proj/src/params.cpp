#include "fmvp/params.hpp"

#include <fstream>
#include <iterator>

#include "fmvp/binary_io.hpp"
#include "fmvp/errors.hpp"

namespace fmvp {

void ParamStore::add(std::string name, Tensor value) {
  if (contains(name)) throw ContractError("params: duplicate entry '" + name + "'");
  entries_.emplace_back(std::move(name), std::move(value));
}

bool ParamStore::contains(const std::string& name) const {
  for (const auto& [n, _] : entries_)
    if (n == name) return true;
  return false;
}

const Tensor& ParamStore::at(const std::string& name) const {
  for (const auto& [n, t] : entries_)
    if (n == name) return t;
  throw ContractError("params: no entry '" + name + "'");
}

Tensor& ParamStore::at(const std::string& name) {
  for (auto& [n, t] : entries_)
    if (n == name) return t;
  throw ContractError("params: no entry '" + name + "'");
}

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& [_, t] : entries_) n += t.numel();
  return n;
}

std::vector<Var> ParamStore::as_leaves(Graph& g, bool requires_grad) const {
  std::vector<Var> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(g.leaf(name, t, requires_grad));
  return out;
}

namespace {
constexpr std::string_view kCkptMagic = "FMVPCKPT";
}

std::vector<std::uint8_t> encode_checkpoint(const ParamStore& params) {
  detail::ByteWriter w;
  w.bytes(kCkptMagic);
  w.u32(kCheckpointVersion);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, t] : params) {
    if (name.size() > 0xffff) throw ContractError("checkpoint: name too long");
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name);
    w.u8(static_cast<std::uint8_t>(t.rank()));
    for (auto e : t.shape()) w.u32(static_cast<std::uint32_t>(e));
    for (float v : t.data()) w.f32(v);
  }
  return w.take();
}

ParamStore decode_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  if (bytes.size() < kCkptMagic.size()) {
    throw FormatError("checkpoint: bad magic " +
                      detail::show_magic(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
  }
  const auto magic = r.bytes(kCkptMagic.size());
  if (magic != kCkptMagic) throw FormatError("checkpoint: bad magic " + detail::show_magic(magic));
  const auto version = r.u32();
  if (version != kCheckpointVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto count = r.u32();
  ParamStore out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = r.u16();
    auto name = r.bytes(len);
    const auto rank = r.u8();
    if (rank < 1 || rank > 5) throw FormatError("checkpoint: entry '" + name + "' has rank " + std::to_string(rank));
    Shape shape;
    for (int k = 0; k < rank; ++k) {
      shape.push_back(r.u32());
      if (shape.back() == 0) throw FormatError("checkpoint: entry '" + name + "' has a zero extent");
    }
    const auto n = shape_numel(shape);
    if (r.remaining() / 4 < n) throw FormatError("checkpoint: entry '" + name + "' payload truncated");
    std::vector<float> data(n);
    for (auto& v : data) v = r.f32();
    out.add(std::move(name), Tensor(std::move(shape), std::move(data)));
  }
  if (!r.at_end()) throw FormatError("checkpoint: trailing bytes after last entry");
  return out;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path.string() + "' for reading");
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void write_file_bytes(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("write failed for '" + path.string() + "'");
}

void save_checkpoint(const std::filesystem::path& path, const ParamStore& params) {
  write_file_bytes(path, encode_checkpoint(params));
}

ParamStore load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(read_file_bytes(path));
}

}  // namespace fmvp
