#include "fmvp/dataset.hpp"

#include <algorithm>
#include <string>

#include "fmvp/binary_io.hpp"
#include "fmvp/errors.hpp"
#include "fmvp/params.hpp"
#include "fmvp/rng.hpp"

namespace fmvp {

namespace {
constexpr std::string_view kMagic = "FMVPDATA";
constexpr std::size_t kNumMotions = 4;
}  // namespace

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) throw ContractError("Dataset::slice: bad range");
  return Dataset{videos.slice0(begin, end), {labels.begin() + static_cast<std::ptrdiff_t>(begin),
                                             labels.begin() + static_cast<std::ptrdiff_t>(end)},
                 num_classes};
}

Dataset Dataset::select(std::span<const std::size_t> indices) const {
  if (indices.empty()) throw ContractError("Dataset::select: empty selection");
  std::vector<Tensor> parts;
  std::vector<int> ls;
  parts.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size()) throw ContractError("Dataset::select: index out of range");
    parts.push_back(video(i));
    ls.push_back(labels[i]);
  }
  return Dataset{concat0(parts), std::move(ls), num_classes};
}

void Dataset::validate() const {
  if (videos.rank() != 5) throw ShapeError("dataset: videos must be (N,C,T,H,W), got " + shape_str(videos.shape()));
  if (videos.dim(0) != labels.size()) throw ContractError("dataset: label count does not match record count");
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
      throw ContractError("dataset: label " + std::to_string(l) + " outside [0," + std::to_string(num_classes) + ")");
    }
  }
}

std::vector<std::uint8_t> encode_dataset(const Dataset& d) {
  d.validate();
  if (d.num_classes > 0xffff) throw ContractError("dataset: too many classes for u16 labels");
  detail::ByteWriter w;
  w.bytes(kMagic);
  w.u32(kDatasetVersion);
  for (std::size_t k = 0; k < 5; ++k) w.u32(static_cast<std::uint32_t>(d.videos.dim(k)));
  w.u32(static_cast<std::uint32_t>(d.num_classes));
  const std::size_t per = d.videos.numel() / d.size();
  for (std::size_t i = 0; i < d.size(); ++i) {
    w.u16(static_cast<std::uint16_t>(d.labels[i]));
    const float* p = d.videos.ptr() + i * per;
    for (std::size_t j = 0; j < per; ++j) w.f32(p[j]);
  }
  return w.take();
}

Dataset decode_dataset(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kMagic.size()) {
    throw FormatError("dataset: bad magic " +
                      detail::show_magic(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size())));
  }
  detail::ByteReader r(bytes, "dataset");
  const std::string magic = r.bytes(kMagic.size());
  if (magic != kMagic) throw FormatError("dataset: bad magic " + detail::show_magic(magic));
  const std::uint32_t version = r.u32();
  if (version != kDatasetVersion) throw FormatError("dataset: unsupported version " + std::to_string(version));
  Shape shape(5);
  for (auto& s : shape) s = r.u32();
  Dataset d;
  d.num_classes = r.u32();
  const std::size_t n = shape[0];
  if (n == 0) throw FormatError("dataset: zero records");
  for (std::size_t k = 1; k < 5; ++k) {
    if (shape[k] == 0) throw FormatError("dataset: zero extent in record shape");
  }
  const std::size_t per = shape_numel(shape) / n;
  if (r.remaining() != n * (2 + 4 * per)) throw FormatError("dataset: payload size does not match header");
  std::vector<float> data(n * per);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    d.labels[i] = r.u16();
    for (std::size_t j = 0; j < per; ++j) data[i * per + j] = r.f32();
  }
  d.videos = Tensor(shape, std::move(data));
  try {
    d.validate();
  } catch (const ContractError& e) {
    throw FormatError(e.what());
  }
  return d;
}

void save_dataset(const std::filesystem::path& path, const Dataset& d) { write_file_bytes(path, encode_dataset(d)); }

Dataset load_dataset(const std::filesystem::path& path) { return decode_dataset(read_file_bytes(path)); }

SplitSizes split_sizes(std::size_t per_class) {
  const std::size_t train = per_class * 6 / 10;
  const std::size_t val = per_class * 2 / 10;
  return {train, val, per_class - train - val};
}

namespace {

// One record. rng is the record's own stream.
void render(const CorpusSpec& s, Motion motion, SeededRng& rng, float* out) {
  const std::size_t travel = s.speed * (s.frames - 1);
  const bool horizontal = motion == Motion::right || motion == Motion::left;
  const std::size_t along = horizontal ? s.width : s.height;
  const std::size_t across = horizontal ? s.height : s.width;
  const std::size_t a0 = static_cast<std::size_t>(rng.uniform() * static_cast<float>(along - s.square - travel + 1));
  const std::size_t c0 = static_cast<std::size_t>(rng.uniform() * static_cast<float>(across - s.square + 1));
  const bool forward = motion == Motion::right || motion == Motion::down;

  for (std::size_t t = 0; t < s.frames; ++t) {
    const std::size_t a = forward ? a0 + s.speed * t : a0 + travel - s.speed * t;
    const std::size_t y0 = horizontal ? c0 : a;
    const std::size_t x0 = horizontal ? a : c0;
    for (std::size_t y = 0; y < s.height; ++y) {
      for (std::size_t x = 0; x < s.width; ++x) {
        const bool inside = y >= y0 && y < y0 + s.square && x >= x0 && x < x0 + s.square;
        const float base = inside ? s.foreground : s.background;
        const float noise = (2.0f * rng.uniform() - 1.0f) * s.texture;
        out[(t * s.height + y) * s.width + x] = std::clamp(base + noise, 0.0f, 1.0f);
      }
    }
  }
}

}  // namespace

Dataset gen_corpus(const CorpusSpec& s) {
  if (s.per_class < 1) throw ContractError("gen_corpus: need at least one sample per class");
  if (s.frames < 1 || s.square < 1) throw ContractError("gen_corpus: frames and square size must be >= 1");
  const std::size_t need = s.square + s.speed * (s.frames - 1);
  if (s.height < need || s.width < need) {
    throw ContractError("gen_corpus: canvas " + std::to_string(s.height) + "x" + std::to_string(s.width) +
                        " too small for a " + std::to_string(s.square) + " px square moving " +
                        std::to_string(s.speed) + " px over " + std::to_string(s.frames) + " frames (need " +
                        std::to_string(need) + ")");
  }
  const std::size_t n = s.per_class * kNumMotions;
  const std::size_t per = s.frames * s.height * s.width;
  Dataset d;
  d.num_classes = kNumMotions;
  d.videos = Tensor({n, 1, s.frames, s.height, s.width});
  d.labels.resize(n);

  // Splits take consecutive runs of i, so record (k, i) sits at slot 4i + k.
  const SeededRng root(s.seed);
  for (std::size_t k = 0; k < kNumMotions; ++k) {
    for (std::size_t i = 0; i < s.per_class; ++i) {
      const std::size_t slot = i * kNumMotions + k;
      SeededRng rng = root.split(k * s.per_class + i);
      render(s, static_cast<Motion>(k), rng, d.videos.ptr() + slot * per);
      d.labels[slot] = static_cast<int>(k);
    }
  }
  return d;
}

CorpusSplits split_corpus(const Dataset& all) {
  all.validate();
  if (all.num_classes == 0 || all.size() % all.num_classes != 0) {
    throw ContractError("split_corpus: dataset is not class-balanced");
  }
  const SplitSizes sz = split_sizes(all.size() / all.num_classes);
  if (sz.train == 0 || sz.val == 0 || sz.test == 0) {
    throw ContractError("split_corpus: too few records per class for a 60/20/20 split");
  }
  const std::size_t k = all.num_classes;
  const std::size_t a = sz.train * k, b = a + sz.val * k;
  return {all.slice(0, a), all.slice(a, b), all.slice(b, all.size())};
}

}  // namespace fmvp
