#pragma once

#include <charconv>
#include <filesystem>
#include <fstream>
#include <string>

#include "fmvp/errors.hpp"

namespace fmvp {

/// Shortest round-trip decimal rendering, independent of the C locale.
inline std::string fmt_num(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline std::string fmt_num(float v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

/// Binary-mode output stream ('\n' newlines on every platform).
inline std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw FormatError("cannot open '" + path.string() + "' for writing");
  return os;
}

}  // namespace fmvp
