#pragma once

#include <bit>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "m2a/backbone.hpp"

namespace m2a {

inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32(std::istream& is, const char* what) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) fail(std::string("truncated file reading ") + what);
  return std::uint32_t(b[0]) | std::uint32_t(b[1]) << 8 | std::uint32_t(b[2]) << 16 |
         std::uint32_t(b[3]) << 24;
}

inline void write_f32(std::ostream& os, const float* v, std::size_t n) {
  // little-endian host assumed; asserted at build time for this artifact
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  os.write(reinterpret_cast<const char*>(v), static_cast<std::streamsize>(n * 4));
}

inline void read_f32(std::istream& is, float* v, std::size_t n, const char* what) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  if (!is.read(reinterpret_cast<char*>(v), static_cast<std::streamsize>(n * 4)))
    fail(std::string("truncated file reading ") + what);
}

}  // namespace detail

/// Writes every named parameter as 32-bit floats. Layout: magic "M2AC",
/// version u32, count u32, then per parameter: name length + bytes, rank,
/// extents, raw values.
template <class S>
void save_checkpoint(ModelT<S>& model, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) fail("cannot open checkpoint for writing: " + path);
  os.write("M2AC", 4);
  detail::write_u32(os, kCheckpointVersion);
  auto params = model.named_parameters();
  detail::write_u32(os, static_cast<std::uint32_t>(params.size()));
  std::vector<float> buf;
  for (auto& [name, t] : params) {
    detail::write_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::write_u32(os, static_cast<std::uint32_t>(t->rank()));
    for (int a = 0; a < t->rank(); ++a)
      detail::write_u32(os, static_cast<std::uint32_t>(t->extent(a)));
    buf.resize(static_cast<std::size_t>(t->numel()));
    for (std::int64_t i = 0; i < t->numel(); ++i) buf[static_cast<std::size_t>(i)] =
        static_cast<float>(t->data()[i]);
    detail::write_f32(os, buf.data(), buf.size());
  }
  if (!os) fail("write failure on checkpoint: " + path);
}

/// Loads a checkpoint saved by save_checkpoint into a model of identical
/// architecture. Every mismatch is reported with the offending parameter.
template <class S>
void load_checkpoint(ModelT<S>& model, const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) fail("cannot open checkpoint: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "M2AC")
    fail("bad magic in checkpoint: " + path);
  const auto version = detail::read_u32(is, "version");
  if (version != kCheckpointVersion)
    fail("checkpoint version " + std::to_string(version) + " unsupported (expected " +
         std::to_string(kCheckpointVersion) + ")");
  const auto count = detail::read_u32(is, "parameter count");

  struct Entry {
    Shape shape;
    std::vector<float> values;
  };
  std::map<std::string, Entry> entries;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto len = detail::read_u32(is, "name length");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) fail("truncated file reading parameter name");
    Entry e;
    const auto rank = detail::read_u32(is, name.c_str());
    std::int64_t n = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
      e.shape.push_back(static_cast<int>(detail::read_u32(is, name.c_str())));
      n *= e.shape.back();
    }
    e.values.resize(static_cast<std::size_t>(n));
    detail::read_f32(is, e.values.data(), e.values.size(), name.c_str());
    entries.emplace(std::move(name), std::move(e));
  }

  auto params = model.named_parameters();
  for (auto& [name, t] : params) {
    auto it = entries.find(name);
    if (it == entries.end()) fail("checkpoint is missing parameter " + name);
    if (it->second.shape != t->shape())
      fail("checkpoint shape mismatch for " + name + ": file " + shape_str(it->second.shape) +
           " vs model " + shape_str(t->shape()));
    for (std::int64_t i = 0; i < t->numel(); ++i)
      t->data()[i] = static_cast<S>(it->second.values[static_cast<std::size_t>(i)]);
    entries.erase(it);
  }
  if (!entries.empty()) fail("checkpoint has unexpected parameter " + entries.begin()->first);
}

}  // namespace m2a
