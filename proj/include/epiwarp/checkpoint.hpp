#pragma once

// Parameter checkpoints: flat ordered list of (name, shape, values) in a
// little-endian binary container with magic "EPW1".
//
// layout:
//   bytes 0..3   magic "EPW1"
//   u8           scalar width in bytes (4 or 8)
//   u32          parameter count
//   per parameter:
//     u32 name length, name bytes
//     u32 rank, u32 extents...
//     values (little endian, scalar width each)

#include <cstdint>
#include <cstring>
#include <fstream>

#include "epiwarp/nn.hpp"

namespace epiwarp {

namespace detail {

template <class V>
void write_pod(std::ofstream& f, V v) {
  f.write(reinterpret_cast<const char*>(&v), sizeof(V));
}
template <class V>
V read_pod(std::ifstream& f) {
  V v{};
  f.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!f) throw DataError("checkpoint: truncated file");
  return v;
}

}  // namespace detail

template <class T>
void save_checkpoint(const std::string& path, const ParamStore<T>& store) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open '" + path + "' for writing");
  f.write("EPW1", 4);
  detail::write_pod<std::uint8_t>(f, std::uint8_t(sizeof(T)));
  detail::write_pod<std::uint32_t>(f, std::uint32_t(store.params.size()));
  for (const auto& [name, p] : store.params) {
    detail::write_pod<std::uint32_t>(f, std::uint32_t(name.size()));
    f.write(name.data(), std::streamsize(name.size()));
    detail::write_pod<std::uint32_t>(f, std::uint32_t(p.rank()));
    for (auto e : p.shape()) detail::write_pod<std::uint32_t>(f, std::uint32_t(e));
    f.write(reinterpret_cast<const char*>(p.data().data()),
            std::streamsize(p.numel() * sizeof(T)));
  }
  if (!f) throw DataError("checkpoint: write failed for '" + path + "'");
}

// Loads values into an already-constructed store; names and shapes must
// match the file exactly, and a mismatch reports both shapes.
template <class T>
void load_checkpoint(const std::string& path, ParamStore<T>& store) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("checkpoint: cannot open '" + path + "'");
  char magic[4];
  f.read(magic, 4);
  if (!f || std::memcmp(magic, "EPW1", 4) != 0)
    throw DataError("checkpoint: bad magic in '" + path + "'");
  const auto width = detail::read_pod<std::uint8_t>(f);
  if (width != sizeof(T))
    throw DataError("checkpoint: scalar width " + std::to_string(width) +
                    " does not match build precision " +
                    std::to_string(sizeof(T)));
  const auto count = detail::read_pod<std::uint32_t>(f);
  if (count != store.params.size())
    throw DataError("checkpoint: file has " + std::to_string(count) +
                    " parameters, model has " +
                    std::to_string(store.params.size()));
  for (auto& [name, p] : store.params) {
    const auto nlen = detail::read_pod<std::uint32_t>(f);
    std::string fname(nlen, '\0');
    f.read(fname.data(), nlen);
    if (fname != name)
      throw DataError("checkpoint: parameter order mismatch, expected '" +
                      name + "', file has '" + fname + "'");
    const auto rank = detail::read_pod<std::uint32_t>(f);
    Shape shape(rank);
    for (auto& e : shape) e = detail::read_pod<std::uint32_t>(f);
    if (shape != p.shape())
      throw DataError("checkpoint: shape mismatch for '" + name + "': file " +
                      shape_str(shape) + " vs model " + shape_str(p.shape()));
    f.read(reinterpret_cast<char*>(p.data().data()),
           std::streamsize(p.numel() * sizeof(T)));
    if (!f) throw DataError("checkpoint: truncated values for '" + name + "'");
  }
}

}  // namespace epiwarp
