#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "artemis/core/error.hpp"
#include "artemis/numcore/mlp.hpp"

namespace artemis::train {

inline constexpr char kCheckpointMagic[4] = {'A', 'R', 'T', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Ordered named f64 blocks.
struct Checkpoint {
  std::vector<std::string> names;
  std::vector<numcore::Mat> blocks;

  void put(const std::string& name, numcore::Mat m) {
    require(!find(name), "Checkpoint: duplicate block '" + name + "'");
    names.push_back(name);
    blocks.push_back(std::move(m));
  }
  void put_scalar(const std::string& name, double v) { put(name, numcore::Mat::Constant(1, 1, v)); }

  const numcore::Mat* find(const std::string& name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return &blocks[i];
    return nullptr;
  }
  const numcore::Mat& at(const std::string& name) const {
    const auto* m = find(name);
    if (!m) throw std::runtime_error("checkpoint: missing block '" + name + "'");
    return *m;
  }
  double scalar(const std::string& name) const { return at(name)(0, 0); }
};

namespace detail {

template <class T>
void write_raw(std::ostream& os, T v) {
  static_assert(std::endian::native == std::endian::little, "little-endian host required");
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_raw(std::istream& is, const std::string& path) {
  T v;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) throw std::runtime_error("truncated checkpoint: " + path);
  return v;
}

}  // namespace detail

// Layout: "ARTP", u32 version, u64 block count, then per block
// u32 name length, name bytes, u64 rows, u64 cols, rows*cols f64 (column-major).
inline void write_checkpoint(const std::string& path, const Checkpoint& c) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path);
  os.write(kCheckpointMagic, 4);
  detail::write_raw<std::uint32_t>(os, kCheckpointVersion);
  detail::write_raw<std::uint64_t>(os, c.names.size());
  for (std::size_t i = 0; i < c.names.size(); ++i) {
    detail::write_raw<std::uint32_t>(os, static_cast<std::uint32_t>(c.names[i].size()));
    os.write(c.names[i].data(), static_cast<std::streamsize>(c.names[i].size()));
    detail::write_raw<std::uint64_t>(os, static_cast<std::uint64_t>(c.blocks[i].rows()));
    detail::write_raw<std::uint64_t>(os, static_cast<std::uint64_t>(c.blocks[i].cols()));
    os.write(reinterpret_cast<const char*>(c.blocks[i].data()), static_cast<std::streamsize>(c.blocks[i].size() * sizeof(double)));
  }
  if (!os) throw std::runtime_error("write failed: " + path);
}

inline Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kCheckpointMagic, 4) != 0)
    throw std::runtime_error("not a checkpoint (bad magic): " + path);
  const auto version = detail::read_raw<std::uint32_t>(is, path);
  if (version != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  const auto count = detail::read_raw<std::uint64_t>(is, path);
  for (std::uint64_t i = 0; i < count; ++i) {
    const auto len = detail::read_raw<std::uint32_t>(is, path);
    if (len > 4096) throw std::runtime_error("corrupt checkpoint block name: " + path);
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw std::runtime_error("truncated checkpoint: " + path);
    const auto rows = detail::read_raw<std::uint64_t>(is, path);
    const auto cols = detail::read_raw<std::uint64_t>(is, path);
    if (rows * cols > (std::uint64_t{1} << 32)) throw std::runtime_error("corrupt checkpoint block size: " + path);
    numcore::Mat m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (!is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double))))
      throw std::runtime_error("truncated checkpoint: " + path);
    c.put(name, std::move(m));
  }
  return c;
}

}  // namespace artemis::train
