#pragma once

#include "mfpod/core.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>
#include <vector>

namespace mfpod::io {

class CorruptFileError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kMagic[4] = {'M', 'F', 'P', 'S'};
inline constexpr std::uint32_t kVersion = 1;
inline constexpr std::size_t kHeaderBytes = 24;

namespace detail {

inline void put_le(std::string& buf, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline std::uint64_t get_le(const std::string& buf, std::size_t at, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[at + static_cast<std::size_t>(i)])) << (8 * i);
  }
  return v;
}

} // namespace detail

/// Writes `contents` to a sibling temp file, then renames it over `path`.
inline void write_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename onto '" + path.string() + "': " + ec.message());
  }
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

/// MFP1 encoding: magic, u32 version, u64 rows, u64 cols, column-major f64, all little-endian.
inline std::string encode_snapshots(const Matrix& m) {
  std::string buf;
  buf.reserve(kHeaderBytes + static_cast<std::size_t>(m.size()) * 8);
  buf.append(kMagic, 4);
  detail::put_le(buf, kVersion, 4);
  detail::put_le(buf, static_cast<std::uint64_t>(m.rows()), 8);
  detail::put_le(buf, static_cast<std::uint64_t>(m.cols()), 8);
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < m.rows(); ++i) detail::put_le(buf, std::bit_cast<std::uint64_t>(m(i, j)), 8);
  }
  return buf;
}

inline Matrix decode_snapshots(const std::string& buf) {
  if (buf.size() < kHeaderBytes) throw CorruptFileError("MFP1: file shorter than header");
  if (std::memcmp(buf.data(), kMagic, 4) != 0) throw CorruptFileError("MFP1: bad magic");
  const auto version = detail::get_le(buf, 4, 4);
  if (version != kVersion) throw CorruptFileError("MFP1: unsupported version " + std::to_string(version));
  const std::uint64_t rows = detail::get_le(buf, 8, 8);
  const std::uint64_t cols = detail::get_le(buf, 16, 8);
  const std::uint64_t payload = buf.size() - kHeaderBytes;
  if (rows != 0 && (cols > payload / 8 / rows)) throw CorruptFileError("MFP1: truncated payload");
  if (rows * cols * 8 != payload) {
    throw CorruptFileError(rows * cols * 8 > payload ? "MFP1: truncated payload" : "MFP1: trailing bytes");
  }
  Matrix m(static_cast<Index>(rows), static_cast<Index>(cols));
  std::size_t at = kHeaderBytes;
  for (Index j = 0; j < m.cols(); ++j) {
    for (Index i = 0; i < m.rows(); ++i, at += 8) m(i, j) = std::bit_cast<double>(detail::get_le(buf, at, 8));
  }
  return m;
}

inline void write_snapshots(const std::filesystem::path& path, const Matrix& m) {
  write_atomic(path, encode_snapshots(m));
}

inline Matrix read_snapshots(const std::filesystem::path& path) {
  return decode_snapshots(read_file(path));
}

} // namespace mfpod::io
