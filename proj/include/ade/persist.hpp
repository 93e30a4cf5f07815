#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <string>
#include <vector>

#include "ade/ade.hpp"
#include "ade/error.hpp"

namespace ade {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline constexpr char kStructureMagic[4] = {'A', 'D', 'E', 'S'};
inline constexpr std::uint16_t kStructureFormatVersion = 1;

/// FNV-1a, 64 bit.
inline std::uint64_t checksum64(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::uint8_t b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace detail {

class ByteWriter {
 public:
  void raw(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  template <typename UInt>
  void uint(UInt v) {
    for (std::size_t i = 0; i < sizeof(UInt); ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { uint(std::bit_cast<std::uint64_t>(v)); }
  void f64s(std::span<const double> vs) {
    if constexpr (std::endian::native == std::endian::little) {
      raw(vs.data(), vs.size_bytes());
    } else {
      for (double v : vs) f64(v);
    }
  }
  std::vector<std::uint8_t>& bytes() { return bytes_; }

 private:
  std::vector<std::uint8_t> bytes_;
};

class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename UInt>
  UInt uint() {
    need(sizeof(UInt));
    UInt v = 0;
    for (std::size_t i = 0; i < sizeof(UInt); ++i) v |= static_cast<UInt>(static_cast<UInt>(bytes_[pos_ + i]) << (8 * i));
    pos_ += sizeof(UInt);
    return v;
  }
  double f64() { return std::bit_cast<double>(uint<std::uint64_t>()); }
  std::vector<double> f64s(std::size_t count) {
    std::vector<double> out(count);
    if constexpr (std::endian::native == std::endian::little) {
      need(count * sizeof(double));
      std::memcpy(out.data(), bytes_.data() + pos_, count * sizeof(double));
      pos_ += count * sizeof(double);
    } else {
      for (double& v : out) v = f64();
    }
    return out;
  }
  std::size_t position() const { return pos_; }

 private:
  void need(std::size_t n) const {
    if (n > bytes_.size() - pos_) throw ChecksumError("structure file is truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

/// Writes `bytes` to a sibling temporary file and renames it over `path`.
inline void write_file_atomic(const std::string& path, std::span<const char> bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

inline void write_file_atomic(const std::string& path, const std::string& text) {
  write_file_atomic(path, std::span<const char>(text.data(), text.size()));
}

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path);
  return bytes;
}

/// Serializes a structure: magic, version, parameters, shapes, Med_p, the
/// matrices, the stored sketches and a trailing checksum.
inline std::vector<std::uint8_t> serialize(const AdeStructure& s) {
  detail::ByteWriter w;
  w.raw(kStructureMagic, sizeof kStructureMagic);
  w.uint<std::uint16_t>(kStructureFormatVersion);
  const AdeParams& p = s.params();
  w.f64(p.p);
  w.f64(p.epsilon);
  w.f64(p.delta);
  w.f64(p.c_m);
  w.f64(p.c_l);
  w.f64(p.c_r);
  w.uint<std::uint64_t>(p.master_seed);
  w.uint<std::uint64_t>(s.dim());
  w.uint<std::uint64_t>(s.points());
  w.uint<std::uint64_t>(s.rows());
  w.uint<std::uint64_t>(s.sketch_count());
  w.f64(s.med_p());
  for (const auto& mat : s.matrices()) w.f64s(mat.entries());
  w.f64s(s.sketches().values());
  const std::uint64_t sum = checksum64(w.bytes());
  w.uint<std::uint64_t>(sum);
  return std::move(w.bytes());
}

inline AdeStructure deserialize(std::span<const std::uint8_t> bytes,
                                std::size_t memory_cap_bytes = kDefaultMemoryCapBytes) {
  constexpr std::size_t kHeader = 4 + 2 + 12 * 8;
  if (bytes.size() < 6 || std::memcmp(bytes.data(), kStructureMagic, 4) != 0) {
    throw ChecksumError("not a structure file (bad magic or truncated header)");
  }
  detail::ByteReader r(bytes.subspan(4));
  const auto version = r.uint<std::uint16_t>();
  if (version != kStructureFormatVersion) throw VersionError(version, kStructureFormatVersion);
  if (bytes.size() < kHeader + 8) throw ChecksumError("structure file is truncated");

  AdeParams params;
  params.p = r.f64();
  params.epsilon = r.f64();
  params.delta = r.f64();
  params.c_m = r.f64();
  params.c_l = r.f64();
  params.c_r = r.f64();
  params.master_seed = r.uint<std::uint64_t>();
  const auto d = static_cast<std::size_t>(r.uint<std::uint64_t>());
  const auto n = static_cast<std::size_t>(r.uint<std::uint64_t>());
  const auto m = static_cast<std::size_t>(r.uint<std::uint64_t>());
  const auto l = static_cast<std::size_t>(r.uint<std::uint64_t>());
  const double medp = r.f64();

  const std::size_t matrix_doubles = checked_mul(checked_mul(l, m), d);
  const std::size_t sketch_doubles = checked_mul(checked_mul(n, l), m);
  const std::size_t payload = checked_mul(matrix_doubles + sketch_doubles, sizeof(double));
  if (matrix_doubles == SIZE_MAX || sketch_doubles == SIZE_MAX || payload == SIZE_MAX ||
      bytes.size() != kHeader + payload + 8) {
    throw ChecksumError("structure file length does not match its header (truncated or corrupt)");
  }
  const std::size_t body = bytes.size() - 8;
  detail::ByteReader tail(bytes.subspan(body));
  if (tail.uint<std::uint64_t>() != checksum64(bytes.first(body))) {
    throw ChecksumError("structure file checksum mismatch");
  }
  check_capacity(matrix_doubles + sketch_doubles, memory_cap_bytes);

  params.l_cap = l;
  params.memory_cap_bytes = memory_cap_bytes;
  const SketchKind kind = params.euclidean() ? SketchKind::gaussian_inv_m() : SketchKind::p_stable(params.p);
  std::vector<SketchMatrix> matrices;
  matrices.reserve(l);
  for (std::size_t j = 0; j < l; ++j) {
    matrices.emplace_back(kind, m, d, r.f64s(m * d), matrix_stream(params.master_seed, j).key());
  }
  SketchTable table(n, l, m, r.f64s(sketch_doubles));
  return AdeStructure(params, d, n, m, medp, std::move(matrices), std::move(table));
}

inline void save(const AdeStructure& s, const std::string& path) {
  const auto bytes = serialize(s);
  write_file_atomic(path, std::span<const char>(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

inline AdeStructure load(const std::string& path, std::size_t memory_cap_bytes = kDefaultMemoryCapBytes) {
  return deserialize(read_file_bytes(path), memory_cap_bytes);
}

}  // namespace ade
