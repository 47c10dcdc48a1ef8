#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace weakmil {

// Error categories map onto CLI exit codes: ConfigError -> 2,
// DataError -> 3, NumericError -> 4.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid parameters, contradictory configuration, bad config files.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Missing, malformed, truncated or otherwise unusable input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Non-finite values, numeric divergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

// SplitMix64 (Vigna's fixed-increment SplittableRandom variant). Every
// random choice in the library flows through this generator, so datasets,
// initialization and training runs reproduce bit-for-bit from a seed.
class SplitMix64 {
 public:
  explicit SplitMix64(uint64_t seed = 0) : state_(seed) {}

  uint64_t next() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Uniform in [0, n). Modulo bias is negligible at the ranges used here.
  uint64_t next_below(uint64_t n) { return n ? next() % n : 0; }

  uint64_t state() const { return state_; }
  void set_state(uint64_t s) { state_ = s; }

 private:
  uint64_t state_;
};

// Stable sub-seed for the index-th child of a seeded process (video i of a
// dataset, event e of a video). Keeps per-child streams independent of
// processing order.
inline uint64_t derive_seed(uint64_t parent, uint64_t index) {
  SplitMix64 g(parent ^ (0x9e3779b97f4a7c15ULL * (index + 1)));
  return g.next();
}

// ---- little-endian binary packing for the on-disk formats ----

namespace bin {

inline void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<uint32_t>(v)); }
inline void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

// Bounds-checked reader; throws DataError on truncation.
class Reader {
 public:
  Reader(const std::string& bytes, std::string what)
      : bytes_(bytes), what_(std::move(what)) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes_[off_ + i])) << (8 * i);
    off_ += 4;
    return v;
  }

  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(bytes_[off_ + i])) << (8 * i);
    off_ += 8;
    return v;
  }

  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }

  void raw(void* dst, size_t n);

  // Consumes a 4-byte magic and a u32 version; throws DataError on mismatch.
  void expect_header(const char magic[4], uint32_t version);

  size_t remaining() const { return bytes_.size() - off_; }
  void expect_exhausted();

 private:
  void need(size_t n) const;

  const std::string& bytes_;
  std::string what_;
  size_t off_ = 0;
};

}  // namespace bin

// ---- small file helpers ----

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);
void ensure_dir(const std::string& path);

// Shortest fixed formatting that round-trips doubles; used by the CSV writers
// so identical runs produce identical bytes.
std::string fmt_g17(double v);

}  // namespace weakmil
