#include "weakmil/common.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>

namespace weakmil {

namespace bin {

void Reader::need(size_t n) const {
  if (off_ + n > bytes_.size()) {
    throw DataError("corruption error: " + what_ + " truncated (need " + std::to_string(n) +
                    " bytes at offset " + std::to_string(off_) + ", have " +
                    std::to_string(bytes_.size() - off_) + ")");
  }
}

void Reader::raw(void* dst, size_t n) {
  need(n);
  std::memcpy(dst, bytes_.data() + off_, n);
  off_ += n;
}

void Reader::expect_header(const char magic[4], uint32_t version) {
  need(4);
  if (std::memcmp(bytes_.data() + off_, magic, 4) != 0) {
    throw DataError("format error: " + what_ + " has wrong magic (expected '" +
                    std::string(magic, 4) + "')");
  }
  off_ += 4;
  uint32_t v = u32();
  if (v != version) {
    throw DataError("format error: " + what_ + " has unsupported version " + std::to_string(v));
  }
}

void Reader::expect_exhausted() {
  if (off_ != bytes_.size()) {
    throw DataError("corruption error: " + what_ + " has " + std::to_string(bytes_.size() - off_) +
                    " trailing bytes");
  }
}

}  // namespace bin

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("I/O error: cannot open '" + path + "' for reading");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw DataError("I/O error: failed reading '" + path + "'");
  return bytes;
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("I/O error: cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  out.flush();
  if (!out) throw DataError("I/O error: failed writing '" + path + "'");
}

void ensure_dir(const std::string& path) {
  std::error_code ec;
  std::filesystem::create_directories(path, ec);
  if (ec) throw DataError("I/O error: cannot create directory '" + path + "': " + ec.message());
}

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace weakmil
