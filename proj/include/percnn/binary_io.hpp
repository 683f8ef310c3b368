#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "percnn/errors.hpp"

namespace percnn {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order and assume little-endian");

/// Little-endian scalar writer over an ostream.
class BinaryWriter {
 public:
  explicit BinaryWriter(std::ostream& os) : os_(os) {}
  void magic(const char (&tag)[5]) { os_.write(tag, 4); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void f64s(const std::vector<double>& v) {
    raw(v.data(), v.size() * sizeof(double));
  }
  void raw(const void* p, std::size_t n) {
    os_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os_) throw IoError("write failed");
  }

 private:
  std::ostream& os_;
};

class BinaryReader {
 public:
  explicit BinaryReader(std::istream& is) : is_(is) {}
  void expect_magic(const char (&tag)[5]) {
    char buf[4];
    raw(buf, 4);
    if (std::memcmp(buf, tag, 4) != 0)
      throw IoError(std::string("bad magic, expected ") + tag);
  }
  std::uint32_t u32() { std::uint32_t v; raw(&v, sizeof v); return v; }
  std::uint64_t u64() { std::uint64_t v; raw(&v, sizeof v); return v; }
  double f64() { double v; raw(&v, sizeof v); return v; }
  void f64s(std::vector<double>& v, std::size_t n) {
    v.resize(n);
    raw(v.data(), n * sizeof(double));
  }
  void raw(void* p, std::size_t n) {
    is_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is_.gcount()) != n) throw IoError("unexpected end of file");
  }

 private:
  std::istream& is_;
};

}  // namespace percnn
