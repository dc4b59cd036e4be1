#include "cfr/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <limits>

#include "cfr/errors.hpp"

namespace cfr {

namespace le {

void put_u8(std::ostream& out, std::uint8_t v) { out.put(static_cast<char>(v)); }

void put_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b, 4);
}

static void put_u64(std::ostream& out, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFFu);
  out.write(b, 8);
}

void put_f32(std::ostream& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }
void put_f64(std::ostream& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void get_bytes(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) throw FormatError("unexpected end of stream");
}

std::uint8_t get_u8(std::istream& in) {
  char c;
  get_bytes(in, &c, 1);
  return static_cast<std::uint8_t>(c);
}

std::uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  get_bytes(in, reinterpret_cast<char*>(b), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
  return v;
}

static std::uint64_t get_u64(std::istream& in) {
  unsigned char b[8];
  get_bytes(in, reinterpret_cast<char*>(b), 8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
  return v;
}

float get_f32(std::istream& in) { return std::bit_cast<float>(get_u32(in)); }
double get_f64(std::istream& in) { return std::bit_cast<double>(get_u64(in)); }

}  // namespace le

void write_matrix(std::ostream& out, const Matrix& m, DType dtype) {
  constexpr auto kMax = std::numeric_limits<std::uint32_t>::max();
  if (m.rows() > kMax || m.cols() > kMax) throw ArgumentError("matrix too large to serialize");
  out.write(kTensorMagic, 4);
  le::put_u8(out, kTensorVersion);
  le::put_u8(out, static_cast<std::uint8_t>(dtype));
  le::put_u32(out, static_cast<std::uint32_t>(m.rows()));
  le::put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (double v : m.data()) {
    if (dtype == DType::F32) {
      le::put_f32(out, static_cast<float>(v));
    } else {
      le::put_f64(out, v);
    }
  }
  if (!out) throw IoError("failed writing matrix");
}

Matrix read_matrix(std::istream& in) {
  char magic[4];
  le::get_bytes(in, magic, 4);
  if (std::memcmp(magic, kTensorMagic, 4) != 0) throw FormatError("bad tensor magic");
  const auto version = le::get_u8(in);
  if (version != kTensorVersion) {
    throw FormatError("unsupported tensor version " + std::to_string(version));
  }
  const auto dtype = le::get_u8(in);
  if (dtype > 1) throw FormatError("unknown tensor dtype " + std::to_string(dtype));
  const std::size_t rows = le::get_u32(in);
  const std::size_t cols = le::get_u32(in);
  if (rows * cols > (std::size_t{1} << 28)) {
    throw FormatError("tensor of " + Shape{rows, cols}.str() + " exceeds the size limit");
  }
  std::vector<double> data(rows * cols);
  for (double& v : data) {
    v = dtype == 0 ? static_cast<double>(le::get_f32(in)) : le::get_f64(in);
  }
  return Matrix(rows, cols, std::move(data));
}

}  // namespace cfr
