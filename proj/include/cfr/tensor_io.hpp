#pragma once

// Binary Matrix container shared by checkpoints and feature files:
//   "CFRT" | u8 version (=1) | u8 dtype (0=f32, 1=f64) | u32 rows | u32 cols
//   | row-major payload
// All integers and floats are little-endian.

#include <cstdint>
#include <istream>
#include <ostream>

#include "cfr/matrix.hpp"

namespace cfr {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

inline constexpr char kTensorMagic[4] = {'C', 'F', 'R', 'T'};
inline constexpr std::uint8_t kTensorVersion = 1;

void write_matrix(std::ostream& out, const Matrix& m, DType dtype = DType::F64);
// Throws FormatError on bad magic/version/dtype or a truncated stream.
Matrix read_matrix(std::istream& in);

namespace le {
void put_u8(std::ostream& out, std::uint8_t v);
void put_u32(std::ostream& out, std::uint32_t v);
void put_f32(std::ostream& out, float v);
void put_f64(std::ostream& out, double v);
std::uint8_t get_u8(std::istream& in);
std::uint32_t get_u32(std::istream& in);
float get_f32(std::istream& in);
double get_f64(std::istream& in);
void get_bytes(std::istream& in, char* dst, std::size_t n);
}  // namespace le

}  // namespace cfr
