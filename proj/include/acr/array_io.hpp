#pragma once

// Portable array container:
//   bytes 0..7   magic "ACRARR01"
//   u32          rank
//   u32 x rank   extents
//   f64 x prod   payload, row-major
// All integers and floats are little-endian.

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "acr/matrix.hpp"

namespace acr {

inline constexpr std::string_view kArrayMagic = "ACRARR01";

struct NdArray {
  std::vector<std::uint32_t> shape;
  std::vector<double> data;

  std::size_t element_count() const;
  bool operator==(const NdArray&) const = default;
};

std::string encode_array(const NdArray& array);
NdArray decode_array(std::string_view bytes);

NdArray to_array(const Matrix& m);
/// Rank-2 arrays map to rows x cols; rank-1 to a 1 x n row.
Matrix to_matrix(const NdArray& array);

void write_array(const std::filesystem::path& path, const NdArray& array);
NdArray read_array(const std::filesystem::path& path);

/// Writes to a sibling temporary and renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);
std::string read_file(const std::filesystem::path& path);

}  // namespace acr
