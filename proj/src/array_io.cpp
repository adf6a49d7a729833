#include "acr/array_io.hpp"

#include <bit>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "acr/error.hpp"

namespace acr {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint64_t get_le(std::string_view bytes, std::size_t offset, int width) {
  std::uint64_t v = 0;
  for (int i = 0; i < width; ++i) {
    v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[offset + static_cast<std::size_t>(i)])) << (8 * i);
  }
  return v;
}

}  // namespace

std::size_t NdArray::element_count() const {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::uint32_t b) { return a * b; });
}

std::string encode_array(const NdArray& array) {
  if (array.element_count() != array.data.size()) throw ArgumentError("encode_array: payload size differs from extents");
  std::string out(kArrayMagic);
  put_u32(out, static_cast<std::uint32_t>(array.shape.size()));
  for (auto e : array.shape) put_u32(out, e);
  out.reserve(out.size() + 8 * array.data.size());
  for (double v : array.data) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

NdArray decode_array(std::string_view bytes) {
  if (bytes.size() < 12 || bytes.substr(0, 8) != kArrayMagic) throw FormatError("array container: bad magic");
  NdArray array;
  const auto rank = static_cast<std::uint32_t>(get_le(bytes, 8, 4));
  std::size_t offset = 12;
  if (bytes.size() < offset + 4ull * rank) throw FormatError("array container: truncated header");
  for (std::uint32_t i = 0; i < rank; ++i, offset += 4) {
    array.shape.push_back(static_cast<std::uint32_t>(get_le(bytes, offset, 4)));
  }
  const std::size_t count = array.element_count();
  if (bytes.size() != offset + 8 * count) throw FormatError("array container: payload length mismatch");
  array.data.resize(count);
  for (std::size_t i = 0; i < count; ++i, offset += 8) {
    array.data[i] = std::bit_cast<double>(get_le(bytes, offset, 8));
  }
  return array;
}

NdArray to_array(const Matrix& m) {
  NdArray a;
  a.shape = {static_cast<std::uint32_t>(m.rows()), static_cast<std::uint32_t>(m.cols())};
  a.data.assign(m.data(), m.data() + m.size());
  return a;
}

Matrix to_matrix(const NdArray& array) {
  Index rows = 0;
  Index cols = 0;
  if (array.shape.size() == 2) {
    rows = array.shape[0];
    cols = array.shape[1];
  } else if (array.shape.size() == 1) {
    rows = 1;
    cols = array.shape[0];
  } else {
    throw FormatError("to_matrix: expected rank 1 or 2, got rank " + std::to_string(array.shape.size()));
  }
  return Eigen::Map<const Matrix>(array.data.data(), rows, cols);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_array(const std::filesystem::path& path, const NdArray& array) {
  write_file_atomic(path, encode_array(array));
}

NdArray read_array(const std::filesystem::path& path) { return decode_array(read_file(path)); }

}  // namespace acr
