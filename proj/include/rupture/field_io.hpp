#pragma once

// RFLD v1: "RFLD" | u32 version | u32 n | u32 shape[n] | f64 origin[n] | f64 spacing[n] | f64 values[...]
// All little-endian, no padding.

#include <rupture/grid.hpp>

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

namespace rupture {

inline constexpr std::uint32_t kRfldVersion = 1;
inline constexpr char kRfldMagic[4] = {'R', 'F', 'L', 'D'};

inline std::size_t rfld_header_bytes(int dim) {
  return 4 + 4 + 4 + 4 * static_cast<std::size_t>(dim) + 16 * static_cast<std::size_t>(dim);
}

namespace detail {

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
  auto bits = std::bit_cast<std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>>(v);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<unsigned char>((bits >> (8 * i)) & 0xFF));
}

class ByteReader {
 public:
  explicit ByteReader(const std::vector<unsigned char>& bytes) : bytes_(bytes) {}
  template <class T>
  T get(const char* what) {
    require(pos_ + sizeof(T) <= bytes_.size(), ErrorCode::Truncated, std::string("payload ends inside ") + what);
    using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
    U bits = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(bytes_[pos_ + i]) << (8 * i);
    pos_ += sizeof(T);
    return std::bit_cast<T>(bits);
  }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }
  std::size_t position() const noexcept { return pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::vector<unsigned char>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

inline std::vector<unsigned char> encode_field(const ScalarField& field) {
  const Grid& g = field.grid();
  std::vector<unsigned char> out;
  out.reserve(rfld_header_bytes(g.dim()) + 8 * g.size());
  out.insert(out.end(), std::begin(kRfldMagic), std::end(kRfldMagic));
  detail::put_le<std::uint32_t>(out, kRfldVersion);
  detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.dim()));
  for (int i = 0; i < g.dim(); ++i) detail::put_le<std::uint32_t>(out, static_cast<std::uint32_t>(g.shape(i)));
  for (int i = 0; i < g.dim(); ++i) detail::put_le<double>(out, g.origin()[i]);
  for (int i = 0; i < g.dim(); ++i) detail::put_le<double>(out, g.spacing(i));
  for (double v : field.values()) detail::put_le<double>(out, v);
  return out;
}

inline ScalarField decode_field(const std::vector<unsigned char>& bytes, std::string name = "u") {
  require(bytes.size() >= 4, ErrorCode::Truncated, "file shorter than magic");
  require(std::memcmp(bytes.data(), kRfldMagic, 4) == 0, ErrorCode::BadMagic, "expected RFLD magic");
  detail::ByteReader in(bytes);
  in.skip(4);
  const auto version = in.get<std::uint32_t>("version");
  require(version == kRfldVersion, ErrorCode::BadVersion, "unsupported RFLD version " + std::to_string(version));
  const auto n = in.get<std::uint32_t>("dimension");
  require(n >= 1 && n <= kMaxDim, ErrorCode::SizeMismatch, "dimension out of range");
  std::vector<std::size_t> shape(n);
  std::size_t count = 1;
  for (auto& s : shape) {
    s = in.get<std::uint32_t>("shape");
    require(s > 0, ErrorCode::SizeMismatch, "zero extent in shape");
    require(count <= kDefaultCellBudget / s, ErrorCode::SizeMismatch, "shape exceeds cell budget");
    count *= s;
  }
  Point origin(static_cast<int>(n));
  for (std::uint32_t i = 0; i < n; ++i) origin[static_cast<int>(i)] = in.get<double>("origin");
  std::vector<double> spacing(n);
  for (auto& s : spacing) s = in.get<double>("spacing");
  require(in.remaining() >= 8 * count, ErrorCode::Truncated, "value payload shorter than shape implies");
  require(in.remaining() == 8 * count, ErrorCode::SizeMismatch, "trailing bytes after value payload");
  std::vector<double> values(count);
  for (auto& v : values) v = in.get<double>("values");
  return ScalarField(Grid(std::move(shape), origin, std::move(spacing)), std::move(values), std::move(name));
}

inline void save_field(const ScalarField& field, const std::filesystem::path& path) {
  const auto bytes = encode_field(field);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(out), ErrorCode::IoFailure, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  require(static_cast<bool>(out), ErrorCode::IoFailure, "write failed for " + path.string());
}

inline ScalarField load_field(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::IoFailure, "cannot open " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_field(bytes, path.stem().string());
}

}  // namespace rupture
