#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "pdan/common.hpp"

namespace pdan {

using Shape = std::vector<int>;

inline long long shape_numel(const Shape& shape) {
  long long n = 1;
  for (int e : shape) {
    if (e <= 0) throw ValidationError("tensor extent must be positive, got " + std::to_string(e));
    n *= e;
  }
  return n;
}

inline std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

namespace detail {

inline void write_bytes(std::ostream& os, const void* p, size_t n) {
  os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

inline void read_bytes(std::istream& is, void* p, size_t n) {
  is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
  if (is.gcount() != static_cast<std::streamsize>(n)) throw IoError("unexpected end of stream");
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                        static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  write_bytes(os, b, 4);
}

inline std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  read_bytes(is, b, 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
  write_u32(os, static_cast<std::uint32_t>(v));
  write_u32(os, static_cast<std::uint32_t>(v >> 32));
}

inline std::uint64_t read_u64(std::istream& is) {
  std::uint64_t lo = read_u32(is);
  std::uint64_t hi = read_u32(is);
  return lo | (hi << 32);
}

template <typename T>
void write_scalar_le(std::ostream& os, T v) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  if constexpr (sizeof(T) == 4) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
  } else {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
  }
}

template <typename T>
T read_scalar_le(std::istream& is) {
  static_assert(sizeof(T) == 4 || sizeof(T) == 8);
  T v;
  if constexpr (sizeof(T) == 4) {
    std::uint32_t bits = read_u32(is);
    std::memcpy(&v, &bits, 4);
  } else {
    std::uint64_t bits = read_u64(is);
    std::memcpy(&v, &bits, 8);
  }
  return v;
}

}  // namespace detail

/// Dense N-dimensional array in row-major order. The canonical image layout
/// is (channels, height, width) with an optional leading batch extent.
/// Instantiated with float for training and double for gradient-check mode.
template <typename T>
class Tensor {
  static_assert(std::is_floating_point_v<T>);

 public:
  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T(0))
      : shape_(std::move(shape)), data_(static_cast<size_t>(shape_numel(shape_)), fill) {}

  static Tensor from_data(Shape shape, std::vector<T> data) {
    if (shape_numel(shape) != static_cast<long long>(data.size()))
      throw ValidationError("tensor data length " + std::to_string(data.size()) +
                            " does not match shape " + shape_str(shape));
    Tensor t;
    t.shape_ = std::move(shape);
    t.data_ = std::move(data);
    return t;
  }

  const Shape& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int extent(int axis) const { return shape_[static_cast<size_t>(axis)]; }
  long long numel() const { return static_cast<long long>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }

  T& operator[](long long i) { return data_[static_cast<size_t>(i)]; }
  const T& operator[](long long i) const { return data_[static_cast<size_t>(i)]; }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Every op is required to leave only finite values behind; NaN/Inf is an
  /// error state, reported with the offending flat index.
  void check_finite(const char* context) const {
    for (size_t i = 0; i < data_.size(); ++i) {
      if (!std::isfinite(data_[i]))
        throw NumericError(std::string(context) + ": non-finite value at flat index " +
                           std::to_string(i));
    }
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    for (size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return Tensor<U>::from_data(shape_, std::move(out));
  }

  /// Debug dump format: u32 scalar width in bytes, u32 rank, u32 extents,
  /// then the payload as little-endian 32/64-bit floats.
  void dump(std::ostream& os) const {
    detail::write_u32(os, sizeof(T));
    detail::write_u32(os, static_cast<std::uint32_t>(shape_.size()));
    for (int e : shape_) detail::write_u32(os, static_cast<std::uint32_t>(e));
    for (T v : data_) detail::write_scalar_le(os, v);
  }

  static Tensor load(std::istream& is) {
    const std::uint32_t width = detail::read_u32(is);
    if (width != sizeof(T))
      throw IoError("tensor dump width " + std::to_string(width) + " does not match requested " +
                    std::to_string(sizeof(T)));
    const std::uint32_t rank = detail::read_u32(is);
    Shape shape(rank);
    for (auto& e : shape) e = static_cast<int>(detail::read_u32(is));
    Tensor t(shape);
    for (long long i = 0; i < t.numel(); ++i) t[i] = detail::read_scalar_le<T>(is);
    return t;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Image tensors are (C,H,W) or (N,C,H,W); the channel axis is rank-3 from
/// the end either way.
template <typename T>
int channel_axis(const Tensor<T>& t) {
  if (t.rank() != 3 && t.rank() != 4)
    throw ValidationError("expected rank 3 or 4 tensor, got " + shape_str(t.shape()));
  return t.rank() - 3;
}

template <typename T>
int batch_of(const Tensor<T>& t) {
  return t.rank() == 4 ? t.extent(0) : 1;
}

}  // namespace pdan
