#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <new>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "hta/error.hpp"

namespace hta {

using Shape = std::vector<std::size_t>;

/// 64-byte aligned storage. Vectorized kernels peel loops up to an aligned
/// address, so a fixed base alignment keeps float summation order (and thus
/// results) independent of where the allocator happens to place a buffer.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept {
    return true;
  }
};

template <typename T>
using AlignedVector = std::vector<T, AlignedAllocator<T>>;

inline std::size_t shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << ']';
  return os.str();
}

/// Dense row-major array.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{})
      : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}
  Tensor(Shape shape, AlignedVector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != shape_size(shape_))
      fail(ErrorCode::ShapeMismatch, "data length does not match shape " + shape_str(shape_));
  }
  Tensor(Shape shape, const std::vector<T>& data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
    if (data_.size() != shape_size(shape_))
      fail(ErrorCode::ShapeMismatch, "data length does not match shape " + shape_str(shape_));
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  AlignedVector<T>& vec() { return data_; }
  const AlignedVector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  T& at(std::size_t a, std::size_t b) { return data_[a * shape_[1] + b]; }
  T at(std::size_t a, std::size_t b) const { return data_[a * shape_[1] + b]; }
  T& at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }
  T at(std::size_t a, std::size_t b, std::size_t c, std::size_t d) const {
    return data_[((a * shape_[1] + b) * shape_[2] + c) * shape_[3] + d];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  void reshape(Shape s) {
    if (shape_size(s) != data_.size())
      fail(ErrorCode::ShapeMismatch, "cannot reshape " + shape_str(shape_) + " to " + shape_str(s));
    shape_ = std::move(s);
  }

  template <typename U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, AlignedVector<U>(data_.begin(), data_.end()));
  }

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  AlignedVector<T> data_;
};

inline void require_shape(const Shape& got, const Shape& want, const char* what) {
  if (got != want)
    fail(ErrorCode::ShapeMismatch,
         std::string(what) + ": expected " + shape_str(want) + ", got " + shape_str(got));
}

inline void require_rank(const Shape& got, std::size_t rank, const char* what) {
  if (got.size() != rank)
    fail(ErrorCode::ShapeMismatch, std::string(what) + ": expected rank " + std::to_string(rank) +
                                       ", got " + shape_str(got));
}

}  // namespace hta
