#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace pdac::nn {

/// Per-axis triple in (depth, height, width) order.
struct Dim3 {
  std::size_t d = 1;
  std::size_t h = 1;
  std::size_t w = 1;

  static constexpr Dim3 cube(std::size_t n) { return {n, n, n}; }
  std::size_t volume() const noexcept { return d * h * w; }
  friend bool operator==(const Dim3&, const Dim3&) = default;
};

std::string to_string(const Dim3& d);

/// NCDHW tensor shape.
struct Shape5 {
  std::size_t n = 0;
  std::size_t c = 0;
  Dim3 s{};

  std::size_t count() const noexcept { return n * c * s.volume(); }
  std::size_t per_sample() const noexcept { return c * s.volume(); }
  friend bool operator==(const Shape5&, const Shape5&) = default;
};

std::string to_string(const Shape5& s);

/// Dense NCDHW tensor, width fastest.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape5 shape, T fill = T{}) : shape_(shape), data_(shape.count(), fill) {}
  Tensor(Shape5 shape, std::vector<T> data);

  const Shape5& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  std::span<T> sample(std::size_t i) noexcept {
    return std::span<T>(data_).subspan(i * shape_.per_sample(), shape_.per_sample());
  }
  std::span<const T> sample(std::size_t i) const noexcept {
    return std::span<const T>(data_).subspan(i * shape_.per_sample(), shape_.per_sample());
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  /// Reinterprets the payload under a new shape with the same element count.
  void reshape(Shape5 shape);

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

 private:
  Shape5 shape_{};
  std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace pdac::nn
