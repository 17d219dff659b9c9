#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace ssrl {

/// Raised whenever operand extents do not line up.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Extents of a (batch, channel, height, width) grid.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  constexpr std::size_t numel() const { return n * c * h * w; }
  constexpr std::size_t plane() const { return h * w; }
  constexpr std::size_t sample() const { return c * h * w; }
  friend constexpr bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

/// Allocator whose value-less construct() leaves scalars uninitialised, so
/// buffers that are about to be overwritten skip the zero fill.
template <typename T>
struct NoInitAllocator : std::allocator<T> {
  template <typename U>
  struct rebind {
    using other = NoInitAllocator<U>;
  };
  NoInitAllocator() = default;
  template <typename U>
  NoInitAllocator(const NoInitAllocator<U>&) noexcept {}

  template <typename U>
  void construct(U* p) noexcept(std::is_nothrow_default_constructible_v<U>) {
    ::new (static_cast<void*>(p)) U;
  }
  template <typename U, typename... Args>
  void construct(U* p, Args&&... args) {
    ::new (static_cast<void*>(p)) U(std::forward<Args>(args)...);
  }
};

/// Tag for tensors whose every element the caller writes before reading.
struct Uninitialized {};
inline constexpr Uninitialized kUninitialized{};

/// Dense row-major 4-D tensor with an optional gradient buffer.
template <typename T>
class Tensor {
 public:
  using value_type = T;
  using Buffer = std::vector<T, NoInitAllocator<T>>;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T(0), bool track_grad = false);
  Tensor(Shape shape, Uninitialized, bool track_grad = false);
  Tensor(Shape shape, const std::vector<T>& data, bool track_grad = false);

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }
  const T& operator()(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
    return data_[((n * shape_.c + c) * shape_.h + h) * shape_.w + w];
  }

  bool tracks_grad() const { return track_grad_; }
  void set_track_grad(bool on) { track_grad_ = on; }

  bool has_grad() const { return !grad_.empty(); }
  /// Gradient buffer, allocated (zero-filled) on first use.
  std::span<T> grad();
  std::span<const T> grad() const { return grad_; }
  void zero_grad();
  void drop_grad() { grad_.clear(); grad_.shrink_to_fit(); }

  /// Value of a single-element tensor.
  T item() const;

 private:
  Shape shape_;
  Buffer data_;
  Buffer grad_;
  bool track_grad_ = false;
};

template <typename T>
using TensorRef = std::shared_ptr<Tensor<T>>;

template <typename T>
TensorRef<T> make_tensor(Shape shape, T fill = T(0), bool track_grad = false) {
  return std::make_shared<Tensor<T>>(shape, fill, track_grad);
}

template <typename T>
TensorRef<T> make_tensor(Shape shape, const std::vector<T>& data, bool track_grad = false) {
  return std::make_shared<Tensor<T>>(shape, data, track_grad);
}

template <typename T>
TensorRef<T> make_uninitialized(Shape shape, bool track_grad = false) {
  return std::make_shared<Tensor<T>>(shape, kUninitialized, track_grad);
}

template <typename T>
TensorRef<T> make_scalar(T value, bool track_grad = false) {
  return make_tensor<T>(Shape{1, 1, 1, 1}, value, track_grad);
}

/// Integer class map of extents (batch, height, width); values in [0, num_classes).
struct LabelMap {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<std::uint8_t> data;

  LabelMap() = default;
  LabelMap(std::size_t n_, std::size_t h_, std::size_t w_, std::uint8_t fill = 0)
      : n(n_), h(h_), w(w_), data(n_ * h_ * w_, fill) {}

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return h * w; }
  std::uint8_t& operator()(std::size_t b, std::size_t y, std::size_t x) {
    return data[(b * h + y) * w + x];
  }
  std::uint8_t operator()(std::size_t b, std::size_t y, std::size_t x) const {
    return data[(b * h + y) * w + x];
  }
  friend bool operator==(const LabelMap&, const LabelMap&) = default;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace ssrl
