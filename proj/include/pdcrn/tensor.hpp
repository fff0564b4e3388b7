#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace pdcrn {

/// Raised whenever tensor dimensions are invalid or incompatible.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Batch x channel x height x width extents.
struct Shape {
  std::size_t n = 0;
  std::size_t c = 0;
  std::size_t h = 0;
  std::size_t w = 0;

  /// Element count; throws ShapeError if the product overflows size_t.
  std::size_t count() const;
  std::size_t plane() const { return h * w; }
  std::string str() const;

  friend bool operator==(const Shape&, const Shape&) = default;
};

/// Dense rank-4 array in n -> c -> h -> w row-major order.
///
/// A default-constructed tensor has shape (0,0,0,0). Zero extents are legal
/// at this level (an empty-channel tensor is the identity for channel
/// concatenation); tensor_create() is the validating factory.
template <typename T>
class Tensor4 {
 public:
  using value_type = T;

  Tensor4() = default;
  explicit Tensor4(const Shape& shape, T fill = T{0})
      : shape_(shape), data_(shape.count(), fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t n() const { return shape_.n; }
  std::size_t c() const { return shape_.c; }
  std::size_t h() const { return shape_.h; }
  std::size_t w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }

  T* plane(std::size_t n, std::size_t c) { return data_.data() + offset(n, c, 0, 0); }
  const T* plane(std::size_t n, std::size_t c) const {
    return data_.data() + offset(n, c, 0, 0);
  }

  T& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return data_[offset(n, c, y, x)];
  }
  T at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return data_[offset(n, c, y, x)];
  }

  T& operator[](std::size_t i) { return data_[i]; }
  T operator[](std::size_t i) const { return data_[i]; }

  std::size_t offset(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }

  friend bool operator==(const Tensor4&, const Tensor4&) = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

/// Validating factory: every extent must be >= 1.
template <typename T>
Tensor4<T> tensor_create(const Shape& shape, T fill);

/// Channel concatenation; `a`'s channels come first.
template <typename T>
Tensor4<T> concat_channels(const Tensor4<T>& a, const Tensor4<T>& b);

/// Copies channels [first, first + count) into a new tensor.
template <typename T>
Tensor4<T> slice_channels(const Tensor4<T>& x, std::size_t first, std::size_t count);

/// Zero padding of `pad` pixels on each spatial side.
template <typename T>
Tensor4<T> pad_spatial(const Tensor4<T>& x, std::size_t pad);

/// Mirror padding (edge pixel not repeated) on the bottom and right sides.
template <typename T>
Tensor4<T> reflect_pad_to(const Tensor4<T>& x, std::size_t h, std::size_t w);

template <typename T>
Tensor4<T> crop_spatial(const Tensor4<T>& x, std::size_t top, std::size_t left,
                        std::size_t h, std::size_t w);

/// Stacks single-image tensors along the batch axis.
template <typename T>
Tensor4<T> stack_batch(std::span<const Tensor4<T>> items);

template <typename T>
Tensor4<T> batch_item(const Tensor4<T>& x, std::size_t index);

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b);
template <typename T>
Tensor4<T> sub(const Tensor4<T>& a, const Tensor4<T>& b);
template <typename T>
Tensor4<T> mul(const Tensor4<T>& a, const Tensor4<T>& b);
template <typename T>
Tensor4<T> scale(const Tensor4<T>& a, T s);

/// In-place `acc += x`.
template <typename T>
void accumulate(Tensor4<T>& acc, const Tensor4<T>& x);

// Reductions accumulate in double regardless of T.
template <typename T>
double sum(const Tensor4<T>& x);
template <typename T>
double dot(const Tensor4<T>& a, const Tensor4<T>& b);
template <typename T>
double squared_norm(const Tensor4<T>& x);
template <typename T>
double max_abs(const Tensor4<T>& x);
template <typename T>
double max_abs_diff(const Tensor4<T>& a, const Tensor4<T>& b);
template <typename T>
bool all_finite(const Tensor4<T>& x);

template <typename U, typename T>
Tensor4<U> tensor_cast(const Tensor4<T>& x) {
  Tensor4<U> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = static_cast<U>(x[i]);
  return out;
}

void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace pdcrn
