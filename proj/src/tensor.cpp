#include "ssrl/tensor.hpp"

#include <algorithm>

namespace ssrl {

std::string to_string(const Shape& s) {
  return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," + std::to_string(s.h) +
         "," + std::to_string(s.w) + ")";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill, bool track_grad)
    : shape_(shape), data_(shape.numel(), fill), track_grad_(track_grad) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, Uninitialized, bool track_grad)
    : shape_(shape), data_(shape.numel()), track_grad_(track_grad) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, const std::vector<T>& data, bool track_grad)
    : shape_(shape), data_(data.begin(), data.end()), track_grad_(track_grad) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + to_string(shape_));
  }
}

template <typename T>
std::span<T> Tensor<T>::grad() {
  if (grad_.size() != data_.size()) grad_.assign(data_.size(), T(0));
  return grad_;
}

template <typename T>
void Tensor<T>::zero_grad() {
  std::fill(grad_.begin(), grad_.end(), T(0));
}

template <typename T>
T Tensor<T>::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on a tensor of shape " + to_string(shape_));
  }
  return data_[0];
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace ssrl
