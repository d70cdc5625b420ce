#include "pdac/nn/tensor.hpp"

#include "pdac/error.hpp"

namespace pdac::nn {

std::string to_string(const Dim3& d) {
  return std::to_string(d.d) + "x" + std::to_string(d.h) + "x" + std::to_string(d.w);
}

std::string to_string(const Shape5& s) {
  return "[" + std::to_string(s.n) + ", " + std::to_string(s.c) + ", " + to_string(s.s) + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape5 shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.count()) {
    throw Error(ErrorKind::ShapeMismatch, "tensor payload does not match shape " + to_string(shape_));
  }
}

template <typename T>
void Tensor<T>::reshape(Shape5 shape) {
  if (shape.count() != data_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "cannot reshape " + to_string(shape_) + " to " + to_string(shape));
  }
  shape_ = shape;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace pdac::nn
