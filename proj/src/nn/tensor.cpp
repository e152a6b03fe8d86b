#include "stepcount/nn/tensor.h"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "stepcount/errors.h"

namespace stepcount::nn {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream ss;
  ss << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) ss << (i ? "," : "") << shape[i];
  ss << ')';
  return ss.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
bool Tensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

template <typename T>
Var Tape<T>::constant(Tensor<T> value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::parameter(Parameter<T>& p) {
  Node n;
  n.value = p.value;
  n.requires_grad = true;
  n.param = &p;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Var Tape<T>::record(Tensor<T> value, std::initializer_list<Var> inputs, BackwardFn backward) {
  if (check_finite_ && !value.all_finite()) {
    throw std::runtime_error("non-finite value produced at tape node " + std::to_string(nodes_.size()));
  }
  Node n;
  n.value = std::move(value);
  for (Var v : inputs) n.requires_grad = n.requires_grad || nodes_.at(v.id).requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

template <typename T>
Tensor<T>& Tape<T>::grad(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.size() != n.value.size()) n.grad = Tensor<T>(n.value.shape());
  return n.grad;
}

template <typename T>
void Tape<T>::backward(Var out) {
  if (value(out).size() != 1) throw ShapeError("backward() needs a scalar output");
  grad(out).fill(T(1));
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) n.backward(*this, Var{i});
    if (n.param != nullptr) {
      auto& dst = n.param->grad;
      if (dst.size() != n.grad.size()) dst = Tensor<T>(n.param->value.shape());
      for (std::size_t k = 0; k < dst.size(); ++k) dst[k] += n.grad[k];
    }
  }
}

template <typename T>
void Tape<T>::clear() {
  nodes_.clear();
}

template class Tensor<float>;
template class Tensor<double>;
template class Tape<float>;
template class Tape<double>;

}  // namespace stepcount::nn
