#pragma once

#include <cstddef>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace astn::ag {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

template <typename T>
struct TensorData {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until the tensor participates in a backward pass
  bool requires_grad = false;
  bool needs_grad = false;  // requires_grad, or downstream of something that does
};

// Shared-handle tensor: copies alias the same storage, like the usual
// deep-learning convention. Scalars are shape {1}.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false) {
    Tensor t;
    t.d_ = std::make_shared<TensorData<T>>();
    t.d_->shape = std::move(shape);
    t.d_->value.assign(shape_numel(t.d_->shape), T(0));
    t.d_->requires_grad = requires_grad;
    t.d_->needs_grad = requires_grad;
    if (requires_grad) t.d_->grad.assign(t.d_->value.size(), T(0));
    return t;
  }

  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false) {
    if (shape_numel(shape) != values.size())
      throw std::invalid_argument("tensor: " + shape_str(shape) + " does not hold " +
                                  std::to_string(values.size()) + " values");
    Tensor t = zeros(std::move(shape), requires_grad);
    t.d_->value = std::move(values);
    return t;
  }

  static Tensor scalar(T v, bool requires_grad = false) {
    return from({1}, {v}, requires_grad);
  }

  bool defined() const { return d_ != nullptr; }
  const Shape& shape() const { return d_->shape; }
  std::size_t rank() const { return d_->shape.size(); }
  std::size_t dim(std::size_t i) const { return d_->shape[i]; }
  std::size_t numel() const { return d_->value.size(); }

  std::vector<T>& value() { return d_->value; }
  const std::vector<T>& value() const { return d_->value; }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool b) {
    d_->requires_grad = b;
    d_->needs_grad = b;
    if (b && d_->grad.empty()) d_->grad.assign(d_->value.size(), T(0));
  }

  bool needs_grad() const { return d_->needs_grad; }
  void mark_needs_grad() { d_->needs_grad = true; }

  bool has_grad() const { return !d_->grad.empty(); }
  std::vector<T>& grad() {
    if (d_->grad.empty()) d_->grad.assign(d_->value.size(), T(0));
    return d_->grad;
  }
  const std::vector<T>& grad() const { return d_->grad; }
  void zero_grad() {
    if (!d_->grad.empty()) d_->grad.assign(d_->value.size(), T(0));
  }

  T item() const {
    if (numel() != 1) throw std::invalid_argument("item(): tensor is not scalar");
    return d_->value[0];
  }

  TensorData<T>* data() const { return d_.get(); }
  bool same_storage(const Tensor& o) const { return d_ == o.d_; }

 private:
  std::shared_ptr<TensorData<T>> d_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace astn::ag
