#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hupa::nn {

/// Storage aligned for full-width SIMD. Vectorized Eigen reductions peel
/// differently depending on the start address, so a fixed alignment keeps
/// float results bitwise reproducible across allocations.
template <class T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

/// Dense row-major tensor.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape, T fill = T(0))
      : shape_(std::move(shape)), data_(count(shape_), fill) {}
  Tensor(std::vector<int> shape, AlignedVector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (data_.size() != count(shape_)) throw std::invalid_argument("tensor data does not match shape");
  }
  Tensor(std::vector<int> shape, const std::vector<T>& data)
      : Tensor(std::move(shape), AlignedVector<T>(data.begin(), data.end())) {}

  static std::size_t count(const std::vector<int>& shape) {
    std::size_t n = 1;
    for (int d : shape) {
      if (d < 0) throw std::invalid_argument("negative tensor dimension");
      n *= static_cast<std::size_t>(d);
    }
    return n;
  }

  const std::vector<int>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::size_t size() const { return data_.size(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  AlignedVector<T>& vec() { return data_; }
  const AlignedVector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  Tensor reshaped(std::vector<int> shape) const {
    if (count(shape) != data_.size()) throw std::invalid_argument("reshape changes element count");
    return Tensor(std::move(shape), data_);
  }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, AlignedVector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<int> shape_;
  AlignedVector<T> data_;
};

inline std::string shape_string(const std::vector<int>& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
  return s + "]";
}

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

/// Ordered collection of named parameters with matching gradient buffers.
template <class T>
class ParamSet {
 public:
  int add(std::string name, std::vector<int> shape) {
    for (const auto& p : params_)
      if (p.name == name) throw std::invalid_argument("duplicate parameter " + name);
    Tensor<T> value(shape);
    Tensor<T> grad(std::move(shape));
    params_.push_back({std::move(name), std::move(value), std::move(grad)});
    return static_cast<int>(params_.size()) - 1;
  }

  Parameter<T>& operator[](int id) { return params_[static_cast<std::size_t>(id)]; }
  const Parameter<T>& operator[](int id) const { return params_[static_cast<std::size_t>(id)]; }
  T* value(int id) { return (*this)[id].value.data(); }
  const T* value(int id) const { return (*this)[id].value.data(); }
  T* grad(int id) { return (*this)[id].grad.data(); }

  int find(std::string_view name) const {
    for (std::size_t i = 0; i < params_.size(); ++i)
      if (params_[i].name == name) return static_cast<int>(i);
    return -1;
  }

  int count() const { return static_cast<int>(params_.size()); }
  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad() {
    for (auto& p : params_) p.grad.fill(T(0));
  }

  /// All values (or gradients) concatenated in parameter order.
  std::vector<T> flat_values() const { return flatten(&Parameter<T>::value); }
  std::vector<T> flat_grads() const { return flatten(&Parameter<T>::grad); }
  void set_flat_values(std::span<const T> flat) {
    if (flat.size() != total_size()) throw std::invalid_argument("flat parameter size mismatch");
    std::size_t off = 0;
    for (auto& p : params_) {
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), p.value.size(), p.value.data());
      off += p.value.size();
    }
  }

  /// Same layout and values at another precision (gradients zeroed).
  template <class U>
  ParamSet<U> cast() const {
    ParamSet<U> out;
    for (const auto& p : params_) {
      const int id = out.add(p.name, p.value.shape());
      out[id].value = p.value.template cast<U>();
    }
    return out;
  }

 private:
  std::vector<T> flatten(Tensor<T> Parameter<T>::*member) const {
    std::vector<T> out;
    out.reserve(total_size());
    for (const auto& p : params_) out.insert(out.end(), (p.*member).vec().begin(), (p.*member).vec().end());
    return out;
  }

  std::vector<Parameter<T>> params_;
};

}  // namespace hupa::nn
