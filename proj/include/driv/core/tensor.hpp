#pragma once

#include <array>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "driv/core/error.hpp"

namespace driv {

// Dense row-major tensor of rank 1..4. Shapes are small, data is contiguous;
// hot kernels index through raw pointers, this class only owns the storage.
template <typename T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::initializer_list<int> dims, T fill = T(0)) {
    dims_.assign(dims.begin(), dims.end());
    validate();
    data_.assign(count(), fill);
  }

  explicit Tensor(const std::vector<int>& dims, T fill = T(0)) : dims_(dims) {
    validate();
    data_.assign(count(), fill);
  }

  static Tensor zeros_like(const Tensor& other) { return Tensor(other.dims_); }

  int ndim() const { return static_cast<int>(dims_.size()); }
  int dim(int i) const { return dims_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& dims() const { return dims_; }

  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const T& operator[](std::int64_t i) const {
    return data_[static_cast<std::size_t>(i)];
  }

  T& at(int i0, int i1) { return data_[idx2(i0, i1)]; }
  const T& at(int i0, int i1) const { return data_[idx2(i0, i1)]; }
  T& at(int i0, int i1, int i2) { return data_[idx3(i0, i1, i2)]; }
  const T& at(int i0, int i1, int i2) const { return data_[idx3(i0, i1, i2)]; }
  T& at(int i0, int i1, int i2, int i3) { return data_[idx4(i0, i1, i2, i3)]; }
  const T& at(int i0, int i1, int i2, int i3) const {
    return data_[idx4(i0, i1, i2, i3)];
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  bool same_shape(const Tensor& other) const { return dims_ == other.dims_; }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(dims_);
    for (std::int64_t i = 0; i < size(); ++i)
      out[i] = static_cast<U>(data_[static_cast<std::size_t>(i)]);
    return out;
  }

 private:
  void validate() const {
    if (dims_.empty() || dims_.size() > 4)
      throw ShapeError("tensor rank must be 1..4");
    for (int d : dims_)
      if (d < 0) throw ShapeError("negative tensor dimension");
  }

  std::size_t count() const {
    std::size_t n = 1;
    for (int d : dims_) n *= static_cast<std::size_t>(d);
    return n;
  }

  std::size_t idx2(int i0, int i1) const {
    return static_cast<std::size_t>(i0) * dims_[1] + i1;
  }
  std::size_t idx3(int i0, int i1, int i2) const {
    return (static_cast<std::size_t>(i0) * dims_[1] + i1) * dims_[2] + i2;
  }
  std::size_t idx4(int i0, int i1, int i2, int i3) const {
    return ((static_cast<std::size_t>(i0) * dims_[1] + i1) * dims_[2] + i2) *
               dims_[3] +
           i3;
  }

  std::vector<int> dims_;
  std::vector<T> data_;
};

}  // namespace driv
