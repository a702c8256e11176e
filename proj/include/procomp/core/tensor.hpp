#pragma once
// Dense row-major tensor. Shape is a short dim vector; data is contiguous.
// Images are CHW float32 in [0,1]. Sampling grids are [2,H,W] with
// channel 0 = x (u) and channel 1 = y (v), align-corners normalized to [-1,1].

#include <cassert>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <vector>

namespace procomp {

template <typename T>
struct Tensor {
  std::vector<int> shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)), data(count(shape)) {}
  Tensor(std::vector<int> s, T fill) : shape(std::move(s)), data(count(shape), fill) {}

  static size_t count(const std::vector<int>& s) {
    size_t n = 1;
    for (int d : s) {
      assert(d >= 0);
      n *= static_cast<size_t>(d);
    }
    return s.empty() ? 0 : n;
  }

  size_t numel() const { return data.size(); }
  bool empty() const { return data.empty(); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<size_t>(i)]; }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  void resize(std::vector<int> s) {
    shape = std::move(s);
    data.assign(count(shape), T(0));
  }
  void zero() { std::fill(data.begin(), data.end(), T(0)); }
  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  // flat accessors
  T& operator[](size_t i) { return data[i]; }
  const T& operator[](size_t i) const { return data[i]; }

  // CHW accessors
  T& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }
  const T& at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * shape[1] + y) * shape[2] + x];
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

// Image = Tensor<float> [3,H,W]; single-channel masks/fields are [1,H,W].
inline int img_h(const TensorF& t) { return t.shape[t.ndim() - 2]; }
inline int img_w(const TensorF& t) { return t.shape[t.ndim() - 1]; }

// Trainable parameter: value + gradient of identical shape, plus a stable
// name used for serialization.
template <typename T>
struct Param {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;

  Param() = default;
  Param(std::string n, std::vector<int> s) : name(std::move(n)), value(s), grad(s) {}

  void zero_grad() { grad.zero(); }
  size_t numel() const { return value.numel(); }
};

}  // namespace procomp
