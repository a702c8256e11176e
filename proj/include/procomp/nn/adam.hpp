#pragma once
// Adam over a flat list of Param<T>*. Weight decay is the classic L2-in-the-
// gradient formulation. State (m, v, step) serializes with checkpoints so
// training can resume exactly.

#include <cmath>
#include <vector>

#include "procomp/core/tensor.hpp"
#include "procomp/kernels/kernels.hpp"

namespace procomp::nn {

template <typename T>
struct Adam {
  std::vector<Param<T>*> params;
  std::vector<Tensor<T>> m, v;
  int64_t t = 0;
  T beta1 = T(0.9), beta2 = T(0.999), eps = T(1e-8);
  T weight_decay = T(0);

  void attach(std::vector<Param<T>*> ps) {
    params = std::move(ps);
    m.clear();
    v.clear();
    for (auto* p : params) {
      m.emplace_back(p->value.shape, T(0));
      v.emplace_back(p->value.shape, T(0));
    }
    t = 0;
  }

  void zero_grad() {
    for (auto* p : params) p->zero_grad();
  }

  void step(T lr) {
    ++t;
    T bc1 = T(1) - T(std::pow((double)beta1, (double)t));
    T bc2 = T(1) - T(std::pow((double)beta2, (double)t));
    for (size_t i = 0; i < params.size(); ++i) {
      auto* p = params[i];
      k::adam_step(p->value.ptr(), p->grad.ptr(), m[i].ptr(), v[i].ptr(),
                   p->value.numel(), lr, beta1, beta2, eps, weight_decay, bc1, bc2);
    }
  }
};

}  // namespace procomp::nn
