#pragma once
// Central finite-difference gradient verification for the explicit backward
// passes. Meant to run on the double instantiation of the layers; the returned
// figure is max over sampled coordinates of
//   |analytic - central_difference| / (|central_difference| + 1e-8).

#include <functional>
#include <stdexcept>
#include <vector>

#include "procomp/core/rng.hpp"
#include "procomp/core/tensor.hpp"

namespace procomp::nn {

struct GradCheckReport {
  double max_rel_err = 0;
  double worst_analytic = 0, worst_numeric = 0;
  size_t coords_checked = 0;
};

// fwd: evaluates the scalar objective from current param values.
// backprop: zeroes grads, runs forward+backward, leaves d(objective)/d(param)
// in each param's grad.
// abs_gate: coordinates where analytic and numeric agree within this absolute
// margin are counted as passing regardless of the relative figure. Zero (the
// default) keeps the pure relative criterion; deep compositions set a small
// gate because central differences bottom out near the round-off floor for
// gradients that are themselves tiny.
template <typename T>
GradCheckReport grad_check(const std::function<double()>& fwd,
                           const std::function<void()>& backprop,
                           const std::vector<Param<T>*>& params, double eps,
                           int max_coords_per_param, Rng& rng,
                           double abs_gate = 0.0) {
  // determinism gate: an objective that doesn't reproduce itself can't be
  // finite-differenced
  double f0 = fwd();
  if (fwd() != f0) throw std::runtime_error("grad_check: objective is not deterministic");

  backprop();
  std::vector<std::vector<T>> saved;
  for (auto* p : params) saved.push_back(p->grad.data);

  GradCheckReport rep;
  for (size_t pi = 0; pi < params.size(); ++pi) {
    auto* p = params[pi];
    size_t n = p->value.numel();
    std::vector<size_t> coords;
    if ((int)n <= max_coords_per_param) {
      coords.resize(n);
      for (size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      for (int i = 0; i < max_coords_per_param; ++i)
        coords.push_back(rng.below(n));
    }
    for (size_t c : coords) {
      T orig = p->value[c];
      p->value[c] = orig + T(eps);
      double fp = fwd();
      p->value[c] = orig - T(eps);
      double fm = fwd();
      p->value[c] = orig;
      double num = (fp - fm) / (2 * eps);
      double ana = (double)saved[pi][c];
      double rel = std::abs(ana - num) / (std::abs(num) + 1e-8);
      if (std::abs(ana - num) <= abs_gate) rel = 0;
      ++rep.coords_checked;
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_analytic = ana;
        rep.worst_numeric = num;
      }
    }
  }
  return rep;
}

}  // namespace procomp::nn
