#include <doctest.h>

#include <chrono>
#include <cmath>
#include <vector>

#include "procomp/core/rng.hpp"
#include "procomp/nn/gradcheck.hpp"
#include "procomp/photo/photo.hpp"

using namespace procomp;

namespace {

template <typename T>
void fill_rand(Tensor<T>& t, Rng& rng, double lo = 0, double hi = 1) {
  for (auto& v : t.data) v = T(rng.uniform(lo, hi));
}

template <typename T>
double dot(const Tensor<T>& a, const Tensor<T>& r) {
  double s = 0;
  for (size_t i = 0; i < a.numel(); ++i) s += (double)a[i] * (double)r[i];
  return s;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0;
  for (size_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs((double)a[i] - (double)b[i]));
  return m;
}

}  // namespace

TEST_CASE("trimmed net reproduces the full net on fixed surface") {
  Rng rng(301);
  photo::PhotometricNet<float> net;
  net.init(rng);
  TensorF surf({3, 16, 16});
  fill_rand(surf, rng);
  auto trimmed = photo::trim_surface_branch(net, surf);

  net.forward_surface(surf);
  for (int i = 0; i < 10; ++i) {
    TensorF x({3, 16, 16}), yf, yt;
    fill_rand(x, rng);
    net.forward(x, yf);
    trimmed.forward(x, yt);
    CHECK(max_abs_diff(yf, yt) <= 1e-5);
  }
}

TEST_CASE("compensation output is hard-clamped to [0,1]") {
  Rng rng(302);
  photo::PhotometricNet<float> net;
  net.init(rng);
  // inflate a few weights so the pre-clamp value swings far outside [0,1]
  for (auto& v : net.bb.cf.w.value.data) v *= 6.0f;
  TensorF surf({3, 16, 16}), x({3, 16, 16}), y;
  fill_rand(surf, rng);
  fill_rand(x, rng);
  net.forward_surface(surf);
  net.forward(x, y);
  bool saturated_low = false, saturated_high = false;
  for (auto v : y.data) {
    CHECK(v >= 0.0f);
    CHECK(v <= 1.0f);
    if (v == 0.0f) saturated_low = true;
    if (v == 1.0f) saturated_high = true;
  }
  // with inflated weights both clamp rails should actually engage
  CHECK(saturated_low);
  CHECK(saturated_high);
}

TEST_CASE("size validation: divisibility and input/surface agreement") {
  Rng rng(303);
  photo::PhotometricNet<float> net;
  net.init(rng);
  TensorF bad({3, 10, 10}), good({3, 16, 16}), other({3, 20, 20}), y;
  fill_rand(bad, rng);
  fill_rand(good, rng);
  fill_rand(other, rng);
  CHECK_THROWS(net.forward_surface(bad));
  net.forward_surface(good);
  CHECK_THROWS(net.forward(other, y));
  CHECK_NOTHROW(net.forward(good, y));
}

TEST_CASE("fully convolutional: the same net runs at doubled resolution") {
  Rng rng(304);
  photo::PhotometricNet<float> net;
  net.init(rng);
  for (int n : {16, 32}) {
    TensorF surf({3, n, n}), x({3, n, n}), y;
    fill_rand(surf, rng);
    fill_rand(x, rng);
    net.forward_surface(surf);
    net.forward(x, y);
    REQUIRE(y.shape == std::vector<int>{3, n, n});
  }
}

TEST_CASE("trimmed path holds strictly less resident memory") {
  Rng rng(305);
  photo::PhotometricNet<float> net;
  net.init(rng);
  TensorF surf({3, 32, 32});
  fill_rand(surf, rng);
  auto trimmed = photo::trim_surface_branch(net, surf);
  size_t t = trimmed.resident_floats();
  size_t u = photo::untrimmed_resident_floats(net);
  MESSAGE("resident floats: trimmed ", t, " vs untrimmed ", u);
  CHECK(t < u);
}

TEST_CASE("trimmed inference is faster than running the surface branch") {
  Rng rng(306);
  photo::PhotometricNet<float> net;
  net.init(rng);
  TensorF surf({3, 128, 128}), x({3, 128, 128}), y;
  fill_rand(surf, rng);
  fill_rand(x, rng);
  auto trimmed = photo::trim_surface_branch(net, surf);
  net.forward_surface(surf);
  net.forward(x, y);  // warm-up
  trimmed.forward(x, y);

  using clk = std::chrono::steady_clock;
  auto time_best = [&](auto&& fn) {
    double best = 1e30;
    for (int r = 0; r < 5; ++r) {
      auto t0 = clk::now();
      fn();
      best = std::min(best, std::chrono::duration<double>(clk::now() - t0).count());
    }
    return best;
  };
  // untrimmed inference reruns the surface branch for its scene
  double t_untrimmed = time_best([&] {
    net.forward_surface(surf);
    net.forward(x, y);
  });
  double t_trimmed = time_best([&] { trimmed.forward(x, y); });
  MESSAGE("inference: untrimmed ", t_untrimmed * 1e3, " ms, trimmed ",
          t_trimmed * 1e3, " ms");
  CHECK(t_trimmed < t_untrimmed);
}

TEST_CASE("photometric net gradients match finite differences") {
  Rng rng(307);
  photo::PhotometricNet<double> net;
  net.init(rng);
  // soften the init so activations stay in a smooth regime
  for (auto* p : net.params())
    for (auto& v : p->value.data) v *= 0.5;
  Param<double> x("x", {3, 8, 8}), s("s", {3, 8, 8});
  fill_rand(x.value, rng, 0.25, 0.75);
  fill_rand(s.value, rng, 0.25, 0.75);
  Tensor<double> y, r({3, 8, 8});
  fill_rand(r, rng, -1, 1);

  auto fwd = [&] {
    net.forward_surface(s.value);
    net.forward(x.value, y);
    return dot(y, r);
  };
  auto back = [&] {
    for (auto* p : net.params()) p->zero_grad();
    x.zero_grad();
    s.zero_grad();
    net.forward_surface(s.value);
    net.forward(x.value, y);
    Tensor<double> dx, ds;
    net.backward(x.value, r, &dx);
    net.surface_backward(&ds);
    x.grad.data = dx.data;
    s.grad.data = ds.data;
  };
  auto params = net.params();
  params.push_back(&x);
  params.push_back(&s);
  auto rep = nn::grad_check<double>(fwd, back, params, 1e-7, 10, rng, 1e-6);
  CHECK(rep.max_rel_err <= 1e-3);
}
