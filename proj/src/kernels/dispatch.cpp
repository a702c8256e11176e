// Runtime kernel selection. AVX2+FMA when the CPU has it, scalar otherwise;
// PROCOMP_FORCE_SCALAR=1 pins the reference path.

#include "procomp/kernels/kernels.hpp"

#include <cstdlib>

namespace procomp::k {

void fill_avx2(Table& t);  // defined in avx2.cpp (compiled with -mavx2 -mfma)

static Table scalar_table() {
  Table t;
  t.gemm = &scalar::gemm<float>;
  t.add = &scalar::add<float>;
  t.sub = &scalar::sub<float>;
  t.mul = &scalar::mul<float>;
  t.axpy = &scalar::axpy<float>;
  t.scale = &scalar::scale<float>;
  t.lrelu_fwd = &scalar::lrelu_fwd<float>;
  t.lrelu_bwd = &scalar::lrelu_bwd<float>;
  t.clamp01_fwd = &scalar::clamp01_fwd<float>;
  t.clamp01_bwd = &scalar::clamp01_bwd<float>;
  t.sum = &scalar::sum<float>;
  t.sum_abs_diff = &scalar::sum_abs_diff<float>;
  t.sum_sq_diff = &scalar::sum_sq_diff<float>;
  t.sign_scaled = &scalar::sign_scaled<float>;
  t.blur_h = &scalar::blur_h<float>;
  t.blur_v = &scalar::blur_v<float>;
  t.adam_step = &scalar::adam_step<float>;
  t.name = "scalar";
  return t;
}

bool cpu_has_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

static Table make_table(bool use_simd) {
  Table t = scalar_table();
  if (use_simd && cpu_has_avx2()) {
    fill_avx2(t);
    t.name = "avx2";
  }
  return t;
}

static bool env_allows_simd() {
  const char* e = std::getenv("PROCOMP_FORCE_SCALAR");
  return !(e && e[0] == '1');
}

Table tab = make_table(env_allows_simd());

const char* active_impl() { return tab.name; }

void select_impl(bool use_simd) { tab = make_table(use_simd && env_allows_simd()); }

}  // namespace procomp::k
