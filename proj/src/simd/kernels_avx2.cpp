// SPDX-License-Identifier: Apache-2.0
//
// AVX2/FMA kernels. This translation unit is compiled with -mavx2 -mfma and
// must only be entered after the dispatcher has confirmed CPU support.
//
// std::complex<double> is stored as {re, im}, so one __m256d holds two
// complex values: [r0 i0 r1 i1].

#include "oppradar/simd/kernels.hpp"

#include <immintrin.h>

namespace oppradar::simd::avx2 {

namespace {

inline double hsum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

// lanes [x0 x1 x2 x3] -> x0 - x1 + x2 - x3
inline double alt_sum(__m256d v) {
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);
  return _mm_cvtsd_f64(_mm_sub_sd(s, _mm_unpackhi_pd(s, s)));
}

}  // namespace

cdouble cdot(const cdouble* a, const cdouble* b, std::size_t n) {
  const double* pa = reinterpret_cast<const double*>(a);
  const double* pb = reinterpret_cast<const double*>(b);

  // direct: ar*br, ai*bi   (sum -> real part)
  // cross:  ar*bi, ai*br   (alternating sum -> imaginary part)
  __m256d direct0 = _mm256_setzero_pd(), direct1 = _mm256_setzero_pd();
  __m256d cross0 = _mm256_setzero_pd(), cross1 = _mm256_setzero_pd();

  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d va0 = _mm256_loadu_pd(pa + 2 * i);
    const __m256d vb0 = _mm256_loadu_pd(pb + 2 * i);
    const __m256d va1 = _mm256_loadu_pd(pa + 2 * i + 4);
    const __m256d vb1 = _mm256_loadu_pd(pb + 2 * i + 4);
    direct0 = _mm256_fmadd_pd(va0, vb0, direct0);
    direct1 = _mm256_fmadd_pd(va1, vb1, direct1);
    cross0 = _mm256_fmadd_pd(va0, _mm256_permute_pd(vb0, 0b0101), cross0);
    cross1 = _mm256_fmadd_pd(va1, _mm256_permute_pd(vb1, 0b0101), cross1);
  }
  for (; i + 2 <= n; i += 2) {
    const __m256d va = _mm256_loadu_pd(pa + 2 * i);
    const __m256d vb = _mm256_loadu_pd(pb + 2 * i);
    direct0 = _mm256_fmadd_pd(va, vb, direct0);
    cross0 = _mm256_fmadd_pd(va, _mm256_permute_pd(vb, 0b0101), cross0);
  }
  double re = hsum(_mm256_add_pd(direct0, direct1));
  double im = alt_sum(_mm256_add_pd(cross0, cross1));
  for (; i < n; ++i) {
    re += a[i].real() * b[i].real() + a[i].imag() * b[i].imag();
    im += a[i].real() * b[i].imag() - a[i].imag() * b[i].real();
  }
  return {re, im};
}

double norm2(const cdouble* a, std::size_t n) {
  const double* pa = reinterpret_cast<const double*>(a);
  __m256d acc0 = _mm256_setzero_pd(), acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v0 = _mm256_loadu_pd(pa + 2 * i);
    const __m256d v1 = _mm256_loadu_pd(pa + 2 * i + 4);
    acc0 = _mm256_fmadd_pd(v0, v0, acc0);
    acc1 = _mm256_fmadd_pd(v1, v1, acc1);
  }
  for (; i + 2 <= n; i += 2) {
    const __m256d v = _mm256_loadu_pd(pa + 2 * i);
    acc0 = _mm256_fmadd_pd(v, v, acc0);
  }
  double acc = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) acc += std::norm(a[i]);
  return acc;
}

void caxpy(cdouble alpha, const cdouble* x, cdouble* y, std::size_t n) {
  const double* px = reinterpret_cast<const double*>(x);
  double* py = reinterpret_cast<double*>(y);
  const __m256d ar = _mm256_set1_pd(alpha.real());
  // [-ai +ai -ai +ai] applied to swapped x gives the imaginary cross terms.
  const __m256d ai = _mm256_setr_pd(-alpha.imag(), alpha.imag(), -alpha.imag(),
                                    alpha.imag());
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    const __m256d vx = _mm256_loadu_pd(px + 2 * i);
    __m256d vy = _mm256_loadu_pd(py + 2 * i);
    vy = _mm256_fmadd_pd(ar, vx, vy);
    vy = _mm256_fmadd_pd(ai, _mm256_permute_pd(vx, 0b0101), vy);
    _mm256_storeu_pd(py + 2 * i, vy);
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

}  // namespace oppradar::simd::avx2
