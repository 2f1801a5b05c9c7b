// SPDX-License-Identifier: Apache-2.0
//
// Complex inner-product kernels used by every hot loop in the library
// (matched filtering, interference projection, windowed correlation).
//
// Each kernel has a scalar reference implementation and an AVX2/FMA variant.
// The variant is picked once at runtime from CPUID; OPPRADAR_SIMD=scalar in
// the environment forces the reference path. All variants take the same
// arguments and are tested for equivalence against the scalar code.

#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string_view>

namespace oppradar::simd {

using cdouble = std::complex<double>;

enum class Level { scalar, avx2 };

std::string_view to_string(Level level);

/// Best level the running CPU supports.
Level detected_level();

/// Level currently used by the dispatching entry points.
Level active_level();

/// Overrides the dispatch level. Requests above detected_level() are clamped.
/// Returns the level actually installed.
Level set_active_level(Level level);

/// sum_i conj(a[i]) * b[i]. Spans must have equal length.
cdouble cdot(std::span<const cdouble> a, std::span<const cdouble> b);

/// sum_i |a[i]|^2
double norm2(std::span<const cdouble> a);

/// y += alpha * x
void caxpy(cdouble alpha, std::span<const cdouble> x, std::span<cdouble> y);

/// out[j] = column_j^H v for a column-major bank with leading dimension ld.
void cgemv_adjoint(const cdouble* bank, std::size_t rows, std::size_t cols,
                   std::size_t ld, std::span<const cdouble> v,
                   std::span<cdouble> out);

/// out(k, j) = a_k^H b_j, both column-major with `rows` rows; out is
/// column-major a_cols x b_cols.
void cgemm_adjoint(const cdouble* a, std::size_t a_cols, const cdouble* b,
                   std::size_t b_cols, std::size_t rows, cdouble* out);

namespace scalar {
cdouble cdot(const cdouble* a, const cdouble* b, std::size_t n);
double norm2(const cdouble* a, std::size_t n);
void caxpy(cdouble alpha, const cdouble* x, cdouble* y, std::size_t n);
}  // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define OPPRADAR_HAVE_AVX2_KERNELS 1
namespace avx2 {
cdouble cdot(const cdouble* a, const cdouble* b, std::size_t n);
double norm2(const cdouble* a, std::size_t n);
void caxpy(cdouble alpha, const cdouble* x, cdouble* y, std::size_t n);
}  // namespace avx2
#endif

}  // namespace oppradar::simd
