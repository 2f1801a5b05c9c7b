// SPDX-License-Identifier: Apache-2.0

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "oppradar/simd/kernels.hpp"

namespace oppradar::simd {

namespace {

struct KernelTable {
  cdouble (*cdot)(const cdouble*, const cdouble*, std::size_t);
  double (*norm2)(const cdouble*, std::size_t);
  void (*caxpy)(cdouble, const cdouble*, cdouble*, std::size_t);
};

constexpr KernelTable kScalarTable{&scalar::cdot, &scalar::norm2,
                                   &scalar::caxpy};
#ifdef OPPRADAR_HAVE_AVX2_KERNELS
constexpr KernelTable kAvx2Table{&avx2::cdot, &avx2::norm2, &avx2::caxpy};
#endif

const KernelTable& table_for(Level level) {
#ifdef OPPRADAR_HAVE_AVX2_KERNELS
  if (level == Level::avx2) return kAvx2Table;
#endif
  return kScalarTable;
}

Level probe_cpu() {
#if defined(OPPRADAR_HAVE_AVX2_KERNELS) && defined(__GNUC__)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    return Level::avx2;
  }
#endif
  return Level::scalar;
}

Level initial_level() {
  const Level cpu = probe_cpu();
  if (const char* env = std::getenv("OPPRADAR_SIMD")) {
    if (std::string(env) == "scalar") return Level::scalar;
  }
  return cpu;
}

std::atomic<Level>& current() {
  static std::atomic<Level> level{initial_level()};
  return level;
}

const KernelTable& active() { return table_for(current().load(std::memory_order_relaxed)); }

}  // namespace

std::string_view to_string(Level level) {
  switch (level) {
    case Level::scalar:
      return "scalar";
    case Level::avx2:
      return "avx2";
  }
  return "unknown";
}

Level detected_level() {
  static const Level cpu = probe_cpu();
  return cpu;
}

Level active_level() { return current().load(); }

Level set_active_level(Level level) {
  if (level == Level::avx2 && detected_level() != Level::avx2) level = Level::scalar;
  current().store(level);
  return level;
}

cdouble cdot(std::span<const cdouble> a, std::span<const cdouble> b) {
  if (a.size() != b.size()) throw std::invalid_argument("cdot: length mismatch");
  return active().cdot(a.data(), b.data(), a.size());
}

double norm2(std::span<const cdouble> a) { return active().norm2(a.data(), a.size()); }

void caxpy(cdouble alpha, std::span<const cdouble> x, std::span<cdouble> y) {
  if (x.size() != y.size()) throw std::invalid_argument("caxpy: length mismatch");
  active().caxpy(alpha, x.data(), y.data(), x.size());
}

void cgemv_adjoint(const cdouble* bank, std::size_t rows, std::size_t cols,
                   std::size_t ld, std::span<const cdouble> v,
                   std::span<cdouble> out) {
  if (v.size() != rows || out.size() != cols) {
    throw std::invalid_argument("cgemv_adjoint: shape mismatch");
  }
  const auto& k = active();
  for (std::size_t j = 0; j < cols; ++j) out[j] = k.cdot(bank + j * ld, v.data(), rows);
}

void cgemm_adjoint(const cdouble* a, std::size_t a_cols, const cdouble* b,
                   std::size_t b_cols, std::size_t rows, cdouble* out) {
  const auto& k = active();
  for (std::size_t j = 0; j < b_cols; ++j) {
    for (std::size_t i = 0; i < a_cols; ++i) {
      out[j * a_cols + i] = k.cdot(a + i * rows, b + j * rows, rows);
    }
  }
}

}  // namespace oppradar::simd
