// SPDX-License-Identifier: Apache-2.0

#include <random>
#include <vector>

#include "doctest.h"
#include "oppradar/simd/kernels.hpp"

using namespace oppradar::simd;

namespace {

std::vector<cdouble> random_vector(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<cdouble> v(n);
  for (auto& x : v) x = {g(rng), g(rng)};
  return v;
}

cdouble naive_dot(const std::vector<cdouble>& a, const std::vector<cdouble>& b) {
  cdouble s;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

struct LevelGuard {
  Level saved = active_level();
  ~LevelGuard() { set_active_level(saved); }
};

}  // namespace

TEST_CASE("scalar kernels match a naive loop") {
  std::mt19937_64 rng(1);
  for (std::size_t n : {0u, 1u, 2u, 3u, 7u, 64u, 513u}) {
    const auto a = random_vector(n, rng), b = random_vector(n, rng);
    const cdouble ref = naive_dot(a, b);
    CHECK(std::abs(scalar::cdot(a.data(), b.data(), n) - ref) <= 1e-12 * (1.0 + std::abs(ref)));
    CHECK(scalar::norm2(a.data(), n) == doctest::Approx(naive_dot(a, a).real()).epsilon(1e-13));
  }
}

#ifdef OPPRADAR_HAVE_AVX2_KERNELS
TEST_CASE("avx2 kernels are equivalent to the scalar reference") {
  if (detected_level() != Level::avx2) {
    MESSAGE("CPU without AVX2/FMA, skipping");
    return;
  }
  std::mt19937_64 rng(2);
  for (std::size_t n = 0; n < 40; ++n) {
    const auto a = random_vector(n, rng), b = random_vector(n, rng);
    const cdouble s = scalar::cdot(a.data(), b.data(), n);
    const cdouble v = avx2::cdot(a.data(), b.data(), n);
    CHECK(std::abs(s - v) <= 1e-12 * (1.0 + std::abs(s)));
    CHECK(avx2::norm2(a.data(), n) == doctest::Approx(scalar::norm2(a.data(), n)).epsilon(1e-13));

    auto ys = b, yv = b;
    const cdouble alpha{0.3, -1.7};
    scalar::caxpy(alpha, a.data(), ys.data(), n);
    avx2::caxpy(alpha, a.data(), yv.data(), n);
    for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(ys[i] - yv[i]) <= 1e-13 * (1.0 + std::abs(ys[i])));
  }
}
#endif

TEST_CASE("dispatch level can be forced to scalar and back") {
  LevelGuard guard;
  CHECK(set_active_level(Level::scalar) == Level::scalar);
  CHECK(active_level() == Level::scalar);
  CHECK(set_active_level(Level::avx2) == detected_level());
  CHECK(to_string(Level::scalar) == "scalar");
}

TEST_CASE("matrix kernels agree across levels and with a naive product") {
  LevelGuard guard;
  std::mt19937_64 rng(3);
  const std::size_t rows = 37, a_cols = 5, b_cols = 3, ld = 41;
  auto bank = random_vector(ld * a_cols, rng);
  const auto b = random_vector(rows * b_cols, rng);
  const auto v = random_vector(rows, rng);
  for (Level level : {Level::scalar, Level::avx2}) {
    set_active_level(level);
    std::vector<cdouble> out(a_cols);
    cgemv_adjoint(bank.data(), rows, a_cols, ld, v, out);
    for (std::size_t j = 0; j < a_cols; ++j) {
      cdouble ref;
      for (std::size_t i = 0; i < rows; ++i) ref += std::conj(bank[j * ld + i]) * v[i];
      CHECK(std::abs(out[j] - ref) < 1e-12);
    }
    std::vector<cdouble> packed(rows * a_cols), prod(a_cols * b_cols);
    for (std::size_t j = 0; j < a_cols; ++j) {
      for (std::size_t i = 0; i < rows; ++i) packed[j * rows + i] = bank[j * ld + i];
    }
    cgemm_adjoint(packed.data(), a_cols, b.data(), b_cols, rows, prod.data());
    for (std::size_t j = 0; j < b_cols; ++j) {
      for (std::size_t k = 0; k < a_cols; ++k) {
        cdouble ref;
        for (std::size_t i = 0; i < rows; ++i) ref += std::conj(packed[k * rows + i]) * b[j * rows + i];
        CHECK(std::abs(prod[j * a_cols + k] - ref) < 1e-12);
      }
    }
  }
}

TEST_CASE("shape mismatch is rejected") {
  std::vector<cdouble> a(3), out(2);
  CHECK_THROWS_AS(cdot(a, std::span<const cdouble>(a.data(), 2)), std::invalid_argument);
  CHECK_THROWS_AS(cgemv_adjoint(a.data(), 3, 1, 3, a, out), std::invalid_argument);
}
