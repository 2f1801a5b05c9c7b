// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <array>
#include <random>
#include <stdexcept>
#include <string>

#include "oppradar/waveform.hpp"

namespace oppradar::waveform {

namespace {

struct Recursion {
  std::vector<int> delays;
  std::vector<int> weights;
};

Recursion recursion_for(int length) {
  switch (length) {
    case 32:
      return {{1, 4, 8, 2, 16}, {-1, 1, -1, 1, -1}};
    case 64:
      return {{2, 1, 4, 8, 16, 32}, {1, 1, -1, -1, 1, -1}};
    case 128:
      return {{1, 8, 2, 4, 16, 32, 64}, {-1, -1, -1, -1, 1, -1, -1}};
    default:
      throw std::invalid_argument("golay_pair: unsupported length " + std::to_string(length));
  }
}

Chips negate(const Chips& c) {
  Chips out(c.size());
  std::transform(c.begin(), c.end(), out.begin(), [](std::int8_t v) { return static_cast<std::int8_t>(-v); });
  return out;
}

void append(Chips& dst, const Chips& src) { dst.insert(dst.end(), src.begin(), src.end()); }

}  // namespace

GolayPair golay_pair(int length) {
  const Recursion rec = recursion_for(length);
  // A_k(n) = W_k A_{k-1}(n) + B_{k-1}(n - D_k)
  // B_k(n) = W_k A_{k-1}(n) - B_{k-1}(n - D_k)
  std::vector<int> a(length, 0), b(length, 0);
  a[0] = 1;
  b[0] = 1;
  for (std::size_t k = 0; k < rec.delays.size(); ++k) {
    const int d = rec.delays[k];
    const int w = rec.weights[k];
    std::vector<int> na(length), nb(length);
    for (int n = 0; n < length; ++n) {
      const int shifted = n >= d ? b[n - d] : 0;
      na[n] = w * a[n] + shifted;
      nb[n] = w * a[n] - shifted;
    }
    a = std::move(na);
    b = std::move(nb);
  }
  // Transmit order is the recursion output read from the end: G(n) = A(N-1-n).
  GolayPair pair;
  pair.a.resize(length);
  pair.b.resize(length);
  for (int n = 0; n < length; ++n) {
    pair.a[n] = static_cast<std::int8_t>(a[length - 1 - n]);
    pair.b[n] = static_cast<std::int8_t>(b[length - 1 - n]);
  }
  return pair;
}

std::vector<long> aperiodic_autocorrelation(std::span<const std::int8_t> seq) {
  const std::size_t n = seq.size();
  std::vector<long> r(n, 0);
  for (std::size_t lag = 0; lag < n; ++lag) {
    long acc = 0;
    for (std::size_t i = 0; i + lag < n; ++i) acc += long{seq[i]} * long{seq[i + lag]};
    r[lag] = acc;
  }
  return r;
}

Chips control_preamble() {
  const GolayPair g = golay_pair(kGolayLength);
  const Chips na = negate(g.a);
  const Chips nb = negate(g.b);

  Chips out;
  out.reserve(kPreambleChips);
  // STF
  for (int i = 0; i < 48; ++i) append(out, g.b);
  append(out, nb);
  append(out, na);
  // CEF: Gu512 = [-Gb -Ga Gb -Ga], Gv512 = [-Gb Ga -Gb -Ga], Gv128 = -Gb
  for (const Chips* blk : {&nb, &na, &g.b, &na, &nb, &g.a, &nb, &na, &nb}) append(out, *blk);
  return out;
}

SymbolSequence SymbolSequence::build(int chip_count, std::uint64_t seed) {
  if (chip_count < kMinChips || chip_count > kMaxChips) {
    throw std::out_of_range("SymbolSequence: chip count " + std::to_string(chip_count) +
                            " outside [" + std::to_string(kMinChips) + ", " +
                            std::to_string(kMaxChips) + "]");
  }
  SymbolSequence seq;
  seq.chips_ = control_preamble();
  seq.preamble_length_ = kPreambleChips;
  seq.seed_ = seed;
  seq.chips_.reserve(chip_count);

  const Chips spreader = golay_pair(kSpreadingLength).a;
  std::mt19937_64 rng(seed);
  std::int8_t state = 1;
  while (static_cast<int>(seq.chips_.size()) < chip_count) {
    const bool bit = (rng() >> 63) != 0;
    if (bit) state = static_cast<std::int8_t>(-state);
    for (std::int8_t c : spreader) {
      if (static_cast<int>(seq.chips_.size()) == chip_count) break;
      seq.chips_.push_back(static_cast<std::int8_t>(state * c));
    }
  }
  return seq;
}

SymbolSequence SymbolSequence::from_chips(Chips chips) {
  for (std::int8_t c : chips) {
    if (c != 1 && c != -1) throw std::invalid_argument("SymbolSequence: chips must be +-1");
  }
  SymbolSequence seq;
  seq.chips_ = std::move(chips);
  return seq;
}

}  // namespace oppradar::waveform
