#include "efwi/sketching.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <string>

namespace efwi {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Unbiased integer in [0, bound) by rejection; portable across standard
// libraries, unlike std::uniform_int_distribution.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % bound;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                          std::uint64_t index) {
  std::uint64_t state = master;
  std::uint64_t h = splitmix64(state);
  state = h ^ stream;
  h = splitmix64(state);
  state = h ^ index;
  return splitmix64(state);
}

RealMatrix dct2_matrix(int ns) {
  if (ns < 1) throw Error("dct2_matrix: size must be positive");
  RealMatrix c(ns, ns);
  for (int k = 0; k < ns; ++k) {
    const double ck = std::sqrt((k == 0 ? 1.0 : 2.0) / ns);
    for (int j = 0; j < ns; ++j) {
      c(k, j) = ck * std::cos(std::numbers::pi * (2.0 * j + 1.0) * k / (2.0 * ns));
    }
  }
  return c;
}

RealMatrix SketchOperator::matrix() const {
  const RealMatrix c = dct2_matrix(ns);
  RealMatrix s(q, ns);
  for (int r = 0; r < q; ++r) {
    for (int j = 0; j < ns; ++j) s(r, j) = scale * c(rows[std::size_t(r)], j) * signs[std::size_t(j)];
  }
  return s;
}

SketchOperator draw_sketch(int ns, int q, std::uint64_t seed, bool unit_signs) {
  if (ns < 1 || q < 1 || q > ns) {
    throw Error("draw_sketch: need 1 <= q <= ns (q=" + std::to_string(q) +
                ", ns=" + std::to_string(ns) + ")");
  }
  std::mt19937_64 rng(seed);
  std::vector<int> perm(static_cast<std::size_t>(ns));
  std::iota(perm.begin(), perm.end(), 0);
  // Partial Fisher-Yates: the first q entries are a uniform sample.
  for (int i = 0; i < q; ++i) {
    const auto j = i + int(bounded(rng, std::uint64_t(ns - i)));
    std::swap(perm[std::size_t(i)], perm[std::size_t(j)]);
  }
  SketchOperator s;
  s.q = q;
  s.ns = ns;
  s.seed = seed;
  s.scale = std::sqrt(double(ns) / q);
  s.rows.assign(perm.begin(), perm.begin() + q);
  s.signs.resize(std::size_t(ns));
  for (auto& v : s.signs) v = unit_signs ? 1.0 : ((rng() >> 63) ? -1.0 : 1.0);
  return s;
}

ComplexMatrix apply_sketch(const SketchOperator& S, const ComplexMatrix& columns) {
  if (columns.cols() != S.ns) {
    throw Error("apply_sketch: expected " + std::to_string(S.ns) + " columns, got " +
                std::to_string(columns.cols()));
  }
  return columns * S.matrix().transpose().cast<Complex>();
}

ComplexMatrix lift_sketch(const SketchOperator& S, const ComplexMatrix& sketched) {
  if (sketched.cols() != S.q) throw Error("lift_sketch: column count must equal q");
  return sketched * S.matrix().cast<Complex>();
}

SolveAccounting pde_solve_accounting(int ns,
                                     const std::vector<std::pair<int, int>>& segments) {
  if (ns < 1) throw Error("pde_solve_accounting: ns must be positive");
  SolveAccounting a;
  for (const auto& [iterations, q] : segments) {
    if (iterations < 0 || q < 1 || q > ns) {
      throw Error("pde_solve_accounting: invalid segment");
    }
    a.full_solves += 1LL * iterations * ns;
    a.sketched_solves += 1LL * iterations * q;
  }
  if (a.full_solves > 0) {
    a.measured_speedup_percent =
        100.0 * (1.0 - double(a.sketched_solves) / double(a.full_solves));
  }
  return a;
}

double sketch_speedup_percent(int q, int ns) {
  if (ns < 1 || q < 0 || q > ns) throw Error("sketch_speedup_percent: invalid q");
  // Integer arithmetic keeps the truncation exact: floor(1000 (ns - q) / ns) / 10.
  const long long tenths = 1000LL * (ns - q) / ns;
  return double(tenths) / 10.0;
}

}  // namespace efwi
