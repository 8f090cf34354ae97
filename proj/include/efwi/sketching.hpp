#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "efwi/types.hpp"

namespace efwi {

/// splitmix64 mixing of (master, stream, index) into an independent seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                          std::uint64_t index);

/// Random stream identifiers used with derive_seed.
namespace streams {
inline constexpr std::uint64_t sketch = 1;
inline constexpr std::uint64_t noise = 2;
}  // namespace streams

/// S = sqrt(ns / q) R C D: q distinct rows of the orthonormal DCT-II matrix
/// applied after random sign flips.
struct SketchOperator {
  int q = 0;
  int ns = 0;
  std::vector<int> rows;       ///< selected DCT rows, distinct
  std::vector<double> signs;   ///< +-1 per source
  std::uint64_t seed = 0;
  double scale = 1.0;

  /// Dense q x ns matrix.
  RealMatrix matrix() const;
};

/// Orthonormal DCT-II matrix, C(k, j) = c_k cos(pi (2j + 1) k / (2 ns)).
RealMatrix dct2_matrix(int ns);

SketchOperator draw_sketch(int ns, int q, std::uint64_t seed,
                           bool unit_signs = false);

/// Mixes source columns: X (rows x ns) -> X S^T (rows x q).
ComplexMatrix apply_sketch(const SketchOperator& S, const ComplexMatrix& columns);
/// Maps sketched columns back to sources: Y (rows x q) -> Y S (rows x ns).
ComplexMatrix lift_sketch(const SketchOperator& S, const ComplexMatrix& sketched);

struct SolveAccounting {
  long long full_solves = 0;
  long long sketched_solves = 0;
  /// 100 (1 - sketched / full).
  double measured_speedup_percent = 0.0;
};

/// Each segment is (iterations, sources solved per iteration).
SolveAccounting pde_solve_accounting(int ns,
                                     const std::vector<std::pair<int, int>>& segments);

/// (1 - q / ns) * 100 truncated to one decimal.
double sketch_speedup_percent(int q, int ns);

}  // namespace efwi
