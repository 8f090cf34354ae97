#pragma once

#include <vector>

#include "efwi/model.hpp"
#include "efwi/types.hpp"

namespace efwi {

/// Second-order central difference operators on a grid. Nodes outside the
/// grid are treated as zero, so the operators stay symmetric; edges are
/// always backed by an absorbing layer or traction rows at assembly time.
struct DifferenceOperators {
  GridGeometry grid;
  RealSparse dxx;  ///< [1, -2, 1] / dx^2 along x
  RealSparse dzz;  ///< [1, -2, 1] / dz^2 along z
  RealSparse dxz;  ///< cross stencil [+-1] / (4 dx dz)
};

DifferenceOperators build_difference_operators(const GridGeometry& grid);

enum class EdgeKind { Absorbing, FreeSurface };

struct BoundarySpec {
  EdgeKind top = EdgeKind::Absorbing;
  EdgeKind bottom = EdgeKind::Absorbing;
  EdgeKind left = EdgeKind::Absorbing;
  EdgeKind right = EdgeKind::Absorbing;
  int pml_width = 20;             ///< cells
  double pml_max_damping = 0.0;   ///< d0 [1/s] of the quadratic profile

  /// Throws on negative width/damping or a free surface off the top edge.
  void validate() const;
  bool free_surface() const { return top == EdgeKind::FreeSurface; }
};

/// d0 for a quadratic PML of thickness `width_m` giving a nominal normal
/// incidence reflection coefficient `reflection` at speed `vmax`.
double suggested_pml_damping(double vmax, double width_m,
                             double reflection = 1e-3);

/// Cells that lie inside an absorbing layer.
std::vector<std::uint8_t> pml_mask(const GridGeometry& grid,
                                   const BoundarySpec& bc);

/// Difference operators at one angular frequency with complex coordinate
/// stretching 1 / (1 + i d(x) / omega) folded in on absorbing edges, plus
/// first-derivative rows for the traction-free top edge when selected.
struct WaveOperators {
  GridGeometry grid;
  double omega;
  BoundarySpec bc;
  ComplexSparse dxx;
  ComplexSparse dzz;
  ComplexSparse dxz;
  /// First derivatives on top-edge rows only (zero elsewhere), scaled by
  /// 1/dz so traction rows carry the same units as interior rows.
  ComplexSparse traction_dx;
  ComplexSparse traction_dz;
  /// 1 where the row carries the wave equation, 0 on traction rows.
  RealVector interior_rows;
  /// 1 on traction rows.
  RealVector traction_rows;
};

WaveOperators stretch_operators(const DifferenceOperators& ops,
                                const BoundarySpec& bc, double omega);

/// Sparse 2n x 2n frequency-domain elastic operator A(m), unknowns stacked
/// as (ux, uz).
struct ImpedanceMatrix {
  ComplexSparse matrix;
  double omega = 0.0;
  std::uint64_t model_hash = 0;
  BoundarySpec bc;

  Index size() const { return matrix.rows(); }
};

ImpedanceMatrix assemble_impedance(const ElasticModel& model,
                                   const WaveOperators& ops);
ImpedanceMatrix assemble_impedance(const ElasticModel& model, double omega,
                                   const BoundarySpec& bc,
                                   const DifferenceOperators& ops);

/// Nearest-node receiver sampling, P = blockdiag(P~, P~).
struct SamplingOperator {
  RealSparse matrix;              ///< 2 nr x 2n
  std::vector<Index> nodes;       ///< grid index per receiver

  Index receivers() const { return Index(nodes.size()); }
  /// Direct indexing equivalent of matrix * u.
  ComplexVector sample(const ComplexVector& u) const;
};

SamplingOperator build_sampling_operator(const std::vector<Point>& receivers,
                                         const GridGeometry& grid);

/// Nearest grid node of a point; throws when the point falls off the grid.
Index nearest_node(const Point& p, const GridGeometry& grid);

/// Point forces, one per source position, with the same complex force
/// vector (fx, fz) at every source.
struct SourceSet {
  std::vector<Point> positions;
  std::vector<Index> nodes;
  Complex force_x{0.0, 0.0};
  Complex force_z{1.0, 0.0};
  ComplexMatrix b;  ///< 2n x ns

  Index count() const { return Index(nodes.size()); }
};

SourceSet build_source_set(const std::vector<Point>& positions,
                           const GridGeometry& grid, Complex force_x,
                           Complex force_z, Complex amplitude = 1.0);

/// Zero-phase Ricker amplitude spectrum 2 f^2 / (sqrt(pi) f0^3) exp(-f^2/f0^2).
Complex ricker_spectrum(double f0, double f);

}  // namespace efwi
