#include "efwi/discretization.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace efwi {

namespace {

using RealTriplet = Eigen::Triplet<double>;
using ComplexTriplet = Eigen::Triplet<Complex>;

template <typename Scalar>
void append_block(std::vector<Eigen::Triplet<Scalar>>& out,
                  const Eigen::SparseMatrix<Scalar>& block, Index row0,
                  Index col0) {
  for (Index k = 0; k < block.outerSize(); ++k) {
    for (typename Eigen::SparseMatrix<Scalar>::InnerIterator it(block, k); it;
         ++it) {
      out.emplace_back(row0 + it.row(), col0 + it.col(), it.value());
    }
  }
}

// Quadratic damping profile sampled at fractional node position `pos` along
// an axis with `count` nodes; `low`/`high` select which ends absorb.
double damping_at(double pos, int count, int width, double d0, bool low,
                  bool high) {
  if (width <= 0) return 0.0;
  double depth = 0.0;
  if (low && pos < width) depth = (width - pos) / width;
  const double edge = count - 1 - width;
  if (high && pos > edge) depth = std::max(depth, (pos - edge) / width);
  return d0 * depth * depth;
}

}  // namespace

DifferenceOperators build_difference_operators(const GridGeometry& grid) {
  const Index n = grid.size();
  const int nz = grid.nz();
  const int nx = grid.nx();
  const double cx = 1.0 / (grid.dx() * grid.dx());
  const double cz = 1.0 / (grid.dz() * grid.dz());
  const double cxz = 1.0 / (4.0 * grid.dx() * grid.dz());

  std::vector<RealTriplet> txx, tzz, txz;
  txx.reserve(3 * n);
  tzz.reserve(3 * n);
  txz.reserve(4 * n);
  for (int ix = 0; ix < nx; ++ix) {
    for (int iz = 0; iz < nz; ++iz) {
      const Index i = grid.index(iz, ix);
      txx.emplace_back(i, i, -2.0 * cx);
      if (ix > 0) txx.emplace_back(i, grid.index(iz, ix - 1), cx);
      if (ix < nx - 1) txx.emplace_back(i, grid.index(iz, ix + 1), cx);
      tzz.emplace_back(i, i, -2.0 * cz);
      if (iz > 0) tzz.emplace_back(i, grid.index(iz - 1, ix), cz);
      if (iz < nz - 1) tzz.emplace_back(i, grid.index(iz + 1, ix), cz);
      for (int sx : {-1, 1}) {
        for (int sz : {-1, 1}) {
          const int jx = ix + sx;
          const int jz = iz + sz;
          if (jx < 0 || jx >= nx || jz < 0 || jz >= nz) continue;
          txz.emplace_back(i, grid.index(jz, jx), double(sx * sz) * cxz);
        }
      }
    }
  }
  DifferenceOperators ops{grid, RealSparse(n, n), RealSparse(n, n),
                          RealSparse(n, n)};
  ops.dxx.setFromTriplets(txx.begin(), txx.end());
  ops.dzz.setFromTriplets(tzz.begin(), tzz.end());
  ops.dxz.setFromTriplets(txz.begin(), txz.end());
  return ops;
}

void BoundarySpec::validate() const {
  if (pml_width < 0) throw Error("pml_width must be >= 0");
  if (pml_max_damping < 0.0) throw Error("pml_max_damping must be >= 0");
  if (bottom == EdgeKind::FreeSurface || left == EdgeKind::FreeSurface ||
      right == EdgeKind::FreeSurface) {
    throw Error("a free surface is only supported on the top edge");
  }
}

double suggested_pml_damping(double vmax, double width_m, double reflection) {
  if (!(width_m > 0.0)) return 0.0;
  return 3.0 * vmax * std::log(1.0 / reflection) / (2.0 * width_m);
}

std::vector<std::uint8_t> pml_mask(const GridGeometry& grid,
                                   const BoundarySpec& bc) {
  std::vector<std::uint8_t> mask(std::size_t(grid.size()), 0);
  const int w = bc.pml_width;
  for (int ix = 0; ix < grid.nx(); ++ix) {
    for (int iz = 0; iz < grid.nz(); ++iz) {
      const bool in = (bc.left == EdgeKind::Absorbing && ix < w) ||
                      (bc.right == EdgeKind::Absorbing && ix > grid.nx() - 1 - w) ||
                      (bc.top == EdgeKind::Absorbing && iz < w) ||
                      (bc.bottom == EdgeKind::Absorbing && iz > grid.nz() - 1 - w);
      mask[std::size_t(grid.index(iz, ix))] = in ? 1 : 0;
    }
  }
  return mask;
}

WaveOperators stretch_operators(const DifferenceOperators& ops,
                                const BoundarySpec& bc, double omega) {
  bc.validate();
  if (!(omega > 0.0)) throw Error("angular frequency must be positive");
  const GridGeometry& grid = ops.grid;
  const Index n = grid.size();
  const int nz = grid.nz();
  const int nx = grid.nx();
  const int w = bc.pml_width;
  const double d0 = bc.pml_max_damping;
  const bool left = bc.left == EdgeKind::Absorbing;
  const bool right = bc.right == EdgeKind::Absorbing;
  const bool top = bc.top == EdgeKind::Absorbing;
  const bool bottom = bc.bottom == EdgeKind::Absorbing;
  const Complex I(0.0, 1.0);

  auto sx = [&](double pos) {
    return 1.0 + I * damping_at(pos, nx, w, d0, left, right) / omega;
  };
  auto sz = [&](double pos) {
    return 1.0 + I * damping_at(pos, nz, w, d0, top, bottom) / omega;
  };

  const double hx2 = grid.dx() * grid.dx();
  const double hz2 = grid.dz() * grid.dz();
  std::vector<ComplexTriplet> txx, tzz;
  txx.reserve(3 * n);
  tzz.reserve(3 * n);
  for (int ix = 0; ix < nx; ++ix) {
    const Complex s = sx(ix);
    const Complex cl = 1.0 / (s * sx(ix - 0.5) * hx2);
    const Complex cr = 1.0 / (s * sx(ix + 0.5) * hx2);
    for (int iz = 0; iz < nz; ++iz) {
      const Index i = grid.index(iz, ix);
      txx.emplace_back(i, i, -(cl + cr));
      if (ix > 0) txx.emplace_back(i, grid.index(iz, ix - 1), cl);
      if (ix < nx - 1) txx.emplace_back(i, grid.index(iz, ix + 1), cr);
    }
  }
  for (int iz = 0; iz < nz; ++iz) {
    const Complex s = sz(iz);
    const Complex cu = 1.0 / (s * sz(iz - 0.5) * hz2);
    const Complex cd = 1.0 / (s * sz(iz + 0.5) * hz2);
    for (int ix = 0; ix < nx; ++ix) {
      const Index i = grid.index(iz, ix);
      tzz.emplace_back(i, i, -(cu + cd));
      if (iz > 0) tzz.emplace_back(i, grid.index(iz - 1, ix), cu);
      if (iz < nz - 1) tzz.emplace_back(i, grid.index(iz + 1, ix), cd);
    }
  }

  WaveOperators out{grid,
                    omega,
                    bc,
                    ComplexSparse(n, n),
                    ComplexSparse(n, n),
                    ComplexSparse(n, n),
                    ComplexSparse(n, n),
                    ComplexSparse(n, n),
                    RealVector::Ones(n),
                    RealVector::Zero(n)};
  out.dxx.setFromTriplets(txx.begin(), txx.end());
  out.dzz.setFromTriplets(tzz.begin(), tzz.end());

  ComplexVector inv_sxz(n);
  for (int ix = 0; ix < nx; ++ix) {
    for (int iz = 0; iz < nz; ++iz) {
      inv_sxz[grid.index(iz, ix)] = 1.0 / (sx(ix) * sz(iz));
    }
  }
  out.dxz = inv_sxz.asDiagonal() * ops.dxz.cast<Complex>();

  if (bc.free_surface()) {
    // Traction rows on iz = 0: one-sided second-order d/dz, centred d/dx.
    std::vector<ComplexTriplet> tdx, tdz;
    const double scale = 1.0 / grid.dz();
    const double cz1 = scale / (2.0 * grid.dz());
    for (int ix = 0; ix < nx; ++ix) {
      const Index i = grid.index(0, ix);
      out.interior_rows[i] = 0.0;
      out.traction_rows[i] = 1.0;
      tdz.emplace_back(i, grid.index(0, ix), -3.0 * cz1);
      tdz.emplace_back(i, grid.index(1, ix), 4.0 * cz1);
      tdz.emplace_back(i, grid.index(2, ix), -1.0 * cz1);
      const Complex cx1 = scale / (2.0 * grid.dx() * sx(ix));
      if (ix > 0) tdx.emplace_back(i, grid.index(0, ix - 1), -cx1);
      if (ix < nx - 1) tdx.emplace_back(i, grid.index(0, ix + 1), cx1);
    }
    out.traction_dx.setFromTriplets(tdx.begin(), tdx.end());
    out.traction_dz.setFromTriplets(tdz.begin(), tdz.end());
  }
  return out;
}

ImpedanceMatrix assemble_impedance(const ElasticModel& model,
                                   const WaveOperators& ops) {
  if (!(model.grid() == ops.grid)) {
    throw Error("assemble_impedance: model and operators use different grids");
  }
  const LameFields lm = model.lame();
  const RealVector& lambda = lm.lambda.values;
  const RealVector& mu = lm.mu.values;
  if ((mu.array() < 0.0).any() || (lambda + 2.0 * mu).minCoeff() <= 0.0) {
    throw Error("assemble_impedance: non-physical model (lambda + 2 mu <= 0 or mu < 0)");
  }
  const Index n = ops.grid.size();
  const double w2 = ops.omega * ops.omega;
  const RealVector& in = ops.interior_rows;
  const RealVector& tr = ops.traction_rows;

  const RealVector mass = in.cwiseProduct(model.density().values) * w2;
  const RealVector varpi = lambda + 2.0 * mu;
  const RealVector in_varpi = in.cwiseProduct(varpi);
  const RealVector in_mu = in.cwiseProduct(mu);
  const RealVector in_lpm = in.cwiseProduct(lambda + mu);

  ComplexSparse b11 = in_varpi.cast<Complex>().asDiagonal() * ops.dxx;
  b11 += in_mu.cast<Complex>().asDiagonal() * ops.dzz;
  ComplexSparse b22 = in_varpi.cast<Complex>().asDiagonal() * ops.dzz;
  b22 += in_mu.cast<Complex>().asDiagonal() * ops.dxx;
  ComplexSparse b12 = in_lpm.cast<Complex>().asDiagonal() * ops.dxz;
  ComplexSparse b21 = b12;

  if (ops.bc.free_surface()) {
    // x rows: sigma_xz = mu (dz ux + dx uz); z rows: sigma_zz = lambda dx ux + varpi dz uz
    const ComplexVector tr_mu = tr.cwiseProduct(mu).cast<Complex>();
    b11 += tr_mu.asDiagonal() * ops.traction_dz;
    b12 += tr_mu.asDiagonal() * ops.traction_dx;
    b21 += tr.cwiseProduct(lambda).cast<Complex>().asDiagonal() * ops.traction_dx;
    b22 += tr.cwiseProduct(varpi).cast<Complex>().asDiagonal() * ops.traction_dz;
  }

  std::vector<ComplexTriplet> t;
  t.reserve(std::size_t(b11.nonZeros() + b12.nonZeros() + b21.nonZeros() +
                        b22.nonZeros() + 2 * n));
  for (Index i = 0; i < n; ++i) {
    if (mass[i] != 0.0) {
      t.emplace_back(i, i, mass[i]);
      t.emplace_back(n + i, n + i, mass[i]);
    }
  }
  append_block(t, b11, 0, 0);
  append_block(t, b12, 0, n);
  append_block(t, b21, n, 0);
  append_block(t, b22, n, n);

  ImpedanceMatrix A;
  A.matrix.resize(2 * n, 2 * n);
  A.matrix.setFromTriplets(t.begin(), t.end());
  A.matrix.makeCompressed();
  A.omega = ops.omega;
  A.model_hash = model.hash();
  A.bc = ops.bc;
  return A;
}

ImpedanceMatrix assemble_impedance(const ElasticModel& model, double omega,
                                   const BoundarySpec& bc,
                                   const DifferenceOperators& ops) {
  return assemble_impedance(model, stretch_operators(ops, bc, omega));
}

Index nearest_node(const Point& p, const GridGeometry& grid) {
  const long ix = std::lround(p.x / grid.dx());
  const long iz = std::lround(p.z / grid.dz());
  if (ix < 0 || ix >= grid.nx() || iz < 0 || iz >= grid.nz()) {
    throw Error("point (" + std::to_string(p.x) + ", " + std::to_string(p.z) +
                ") lies outside the grid");
  }
  return grid.index(int(iz), int(ix));
}

ComplexVector SamplingOperator::sample(const ComplexVector& u) const {
  const Index n = u.size() / 2;
  const Index nr = receivers();
  ComplexVector out(2 * nr);
  for (Index r = 0; r < nr; ++r) {
    out[r] = u[nodes[std::size_t(r)]];
    out[nr + r] = u[n + nodes[std::size_t(r)]];
  }
  return out;
}

SamplingOperator build_sampling_operator(const std::vector<Point>& receivers,
                                         const GridGeometry& grid) {
  const Index n = grid.size();
  const Index nr = Index(receivers.size());
  SamplingOperator P;
  P.nodes.reserve(receivers.size());
  std::vector<RealTriplet> t;
  t.reserve(std::size_t(2 * nr));
  for (Index r = 0; r < nr; ++r) {
    const Index node = nearest_node(receivers[std::size_t(r)], grid);
    P.nodes.push_back(node);
    t.emplace_back(r, node, 1.0);
    t.emplace_back(nr + r, n + node, 1.0);
  }
  P.matrix.resize(2 * nr, 2 * n);
  P.matrix.setFromTriplets(t.begin(), t.end());
  return P;
}

SourceSet build_source_set(const std::vector<Point>& positions,
                           const GridGeometry& grid, Complex force_x,
                           Complex force_z, Complex amplitude) {
  const Index n = grid.size();
  SourceSet set;
  set.positions = positions;
  set.force_x = force_x;
  set.force_z = force_z;
  set.b = ComplexMatrix::Zero(2 * n, Index(positions.size()));
  for (std::size_t j = 0; j < positions.size(); ++j) {
    const Index node = nearest_node(positions[j], grid);
    set.nodes.push_back(node);
    set.b(node, Index(j)) = amplitude * force_x;
    set.b(n + node, Index(j)) = amplitude * force_z;
  }
  return set;
}

Complex ricker_spectrum(double f0, double f) {
  if (!(f0 > 0.0)) throw Error("ricker_spectrum: f0 must be positive");
  const double r = f / f0;
  return 2.0 * f * f / (std::sqrt(std::numbers::pi) * f0 * f0 * f0) *
         std::exp(-r * r);
}

}  // namespace efwi
