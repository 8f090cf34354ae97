#pragma once

#include <memory>
#include <mutex>
#include <vector>

#include "efwi/discretization.hpp"
#include "efwi/types.hpp"

namespace efwi {

/// Complex displacement (ux, uz) of one source at one frequency, stacked
/// into a single 2n vector.
struct Wavefield {
  ComplexVector u;
  int source = 0;
  double omega = 0.0;

  Index cells() const { return u.size() / 2; }
  auto ux() const { return u.head(cells()); }
  auto uz() const { return u.tail(cells()); }
};

/// Sparse LU of an impedance matrix. Immutable after construction; solves
/// are const and may run concurrently.
class LuFactorization {
 public:
  explicit LuFactorization(const ImpedanceMatrix& A);

  ComplexMatrix solve(const ComplexMatrix& rhs) const;
  /// Solves A^H x = rhs with the same factors.
  ComplexMatrix solve_adjoint(const ComplexMatrix& rhs) const;

  Index size() const { return size_; }
  double omega() const { return omega_; }
  std::uint64_t provenance() const { return provenance_; }

 private:
  struct Impl;
  std::shared_ptr<const Impl> impl_;
  Index size_ = 0;
  double omega_ = 0.0;
  std::uint64_t provenance_ = 0;
};

/// Solves A u_j = b_j for every column of the source matrix, reusing one
/// factorization. Throws SolverError on a singular matrix.
std::vector<Wavefield> forward_solve(const ImpedanceMatrix& A,
                                     const SourceSet& sources);
ComplexMatrix forward_solve(const ImpedanceMatrix& A, const ComplexMatrix& rhs);

/// Solves A^H v = rhs (conjugate transpose).
ComplexVector adjoint_solve(const ImpedanceMatrix& A, const ComplexVector& rhs);

/// Data-assimilated wavefield reconstruction: factorizes the Hermitian
/// positive definite matrix beta A^H A + P^T P once and solves
///   [beta A^H A + P^T P] u = beta A^H (b + s) + P^T d
/// for any number of right-hand sides.
class AugmentedSolver {
 public:
  AugmentedSolver(const ImpedanceMatrix& A, const SamplingOperator& P,
                  double beta);

  /// b_aug: 2n x k (b + s already summed), d: 2nr x k.
  ComplexMatrix solve(const ComplexMatrix& b_aug, const ComplexMatrix& d) const;

  double beta() const { return beta_; }

 private:
  struct Impl;
  std::shared_ptr<Impl> impl_;
  ComplexSparse a_adjoint_;
  RealSparse p_transpose_;
  double beta_ = 0.0;
};

Wavefield augmented_solve(const ImpedanceMatrix& A, const SamplingOperator& P,
                          const ComplexVector& b_aug, const ComplexVector& d,
                          double beta);

/// Dense LU reference solve, limited to 5000 unknowns. Throws SolverError
/// when the matrix is singular.
ComplexVector dense_oracle_solve(const ComplexMatrix& A, const ComplexVector& rhs);

}  // namespace efwi
