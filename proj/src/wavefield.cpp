#include "efwi/wavefield.hpp"

#include <Eigen/CholmodSupport>
#include <Eigen/SparseLU>

#include <sstream>

namespace efwi {

namespace {

std::string frequency_tag(double omega) {
  std::ostringstream os;
  os << "omega=" << omega << " rad/s";
  return os.str();
}

}  // namespace

struct LuFactorization::Impl {
  mutable Eigen::SparseLU<ComplexSparse, Eigen::COLAMDOrdering<int>> lu;
};

LuFactorization::LuFactorization(const ImpedanceMatrix& A)
    : size_(A.size()), omega_(A.omega), provenance_(A.model_hash) {
  auto impl = std::make_shared<Impl>();
  impl->lu.analyzePattern(A.matrix);
  impl->lu.factorize(A.matrix);
  if (impl->lu.info() != Eigen::Success) {
    throw SolverError("sparse LU failed (singular impedance matrix?) at " +
                      frequency_tag(A.omega) + ": " + impl->lu.lastErrorMessage());
  }
  impl_ = std::move(impl);
}

ComplexMatrix LuFactorization::solve(const ComplexMatrix& rhs) const {
  if (rhs.rows() != size_) throw Error("LuFactorization::solve: size mismatch");
  ComplexMatrix x = impl_->lu.solve(rhs);
  if (!x.allFinite()) {
    throw SolverError("non-finite solution at " + frequency_tag(omega_));
  }
  return x;
}

ComplexMatrix LuFactorization::solve_adjoint(const ComplexMatrix& rhs) const {
  if (rhs.rows() != size_) throw Error("LuFactorization::solve_adjoint: size mismatch");
  ComplexMatrix x = impl_->lu.adjoint().solve(rhs);
  if (!x.allFinite()) {
    throw SolverError("non-finite adjoint solution at " + frequency_tag(omega_));
  }
  return x;
}

std::vector<Wavefield> forward_solve(const ImpedanceMatrix& A,
                                     const SourceSet& sources) {
  if (sources.b.rows() != A.size()) {
    throw Error("forward_solve: source matrix has wrong row count");
  }
  const ComplexMatrix u = LuFactorization(A).solve(sources.b);
  std::vector<Wavefield> out;
  out.reserve(std::size_t(u.cols()));
  for (Index j = 0; j < u.cols(); ++j) {
    out.push_back({u.col(j), int(j), A.omega});
  }
  return out;
}

ComplexMatrix forward_solve(const ImpedanceMatrix& A, const ComplexMatrix& rhs) {
  return LuFactorization(A).solve(rhs);
}

ComplexVector adjoint_solve(const ImpedanceMatrix& A, const ComplexVector& rhs) {
  return LuFactorization(A).solve_adjoint(rhs);
}

struct AugmentedSolver::Impl {
  Eigen::CholmodSupernodalLLT<ComplexSparse, Eigen::Lower> llt;
  std::mutex mutex;  // CHOLMOD keeps workspace in its common object
};

AugmentedSolver::AugmentedSolver(const ImpedanceMatrix& A,
                                 const SamplingOperator& P, double beta)
    : beta_(beta) {
  if (!(beta > 0.0)) throw Error("AugmentedSolver: beta must be positive");
  if (P.matrix.cols() != A.size()) {
    throw Error("AugmentedSolver: sampling operator does not match A");
  }
  a_adjoint_ = A.matrix.adjoint();
  p_transpose_ = P.matrix.transpose();
  ComplexSparse normal = (a_adjoint_ * A.matrix) * Complex(beta);
  const RealSparse ptp = p_transpose_ * P.matrix;
  normal += ptp.cast<Complex>();
  normal.makeCompressed();

  impl_ = std::make_shared<Impl>();
  impl_->llt.compute(normal);
  if (impl_->llt.info() != Eigen::Success) {
    throw SolverError("Cholesky of the augmented normal matrix failed at " +
                      frequency_tag(A.omega));
  }
}

ComplexMatrix AugmentedSolver::solve(const ComplexMatrix& b_aug,
                                     const ComplexMatrix& d) const {
  if (b_aug.rows() != a_adjoint_.cols() || d.rows() != p_transpose_.cols() ||
      b_aug.cols() != d.cols()) {
    throw Error("AugmentedSolver::solve: shape mismatch");
  }
  const ComplexMatrix rhs =
      Complex(beta_) * (a_adjoint_ * b_aug) + p_transpose_.cast<Complex>() * d;
  ComplexMatrix u;
  {
    std::lock_guard<std::mutex> lock(impl_->mutex);
    u = impl_->llt.solve(rhs);
  }
  if (!u.allFinite()) throw SolverError("augmented solve produced non-finite values");
  return u;
}

Wavefield augmented_solve(const ImpedanceMatrix& A, const SamplingOperator& P,
                          const ComplexVector& b_aug, const ComplexVector& d,
                          double beta) {
  AugmentedSolver solver(A, P, beta);
  return {solver.solve(b_aug, d).col(0), 0, A.omega};
}

ComplexVector dense_oracle_solve(const ComplexMatrix& A, const ComplexVector& rhs) {
  if (A.rows() != A.cols() || A.rows() != rhs.size()) {
    throw Error("dense_oracle_solve: shape mismatch");
  }
  if (A.rows() > 5000) throw Error("dense_oracle_solve: limited to 5000 unknowns");
  Eigen::FullPivLU<ComplexMatrix> lu(A);
  if (!lu.isInvertible()) throw SolverError("dense_oracle_solve: singular matrix");
  return lu.solve(rhs);
}

}  // namespace efwi
