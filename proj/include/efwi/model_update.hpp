#pragma once

#include <vector>

#include "efwi/discretization.hpp"
#include "efwi/model.hpp"
#include "efwi/types.hpp"

namespace efwi {

/// Linearization of the wave equation in the model for a frozen wavefield:
///   A(m) u - (b + s) = L(u) m - y(u),
/// where L is a 2x2 block matrix of diagonal blocks. Only the diagonals are
/// stored. Valid for the two parameterizations in which A is linear in m
/// (Lame and squared velocities).
struct ScatteringSystem {
  Parameterization parameterization = Parameterization::Lame;
  ComplexVector l11, l12;  ///< x-equation rows, coefficients of m1 and m2
  ComplexVector l21, l22;  ///< z-equation rows
  ComplexVector y;         ///< 2n

  Index cells() const { return l11.size(); }
  /// L m - y for real model fields m = (m1, m2).
  ComplexVector residual(const RealVector& m1, const RealVector& m2) const;
};

ScatteringSystem build_scattering_system(const ComplexVector& u,
                                         const ComplexVector& b_plus_s,
                                         const ElasticModel& model_context,
                                         Parameterization parameterization,
                                         const WaveOperators& ops);

/// Per-cell 2x2 normal equations Re(L^H L) m = Re(L^H y), accumulated over
/// sources and frequencies.
struct NormalSystem {
  Parameterization parameterization = Parameterization::Lame;
  RealVector h11, h12, h22;
  RealVector g1, g2;
  double yy = 0.0;  ///< sum of |y|^2, for residual norms
  int count = 0;    ///< accumulated (source, frequency) pairs

  static NormalSystem zeros(Index cells, Parameterization parameterization);

  Index cells() const { return h11.size(); }
  void accumulate(const ScatteringSystem& sys);
  NormalSystem& operator+=(const NormalSystem& other);
  /// Zeroes rows outside `mask` (mask[i] == 0), freezing those cells.
  void restrict_to(const std::vector<std::uint8_t>& mask);
  /// 1/2 ||L m - y||^2 evaluated from the accumulated blocks.
  double objective(const RealVector& m1, const RealVector& m2) const;
  /// Re L^H (L m - y), the gradient of the objective.
  std::pair<RealVector, RealVector> gradient(const RealVector& m1,
                                             const RealVector& m2) const;
};

/// Result of a per-cell model solve, with the inverse-Hessian block
/// decomposition m1 = Hinv11 g1 + Hinv12 g2 (+ projection), likewise m2.
/// The projection parts are zero for unconstrained steps.
struct ModelUpdate {
  RealVector m1, m2;
  RealVector m1_from_g1, m1_from_g2, m1_projection;
  RealVector m2_from_g1, m2_from_g2, m2_projection;
  Index floored_cells = 0;
  double residual_norm = 0.0;
};

/// Closed-form minimizer of ||L m - y||^2 over real m. Cells whose 2x2
/// block is numerically singular (det below 1e-8 max|H| times the trace)
/// get a Tikhonov term pulling them towards `prior`.
ModelUpdate solve_model_step(const NormalSystem& sys, const RealVector& prior1,
                             const RealVector& prior2);

/// Contributions of each inverse-Hessian block to the update m_new - prior.
struct CrossTalkReport {
  RealVector total_p, diagonal_p, off_diagonal_p;
  RealVector total_s, diagonal_s, off_diagonal_s;
};

CrossTalkReport hessian_cross_talk_report(const NormalSystem& sys,
                                          const RealVector& prior1,
                                          const RealVector& prior2);

struct GaussNewtonResult {
  ElasticModel model;
  double step = 0.0;          ///< accepted step length
  int halvings = 0;
  bool stalled = false;
  double objective_before = 0.0;
  double objective_after = 0.0;
};

/// Gradient of 1/2 ||A(m) u - b - s||^2 with respect to (Vp, Vs), computed
/// from a normal system accumulated in squared velocities.
std::pair<RealVector, RealVector> velocity_gradient(
    const NormalSystem& squared_velocity_system, const RealVector& vp,
    const RealVector& vs);

/// One Gauss-Newton step in (Vp, Vs). The step length starts at
/// `step_length` and is halved (at most 8 times) until the objective drops.
GaussNewtonResult gauss_newton_velocity_step(
    const NormalSystem& squared_velocity_system,
    const ElasticModel& velocity_model, double step_length = 1.0);

GaussNewtonResult gauss_newton_velocity_step(const ComplexVector& u,
                                             const ComplexVector& b_plus_s,
                                             const ElasticModel& velocity_model,
                                             const WaveOperators& ops,
                                             double step_length = 1.0);

}  // namespace efwi
