#include "efwi/model_update.hpp"

#include <algorithm>
#include <cmath>

namespace efwi {

ComplexVector ScatteringSystem::residual(const RealVector& m1,
                                         const RealVector& m2) const {
  const Index n = cells();
  ComplexVector r(2 * n);
  r.head(n) = l11.cwiseProduct(m1.cast<Complex>()) +
              l12.cwiseProduct(m2.cast<Complex>()) - y.head(n);
  r.tail(n) = l21.cwiseProduct(m1.cast<Complex>()) +
              l22.cwiseProduct(m2.cast<Complex>()) - y.tail(n);
  return r;
}

ScatteringSystem build_scattering_system(const ComplexVector& u,
                                         const ComplexVector& b_plus_s,
                                         const ElasticModel& model_context,
                                         Parameterization parameterization,
                                         const WaveOperators& ops) {
  if (parameterization == Parameterization::Velocity) {
    throw Error("build_scattering_system: velocities enter A nonlinearly; "
                "use the Gauss-Newton path");
  }
  const Index n = ops.grid.size();
  if (u.size() != 2 * n || b_plus_s.size() != 2 * n) {
    throw Error("build_scattering_system: vector sizes do not match the grid");
  }
  if (!u.allFinite()) throw Error("build_scattering_system: non-finite wavefield");

  const auto ux = u.head(n);
  const auto uz = u.tail(n);
  const ComplexVector dxx_ux = ops.dxx * ux;
  const ComplexVector dzz_ux = ops.dzz * ux;
  const ComplexVector dxz_ux = ops.dxz * ux;
  const ComplexVector dxx_uz = ops.dxx * uz;
  const ComplexVector dzz_uz = ops.dzz * uz;
  const ComplexVector dxz_uz = ops.dxz * uz;

  const auto in = ops.interior_rows.cast<Complex>().array();
  const auto tr = ops.traction_rows.cast<Complex>().array();

  // Coefficients of lambda and mu in each row.
  ComplexVector lam_x = (in * (dxx_ux + dxz_uz).array()).matrix();
  ComplexVector mu_x = (in * (2.0 * dxx_ux + dzz_ux + dxz_uz).array()).matrix();
  ComplexVector lam_z = (in * (dzz_uz + dxz_ux).array()).matrix();
  ComplexVector mu_z = (in * (2.0 * dzz_uz + dxx_uz + dxz_ux).array()).matrix();
  if (ops.bc.free_surface()) {
    const ComplexVector tdx_ux = ops.traction_dx * ux;
    const ComplexVector tdz_ux = ops.traction_dz * ux;
    const ComplexVector tdx_uz = ops.traction_dx * uz;
    const ComplexVector tdz_uz = ops.traction_dz * uz;
    mu_x.array() += tr * (tdz_ux + tdx_uz).array();
    lam_z.array() += tr * (tdx_ux + tdz_uz).array();
    mu_z.array() += tr * (2.0 * tdz_uz).array();
  }

  const RealVector& rho = model_context.density().values;
  ScatteringSystem sys;
  sys.parameterization = parameterization;
  if (parameterization == Parameterization::Lame) {
    sys.l11 = std::move(lam_x);
    sys.l12 = std::move(mu_x);
    sys.l21 = std::move(lam_z);
    sys.l22 = std::move(mu_z);
  } else {
    // lambda = rho (Vp^2 - 2 Vs^2), mu = rho Vs^2
    const auto r = rho.cast<Complex>().array();
    sys.l11 = (r * lam_x.array()).matrix();
    sys.l12 = (r * (mu_x.array() - 2.0 * lam_x.array())).matrix();
    sys.l21 = (r * lam_z.array()).matrix();
    sys.l22 = (r * (mu_z.array() - 2.0 * lam_z.array())).matrix();
  }

  const double w2 = ops.omega * ops.omega;
  const ComplexVector mass =
      (ops.interior_rows.cwiseProduct(rho) * w2).cast<Complex>();
  sys.y.resize(2 * n);
  sys.y.head(n) = b_plus_s.head(n) - mass.cwiseProduct(ux);
  sys.y.tail(n) = b_plus_s.tail(n) - mass.cwiseProduct(uz);
  return sys;
}

NormalSystem NormalSystem::zeros(Index cells, Parameterization parameterization) {
  NormalSystem s;
  s.parameterization = parameterization;
  s.h11 = RealVector::Zero(cells);
  s.h12 = RealVector::Zero(cells);
  s.h22 = RealVector::Zero(cells);
  s.g1 = RealVector::Zero(cells);
  s.g2 = RealVector::Zero(cells);
  return s;
}

void NormalSystem::accumulate(const ScatteringSystem& sys) {
  if (sys.parameterization != parameterization || sys.cells() != cells()) {
    throw Error("NormalSystem::accumulate: incompatible scattering system");
  }
  const Index n = cells();
  for (Index i = 0; i < n; ++i) {
    const Complex a = sys.l11[i], b = sys.l12[i];
    const Complex c = sys.l21[i], d = sys.l22[i];
    const Complex yx = sys.y[i], yz = sys.y[n + i];
    h11[i] += std::norm(a) + std::norm(c);
    h22[i] += std::norm(b) + std::norm(d);
    h12[i] += (std::conj(a) * b + std::conj(c) * d).real();
    g1[i] += (std::conj(a) * yx + std::conj(c) * yz).real();
    g2[i] += (std::conj(b) * yx + std::conj(d) * yz).real();
  }
  yy += sys.y.squaredNorm();
  ++count;
}

NormalSystem& NormalSystem::operator+=(const NormalSystem& other) {
  if (other.parameterization != parameterization || other.cells() != cells()) {
    throw Error("NormalSystem: incompatible systems");
  }
  h11 += other.h11;
  h12 += other.h12;
  h22 += other.h22;
  g1 += other.g1;
  g2 += other.g2;
  yy += other.yy;
  count += other.count;
  return *this;
}

void NormalSystem::restrict_to(const std::vector<std::uint8_t>& mask) {
  if (Index(mask.size()) != cells()) throw Error("restrict_to: mask size mismatch");
  for (Index i = 0; i < cells(); ++i) {
    if (mask[std::size_t(i)]) continue;
    h11[i] = h12[i] = h22[i] = g1[i] = g2[i] = 0.0;
  }
}

double NormalSystem::objective(const RealVector& m1, const RealVector& m2) const {
  const auto a1 = m1.array();
  const auto a2 = m2.array();
  const double quad = (h11.array() * a1 * a1 + 2.0 * h12.array() * a1 * a2 +
                       h22.array() * a2 * a2)
                          .sum();
  const double lin = (g1.array() * a1 + g2.array() * a2).sum();
  return 0.5 * (quad - 2.0 * lin + yy);
}

std::pair<RealVector, RealVector> NormalSystem::gradient(const RealVector& m1,
                                                         const RealVector& m2) const {
  RealVector r1 = h11.cwiseProduct(m1) + h12.cwiseProduct(m2) - g1;
  RealVector r2 = h12.cwiseProduct(m1) + h22.cwiseProduct(m2) - g2;
  return {std::move(r1), std::move(r2)};
}

namespace {

// Per-cell inverse of [[h11 + t, h12], [h12, h22 + t]] with the Tikhonov
// shift t applied only where the block is numerically singular.
struct BlockInverse {
  RealVector i11, i12, i22;
  RealVector shift;
  Index floored = 0;
};

BlockInverse invert_blocks(const NormalSystem& sys) {
  const Index n = sys.cells();
  double hmax = 0.0;
  for (Index i = 0; i < n; ++i) {
    hmax = std::max({hmax, std::abs(sys.h11[i]), std::abs(sys.h22[i]),
                     std::abs(sys.h12[i])});
  }
  const double eps = 1e-8 * hmax;
  BlockInverse inv{RealVector(n), RealVector(n), RealVector(n),
                   RealVector::Zero(n), 0};
  for (Index i = 0; i < n; ++i) {
    double a = sys.h11[i], b = sys.h12[i], d = sys.h22[i];
    double det = a * d - b * b;
    if (!(det > eps * (a + d)) || eps == 0.0) {
      const double t = eps > 0.0 ? eps : 1.0;
      a += t;
      d += t;
      det = a * d - b * b;
      inv.shift[i] = t;
      ++inv.floored;
    }
    inv.i11[i] = d / det;
    inv.i12[i] = -b / det;
    inv.i22[i] = a / det;
  }
  return inv;
}

}  // namespace

ModelUpdate solve_model_step(const NormalSystem& sys, const RealVector& prior1,
                             const RealVector& prior2) {
  const Index n = sys.cells();
  if (prior1.size() != n || prior2.size() != n) {
    throw Error("solve_model_step: prior has wrong size");
  }
  const BlockInverse inv = invert_blocks(sys);
  const RealVector g1 = sys.g1 + inv.shift.cwiseProduct(prior1);
  const RealVector g2 = sys.g2 + inv.shift.cwiseProduct(prior2);

  ModelUpdate out;
  out.m1_from_g1 = inv.i11.cwiseProduct(g1);
  out.m1_from_g2 = inv.i12.cwiseProduct(g2);
  out.m2_from_g1 = inv.i12.cwiseProduct(g1);
  out.m2_from_g2 = inv.i22.cwiseProduct(g2);
  out.m1_projection = RealVector::Zero(n);
  out.m2_projection = RealVector::Zero(n);
  out.m1 = out.m1_from_g1 + out.m1_from_g2 + out.m1_projection;
  out.m2 = out.m2_from_g1 + out.m2_from_g2 + out.m2_projection;
  out.floored_cells = inv.floored;
  out.residual_norm = std::sqrt(std::max(0.0, 2.0 * sys.objective(out.m1, out.m2)));
  return out;
}

CrossTalkReport hessian_cross_talk_report(const NormalSystem& sys,
                                          const RealVector& prior1,
                                          const RealVector& prior2) {
  const BlockInverse inv = invert_blocks(sys);
  // Newton direction from the prior: -H^-1 (H prior - g)
  auto [r1, r2] = sys.gradient(prior1, prior2);
  r1 = -r1;
  r2 = -r2;
  CrossTalkReport rep;
  rep.diagonal_p = inv.i11.cwiseProduct(r1);
  rep.off_diagonal_p = inv.i12.cwiseProduct(r2);
  rep.off_diagonal_s = inv.i12.cwiseProduct(r1);
  rep.diagonal_s = inv.i22.cwiseProduct(r2);
  rep.total_p = rep.diagonal_p + rep.off_diagonal_p;
  rep.total_s = rep.off_diagonal_s + rep.diagonal_s;
  return rep;
}

std::pair<RealVector, RealVector> velocity_gradient(
    const NormalSystem& squared_velocity_system, const RealVector& vp,
    const RealVector& vs) {
  if (squared_velocity_system.parameterization !=
      Parameterization::SquaredVelocity) {
    throw Error("velocity_gradient expects a squared-velocity normal system");
  }
  const RealVector p2 = vp.cwiseProduct(vp);
  const RealVector s2 = vs.cwiseProduct(vs);
  auto [r1, r2] = squared_velocity_system.gradient(p2, s2);
  // d(V^2)/dV = 2 V
  return {2.0 * vp.cwiseProduct(r1), 2.0 * vs.cwiseProduct(r2)};
}

GaussNewtonResult gauss_newton_velocity_step(
    const NormalSystem& sys, const ElasticModel& velocity_model,
    double step_length) {
  if (velocity_model.parameterization() != Parameterization::Velocity) {
    throw Error("gauss_newton_velocity_step expects a velocity model");
  }
  if (!(step_length > 0.0 && step_length <= 1.0)) {
    throw Error("gauss_newton_velocity_step: step length must be in (0, 1]");
  }
  const RealVector& vp = velocity_model.first().values;
  const RealVector& vs = velocity_model.second().values;
  const Index n = vp.size();

  // Velocity-space Gauss-Newton blocks: H_v = D H D, g_v = D r, D = diag(2 Vp, 2 Vs)
  NormalSystem hv = NormalSystem::zeros(n, Parameterization::Velocity);
  const RealVector dp = 2.0 * vp;
  const RealVector ds = 2.0 * vs;
  hv.h11 = dp.cwiseProduct(dp).cwiseProduct(sys.h11);
  hv.h12 = dp.cwiseProduct(ds).cwiseProduct(sys.h12);
  hv.h22 = ds.cwiseProduct(ds).cwiseProduct(sys.h22);
  auto [gp, gs] = velocity_gradient(sys, vp, vs);
  const BlockInverse inv = invert_blocks(hv);
  const RealVector step_p = -(inv.i11.cwiseProduct(gp) + inv.i12.cwiseProduct(gs));
  const RealVector step_s = -(inv.i12.cwiseProduct(gp) + inv.i22.cwiseProduct(gs));

  auto objective_at = [&](const RealVector& p, const RealVector& s) {
    return sys.objective(p.cwiseProduct(p), s.cwiseProduct(s));
  };
  GaussNewtonResult out{velocity_model, 0.0, 0, false, objective_at(vp, vs), 0.0};
  out.objective_after = out.objective_before;
  if (step_p.isZero(0.0) && step_s.isZero(0.0)) return out;

  double alpha = step_length;
  for (int h = 0; h <= 8; ++h, alpha *= 0.5) {
    const RealVector p = vp + alpha * step_p;
    const RealVector s = (vs + alpha * step_s).cwiseAbs();
    const double f = objective_at(p, s);
    if (f < out.objective_before) {
      out.model = velocity_model.with_fields(p, s);
      out.step = alpha;
      out.halvings = h;
      out.objective_after = f;
      return out;
    }
  }
  out.stalled = true;
  out.halvings = 8;
  return out;
}

GaussNewtonResult gauss_newton_velocity_step(const ComplexVector& u,
                                             const ComplexVector& b_plus_s,
                                             const ElasticModel& velocity_model,
                                             const WaveOperators& ops,
                                             double step_length) {
  NormalSystem sys =
      NormalSystem::zeros(ops.grid.size(), Parameterization::SquaredVelocity);
  sys.accumulate(build_scattering_system(u, b_plus_s, velocity_model,
                                         Parameterization::SquaredVelocity, ops));
  return gauss_newton_velocity_step(sys, velocity_model, step_length);
}

}  // namespace efwi
