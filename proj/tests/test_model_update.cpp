#include <doctest.h>

#include <Eigen/QR>

#include "efwi/model_update.hpp"
#include "efwi/wavefield.hpp"
#include "support.hpp"

using namespace efwi;
using testing::rel_err;

namespace {

struct Fixture {
  GridGeometry grid;
  ElasticModel model;
  WaveOperators ops;
};

Fixture fixture(int nodes, std::uint64_t seed, bool free_surface = false, double omega = 25.0) {
  std::mt19937_64 rng(seed);
  const GridGeometry g(nodes, nodes, 20.0, 20.0);
  BoundarySpec bc = testing::test_boundary(3);
  if (free_surface) bc.top = EdgeKind::FreeSurface;
  return {g, testing::random_velocity_model(rng, g),
          stretch_operators(build_difference_operators(g), bc, omega)};
}

// Dense real least-squares oracle for min ||L m - y|| over real m, with L
// stacked from several scattering systems.
std::pair<RealVector, RealVector> dense_oracle(const std::vector<ScatteringSystem>& systems) {
  const Index n = systems.front().cells();
  const Index rows = Index(systems.size()) * 4 * n;
  RealMatrix M = RealMatrix::Zero(rows, 2 * n);
  RealVector rhs(rows);
  Index r = 0;
  for (const auto& s : systems) {
    const ComplexMatrix L = [&] {
      ComplexMatrix l = ComplexMatrix::Zero(2 * n, 2 * n);
      for (Index i = 0; i < n; ++i) {
        l(i, i) = s.l11[i];
        l(i, n + i) = s.l12[i];
        l(n + i, i) = s.l21[i];
        l(n + i, n + i) = s.l22[i];
      }
      return l;
    }();
    M.block(r, 0, 2 * n, 2 * n) = L.real();
    M.block(r + 2 * n, 0, 2 * n, 2 * n) = L.imag();
    rhs.segment(r, 2 * n) = s.y.real();
    rhs.segment(r + 2 * n, 2 * n) = s.y.imag();
    r += 4 * n;
  }
  const RealVector m = M.colPivHouseholderQr().solve(rhs);
  return {m.head(n), m.tail(n)};
}

}  // namespace

TEST_CASE("scattering system reproduces the wave-equation residual") {
  for (bool fs : {false, true}) {
    for (auto param : {Parameterization::Lame, Parameterization::SquaredVelocity}) {
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const Fixture f = fixture(16, seed, fs);
        std::mt19937_64 rng(seed + 100);
        const Index n = f.grid.size();
        const ComplexVector u = testing::random_complex(rng, 2 * n);
        const ComplexVector bs = testing::random_complex(rng, 2 * n) * 1e7;
        const ElasticModel m = convert_parameterization(f.model, param);
        const auto sys = build_scattering_system(u, bs, m, param, f.ops);
        const ComplexVector au = assemble_impedance(m, f.ops).matrix * u;
        const ComplexVector lhs = sys.residual(m.first().values, m.second().values);
        CHECK((lhs - (au - bs)).norm() <= 1e-10 * au.norm());
      }
    }
  }
  const Fixture f = fixture(8, 1);
  CHECK_THROWS_AS(build_scattering_system(ComplexVector::Zero(2 * f.grid.size()),
                                          ComplexVector::Zero(2 * f.grid.size()), f.model,
                                          Parameterization::Velocity, f.ops),
                  Error);
}

TEST_CASE("per-cell model solve matches a dense least-squares oracle") {
  for (auto param : {Parameterization::Lame, Parameterization::SquaredVelocity}) {
    const GridGeometry g(3, 3, 20.0, 20.0);
    std::mt19937_64 rng(41);
    const ElasticModel m = convert_parameterization(testing::random_velocity_model(rng, g), param);
    const auto ops = stretch_operators(build_difference_operators(g), testing::test_boundary(1), 30.0);
    std::vector<ScatteringSystem> systems;
    NormalSystem ns = NormalSystem::zeros(g.size(), param);
    for (int k = 0; k < 3; ++k) {
      const ComplexVector u = testing::random_complex(rng, 2 * g.size());
      const ComplexVector bs = testing::random_complex(rng, 2 * g.size()) * 1e8;
      systems.push_back(build_scattering_system(u, bs, m, param, ops));
      ns.accumulate(systems.back());
    }
    const auto [o1, o2] = dense_oracle(systems);
    const RealVector zero = RealVector::Zero(g.size());
    const ModelUpdate up = solve_model_step(ns, zero, zero);
    CHECK(up.floored_cells == 0);
    CHECK(rel_err(up.m1, o1) < 1e-9);
    CHECK(rel_err(up.m2, o2) < 1e-9);

    double direct = 0.0;
    for (const auto& s : systems) direct += s.residual(up.m1, up.m2).squaredNorm();
    CHECK(up.residual_norm == doctest::Approx(std::sqrt(direct)).epsilon(1e-6));
    CHECK(2.0 * ns.objective(o1, o2) == doctest::Approx(direct).epsilon(1e-8));
  }
}

TEST_CASE("block contributions sum to the update") {
  const Fixture f = fixture(12, 3);
  std::mt19937_64 rng(4);
  const Index n = f.grid.size();
  NormalSystem ns = NormalSystem::zeros(n, Parameterization::SquaredVelocity);
  ns.accumulate(build_scattering_system(testing::random_complex(rng, 2 * n),
                                        testing::random_complex(rng, 2 * n) * 1e7, f.model,
                                        Parameterization::SquaredVelocity, f.ops));
  const ElasticModel sq = convert_parameterization(f.model, Parameterization::SquaredVelocity);
  const ModelUpdate up = solve_model_step(ns, sq.first().values, sq.second().values);
  CHECK((up.m1 - (up.m1_from_g1 + up.m1_from_g2 + up.m1_projection)).norm() == 0.0);
  CHECK((up.m2 - (up.m2_from_g1 + up.m2_from_g2 + up.m2_projection)).norm() == 0.0);

  const CrossTalkReport rep =
      hessian_cross_talk_report(ns, sq.first().values, sq.second().values);
  CHECK((rep.total_p - (rep.diagonal_p + rep.off_diagonal_p)).norm() == 0.0);
  CHECK((rep.total_s - (rep.off_diagonal_s + rep.diagonal_s)).norm() == 0.0);
  CHECK(rel_err(sq.first().values + rep.total_p, up.m1) < 1e-10);
  CHECK(rel_err(sq.second().values + rep.total_s, up.m2) < 1e-10);
}

TEST_CASE("normal systems accumulate in any grouping") {
  const Fixture f = fixture(10, 5);
  std::mt19937_64 rng(6);
  const Index n = f.grid.size();
  std::vector<ScatteringSystem> systems;
  for (int k = 0; k < 4; ++k)
    systems.push_back(build_scattering_system(testing::random_complex(rng, 2 * n),
                                              testing::random_complex(rng, 2 * n), f.model,
                                              Parameterization::Lame, f.ops));
  NormalSystem all = NormalSystem::zeros(n, Parameterization::Lame);
  NormalSystem a = all, b = all;
  for (int k = 0; k < 4; ++k) {
    all.accumulate(systems[std::size_t(k)]);
    (k < 2 ? a : b).accumulate(systems[std::size_t(k)]);
  }
  a += b;
  CHECK(a.count == 4);
  CHECK(rel_err(a.h11, all.h11) < 1e-14);
  CHECK(rel_err(a.h12, all.h12) < 1e-14);
  CHECK(rel_err(a.g2, all.g2) < 1e-14);
  CHECK(a.yy == doctest::Approx(all.yy).epsilon(1e-14));
  NormalSystem sq = NormalSystem::zeros(n, Parameterization::SquaredVelocity);
  CHECK_THROWS_AS(sq += all, Error);
  CHECK_THROWS_AS(sq.accumulate(systems[0]), Error);
}

TEST_CASE("restricted cells and singular blocks stay at the prior") {
  const Index n = 4;
  NormalSystem ns = NormalSystem::zeros(n, Parameterization::Lame);
  ns.h11 << 4.0, 1.0, 0.0, 2.0;
  ns.h22 << 3.0, 1.0, 0.0, 5.0;
  ns.h12 << 1.0, 1.0, 0.0, 0.5;
  ns.g1 << 1.0, 2.0, 0.0, 3.0;
  ns.g2 << 2.0, 2.0, 0.0, 1.0;
  ns.restrict_to({1, 1, 1, 0});
  const RealVector p1 = RealVector::Constant(n, 7.0), p2 = RealVector::Constant(n, -3.0);
  const ModelUpdate up = solve_model_step(ns, p1, p2);
  CHECK(up.floored_cells == 3);  // rank-one cell 1, empty cell 2, masked cell 3
  CHECK(up.m1[2] == doctest::Approx(7.0));
  CHECK(up.m2[2] == doctest::Approx(-3.0));
  CHECK(up.m1[3] == doctest::Approx(7.0));
  CHECK(up.m1[0] == doctest::Approx((3.0 * 1.0 - 1.0 * 2.0) / 11.0));
  CHECK(up.m2[0] == doctest::Approx((4.0 * 2.0 - 1.0 * 1.0) / 11.0));
  CHECK(std::isfinite(up.m1[1]));
}

TEST_CASE("velocity gradient matches central finite differences") {
  const Fixture f = fixture(12, 8);
  std::mt19937_64 rng(12);
  const Index n = f.grid.size();
  const ComplexVector u = testing::random_complex(rng, 2 * n);
  const ComplexVector bs = testing::random_complex(rng, 2 * n) * 1e7;
  const RealVector rho = f.model.density().values;
  auto objective = [&](const RealVector& vp, const RealVector& vs) {
    const auto m = ElasticModel::from_velocities(f.grid, vp, vs, rho);
    return 0.5 * (assemble_impedance(m, f.ops).matrix * u - bs).squaredNorm();
  };
  NormalSystem ns = NormalSystem::zeros(n, Parameterization::SquaredVelocity);
  ns.accumulate(build_scattering_system(u, bs, f.model, Parameterization::SquaredVelocity, f.ops));
  const RealVector vp = f.model.first().values, vs = f.model.second().values;
  const auto [gp, gs] = velocity_gradient(ns, vp, vs);
  for (int k = 0; k < 5; ++k) {
    const RealVector dp = testing::random_real(rng, n, -1.0, 1.0);
    const RealVector ds = testing::random_real(rng, n, -1.0, 1.0);
    const double h = 1e-2;
    const double fd = (objective(vp + h * dp, vs + h * ds) - objective(vp - h * dp, vs - h * ds)) /
                      (2.0 * h);
    const double an = gp.dot(dp) + gs.dot(ds);
    CHECK(std::abs(fd - an) <= 1e-5 * std::abs(an));
  }
}

TEST_CASE("Gauss-Newton in velocities converges to the generating model") {
  const Fixture f = fixture(12, 9);
  const Index n = f.grid.size();
  std::mt19937_64 rng(13);
  const ComplexVector b = testing::random_complex(rng, 2 * n);
  const ComplexVector u =
      forward_solve(assemble_impedance(f.model, f.ops), ComplexMatrix(b)).col(0);
  const RealVector vp = f.model.first().values, vs = f.model.second().values;
  ElasticModel m = f.model.with_fields(vp * 1.05, vs * 0.96);
  double last = std::numeric_limits<double>::infinity();
  for (int it = 0; it < 6; ++it) {
    const GaussNewtonResult r = gauss_newton_velocity_step(u, b, m, f.ops);
    CHECK(r.objective_after <= r.objective_before);
    CHECK(r.objective_before <= last);
    last = r.objective_after;
    m = r.model;
  }
  CHECK(rel_err(m.first().values, vp) < 1e-6);
  CHECK(rel_err(m.second().values, vs) < 1e-6);
  CHECK_THROWS_AS(gauss_newton_velocity_step(u, b, m, f.ops, 1.5), Error);
}
