#include <doctest.h>

#include "efwi/wavefield.hpp"
#include "support.hpp"

using namespace efwi;
using testing::rel_err;

namespace {

struct Small {
  GridGeometry grid;
  ElasticModel model;
  ImpedanceMatrix A;
  SamplingOperator P;
  SourceSet sources;
};

Small small_problem(int nodes, std::uint64_t seed, double omega = 2.0 * 3.141592653589793 * 4.0) {
  std::mt19937_64 rng(seed);
  const GridGeometry g(nodes, nodes, 30.0, 30.0);
  const ElasticModel m = testing::random_velocity_model(rng, g);
  const auto A = assemble_impedance(m, omega, testing::test_boundary(2), build_difference_operators(g));
  const double c = (nodes - 1) * 15.0;
  std::vector<Point> rec;
  for (int i = 0; i < nodes; ++i) rec.push_back({i * 30.0, 2 * 30.0});
  const auto P = build_sampling_operator(rec, g);
  const auto src = build_source_set({{c, c}, {c - 60.0, c + 30.0}}, g, 0.0, 1.0);
  return {g, m, A, P, src};
}

double augmented_objective(const Small& s, const ComplexVector& u, const ComplexVector& b,
                           const ComplexVector& d, double beta) {
  const ComplexVector r = s.A.matrix * u - b;
  const ComplexVector e = s.P.matrix.cast<Complex>() * u - d;
  return e.squaredNorm() + beta * r.squaredNorm();
}

}  // namespace

TEST_CASE("forward solve satisfies the wave equation and matches the dense oracle") {
  const Small s = small_problem(8, 1);
  const ComplexMatrix u = forward_solve(s.A, s.sources.b);
  const ComplexMatrix dense(s.A.matrix);
  for (Index j = 0; j < u.cols(); ++j) {
    CHECK(rel_err(s.A.matrix * u.col(j), s.sources.b.col(j)) < 1e-10);
    const ComplexVector ref = dense_oracle_solve(dense, s.sources.b.col(j));
    CHECK(rel_err(u.col(j), ref) < 1e-10);
  }
  const auto w = forward_solve(s.A, s.sources);
  REQUIRE(w.size() == 2);
  CHECK(w[1].source == 1);
  CHECK(w[1].omega == s.A.omega);
  CHECK((w[1].u - u.col(1)).norm() == 0.0);
}

TEST_CASE("forward solve is linear in the source") {
  const Small s = small_problem(10, 2);
  std::mt19937_64 rng(5);
  const ComplexVector b1 = testing::random_complex(rng, s.A.size());
  const ComplexVector b2 = testing::random_complex(rng, s.A.size());
  const Complex a(0.3, -1.2), c(2.0, 0.5);
  const ComplexMatrix u1 = forward_solve(s.A, ComplexMatrix(b1));
  const ComplexMatrix u2 = forward_solve(s.A, ComplexMatrix(b2));
  const ComplexMatrix u = forward_solve(s.A, ComplexMatrix(a * b1 + c * b2));
  CHECK(rel_err(u, ComplexMatrix(a * u1 + c * u2)) < 1e-10);
}

TEST_CASE("adjoint solve passes the dot-product test") {
  const Small s = small_problem(10, 3);
  std::mt19937_64 rng(9);
  const ComplexVector x = testing::random_complex(rng, s.A.size());
  const ComplexVector y = testing::random_complex(rng, s.A.size());
  const ComplexVector ax = forward_solve(s.A, ComplexMatrix(x)).col(0);
  const ComplexVector ay = adjoint_solve(s.A, y);
  const Complex lhs = y.dot(ax);  // <y, A^-1 x>
  const Complex rhs = ay.dot(x);  // <A^-H y, x>
  CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(lhs));
  CHECK(rel_err(s.A.matrix.adjoint() * ay, y) < 1e-10);
}

TEST_CASE("factorization is reusable across right-hand sides") {
  const Small s = small_problem(9, 4);
  const LuFactorization lu(s.A);
  CHECK(lu.size() == s.A.size());
  CHECK(lu.provenance() == s.A.model_hash);
  const ComplexMatrix all = lu.solve(s.sources.b);
  for (Index j = 0; j < all.cols(); ++j) {
    const ComplexMatrix one = lu.solve(s.sources.b.col(j));
    CHECK((one.col(0) - all.col(j)).norm() <= 1e-14 * all.col(j).norm());
  }
}

TEST_CASE("wavefield is mirror symmetric for a symmetric model and centred vertical force") {
  const int nodes = 15;
  const GridGeometry g(nodes, nodes, 25.0, 25.0);
  const Index n = g.size();
  RealVector vp(n), vs(n), rho = RealVector::Constant(n, 2000.0);
  for (int ix = 0; ix < nodes; ++ix)
    for (int iz = 0; iz < nodes; ++iz) {
      const int d = std::abs(ix - nodes / 2);
      vp[g.index(iz, ix)] = 3000.0 + 20.0 * d + 7.0 * iz;
      vs[g.index(iz, ix)] = 1700.0 + 5.0 * d;
    }
  const auto m = ElasticModel::from_velocities(g, vp, vs, rho);
  const auto A = assemble_impedance(m, 30.0, testing::test_boundary(3), build_difference_operators(g));
  const double c = (nodes / 2) * 25.0;
  const auto src = build_source_set({{c, c}}, g, 0.0, 1.0);
  const ComplexVector u = forward_solve(A, src.b).col(0);
  double sym = 0.0, scale = u.norm();
  for (int ix = 0; ix < nodes; ++ix)
    for (int iz = 0; iz < nodes; ++iz) {
      const Index i = g.index(iz, ix), j = g.index(iz, nodes - 1 - ix);
      sym = std::max(sym, std::abs(u[i] + u[j]));          // ux odd
      sym = std::max(sym, std::abs(u[n + i] - u[n + j]));  // uz even
    }
  CHECK(sym <= 1e-10 * scale);
}

TEST_CASE("augmented solve matches the dense normal-equation oracle") {
  const Small s = small_problem(8, 6);
  std::mt19937_64 rng(17);
  const ComplexVector d = testing::random_complex(rng, 2 * s.P.receivers()) * 1e-9;
  const ComplexVector b = s.sources.b.col(0);
  for (double beta : {1e-14, 1e-12, 1e-10}) {
    const Wavefield w = augmented_solve(s.A, s.P, b, d, beta);
    const ComplexMatrix a(s.A.matrix);
    const ComplexMatrix p = RealMatrix(s.P.matrix).cast<Complex>();
    const ComplexMatrix m = beta * a.adjoint() * a + p.adjoint() * p;
    const ComplexVector rhs = beta * a.adjoint() * b + p.adjoint() * d;
    const ComplexVector ref = dense_oracle_solve(m, rhs);
    CHECK(rel_err(w.u, ref) < 1e-8);
  }
}

TEST_CASE("augmented solve approaches the forward solution for large beta") {
  const Small s = small_problem(8, 7);
  const ComplexVector b = s.sources.b.col(0);
  const ComplexVector u0 = forward_solve(s.A, ComplexMatrix(b)).col(0);
  std::mt19937_64 rng(21);
  const ComplexVector d = s.P.sample(u0) + 0.5 * u0.cwiseAbs().maxCoeff() *
                                               testing::random_complex(rng, 2 * s.P.receivers());
  const Wavefield w = augmented_solve(s.A, s.P, b, d, 1e12);
  CHECK(rel_err(w.u, u0) < 1e-4);
}

TEST_CASE("augmented solution is the exact minimizer and trades data fit against beta") {
  const Small s = small_problem(9, 8);
  const ComplexVector b = s.sources.b.col(1);
  const ComplexVector u0 = forward_solve(s.A, ComplexMatrix(b)).col(0);
  std::mt19937_64 rng(33);
  const ComplexVector d =
      s.P.sample(u0) + 0.3 * u0.cwiseAbs().maxCoeff() * testing::random_complex(rng, 2 * s.P.receivers());
  const double beta = 1e-13;
  const Wavefield w = augmented_solve(s.A, s.P, b, d, beta);
  const double f0 = augmented_objective(s, w.u, b, d, beta);
  for (int k = 0; k < 10; ++k) {
    const ComplexVector du = testing::random_complex(rng, s.A.size()) * (1e-3 * w.u.norm() / 10.0);
    CHECK(augmented_objective(s, w.u + du, b, d, beta) >= f0);
  }

  double last_data = -1.0, last_source = 1e300;
  for (double bb : {1e-16, 1e-14, 1e-12, 1e-10, 1e-8}) {
    const Wavefield x = augmented_solve(s.A, s.P, b, d, bb);
    const double data = (s.P.sample(x.u) - d).norm();
    const double source = (s.A.matrix * x.u - b).norm();
    CHECK(data >= last_data);
    CHECK(source <= last_source);
    last_data = data;
    last_source = source;
  }
}

TEST_CASE("augmented solver handles many right-hand sides at once") {
  const Small s = small_problem(8, 9);
  std::mt19937_64 rng(2);
  const ComplexMatrix d = ComplexMatrix::Random(2 * s.P.receivers(), 2) * 1e-9;
  const AugmentedSolver solver(s.A, s.P, 1e-12);
  CHECK(solver.beta() == 1e-12);
  const ComplexMatrix all = solver.solve(s.sources.b, d);
  for (Index j = 0; j < 2; ++j) {
    const ComplexMatrix one = solver.solve(s.sources.b.col(j), d.col(j));
    CHECK(rel_err(one.col(0), all.col(j)) < 1e-12);
  }
  CHECK_THROWS(AugmentedSolver(s.A, s.P, 0.0));
}
