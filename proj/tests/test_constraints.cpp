#include <doctest.h>

#include "efwi/constraints.hpp"
#include "support.hpp"

using namespace efwi;

namespace {

const BoxSet kBox{2.0, 1.0, 6.0, 3.5};
const BandSet kBand{{-0.5, 1.0, -0.6, Sense::AtLeast}, {-0.5, 1.0, 0.4, Sense::AtMost}};

double dist(const PlanePoint& a, const PlanePoint& b) { return std::hypot(a.p - b.p, a.s - b.s); }

bool inside(const PlanePoint& x, double tol = 0.0) {
  return kBox.contains(x, tol) && kBand.contains(x, tol);
}

// Nearest feasible point by exhaustive search on a k x k grid over the box.
PlanePoint grid_search(const PlanePoint& x, int k) {
  PlanePoint best{};
  double bd = std::numeric_limits<double>::infinity();
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      const PlanePoint c{kBox.p_min + (kBox.p_max - kBox.p_min) * i / (k - 1),
                         kBox.s_min + (kBox.s_max - kBox.s_min) * j / (k - 1)};
      if (!inside(c, 1e-12)) continue;
      const double d = dist(c, x);
      if (d < bd) {
        bd = d;
        best = c;
      }
    }
  }
  return best;
}

// Exact projection onto a convex polygon: x itself when inside, otherwise
// the closest point over all edges.
PlanePoint polygon_projection(const PlanePoint& x, const std::vector<PlanePoint>& poly) {
  if (inside(x)) return x;
  PlanePoint best{};
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const PlanePoint a = poly[i], b = poly[(i + 1) % poly.size()];
    const double ex = b.p - a.p, ez = b.s - a.s;
    double t = ((x.p - a.p) * ex + (x.s - a.s) * ez) / (ex * ex + ez * ez);
    t = std::clamp(t, 0.0, 1.0);
    const PlanePoint c{a.p + t * ex, a.s + t * ez};
    if (dist(c, x) < bd) {
      bd = dist(c, x);
      best = c;
    }
  }
  return best;
}

PlanePoint random_point(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> p(0.0, 8.0), s(-0.5, 5.0);
  return {p(rng), s(rng)};
}

}  // namespace

TEST_CASE("elementary projections") {
  CHECK(project_box({7.0, 0.0}, kBox).p == 6.0);
  CHECK(project_box({7.0, 0.0}, kBox).s == 1.0);
  const PlanePoint in{3.0, 2.0};
  CHECK(project_box(in, kBox).p == 3.0);

  const HalfPlane h{1.0, 1.0, 2.0, Sense::AtMost};
  const PlanePoint y = project_halfspace({3.0, 3.0}, h);
  CHECK(y.p == doctest::Approx(1.0));
  CHECK(y.s == doctest::Approx(1.0));
  CHECK(h.violation({3.0, 3.0}) > 0.0);
  CHECK(h.distance({3.0, 3.0}) == doctest::Approx(4.0 / std::sqrt(2.0)));
  CHECK(h.distance({0.0, 0.0}) == 0.0);

  const BandSet any = BandSet::whole_plane();
  CHECK(any.contains({1e6, -1e6}));
  CHECK_THROWS_AS((BoxSet{3.0, 1.0, 2.0, 2.0}).validate(), Error);
  CHECK_THROWS_AS((BandSet{{-0.5, 1.0, 1.0, Sense::AtLeast}, {-0.5, 1.0, 0.0, Sense::AtMost}}).validate(),
                  Error);
}

TEST_CASE("band projection agrees with the polygon of its two lines") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 500; ++t) {
    const PlanePoint x = random_point(rng);
    const PlanePoint y = project_band(x, kBand);
    CHECK(kBand.contains(y, 1e-12));
    if (kBand.contains(x)) {
      CHECK(dist(x, y) == 0.0);
    } else {
      CHECK(dist(x, y) == doctest::Approx(kBand.distance(x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("feasible polygon of box and band") {
  const auto poly = feasible_polygon(kBox, kBand);
  REQUIRE(poly.size() >= 3);
  double area = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const auto& a = poly[i];
    const auto& b = poly[(i + 1) % poly.size()];
    area += a.p * b.s - b.p * a.s;
    CHECK(inside(a, 1e-12));
  }
  CHECK(area > 0.0);  // counter-clockwise
  // Monte Carlo area of box ∩ band.
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> up(kBox.p_min, kBox.p_max), us(kBox.s_min, kBox.s_max);
  int hits = 0;
  const int samples = 200000;
  for (int i = 0; i < samples; ++i) hits += inside({up(rng), us(rng)});
  const double mc = 10.0 * hits / samples;
  CHECK(0.5 * area == doctest::Approx(mc).epsilon(0.01));
  CHECK(feasible_polygon(kBox, {{0.0, 1.0, 10.0, Sense::AtLeast}, {0.0, 1.0, 11.0, Sense::AtMost}})
            .empty());
}

TEST_CASE("Dykstra projection matches exact and exhaustive oracles") {
  const auto poly = feasible_polygon(kBox, kBand);
  const double cell = std::hypot(4.0 / 499, 2.5 / 499);
  std::mt19937_64 rng(3);
  for (int t = 0; t < 50; ++t) {
    const PlanePoint x = random_point(rng);
    const auto [y, diag] = project_intersection(x, kBox, kBand, 1e-10, 2000);
    CHECK(diag.converged);
    CHECK(inside(y, 1e-8));
    const PlanePoint exact = polygon_projection(x, poly);
    CHECK(dist(y, exact) < 1e-7);
    // The exhaustive search cannot beat the projection, and the projection
    // is no more than one grid cell closer than the best grid point.
    const PlanePoint g = grid_search(x, 500);
    CHECK(dist(x, y) <= dist(x, g) + 1e-12);
    CHECK(dist(x, g) - dist(x, y) <= cell);
  }
}

TEST_CASE("projection is idempotent and non-expansive") {
  std::mt19937_64 rng(4);
  for (int t = 0; t < 1000; ++t) {
    const PlanePoint x = random_point(rng), z = random_point(rng);
    const auto px = project_intersection(x, kBox, kBand, 1e-10, 2000).first;
    const auto pz = project_intersection(z, kBox, kBand, 1e-10, 2000).first;
    const auto ppx = project_intersection(px, kBox, kBand, 1e-10, 2000).first;
    CHECK(dist(px, ppx) <= 1e-8);
    CHECK(dist(px, pz) <= dist(x, z) + 1e-8);
  }
}

TEST_CASE("projector works in the velocity plane for every parameterization") {
  const ConstraintProjector proj(BoxSet{2.0, 1.0, 6.0, 3.5}, kBand);
  RealVector vp(3), vs(3), rho = RealVector::Constant(3, 2.0);
  vp << 3.0, 7.0, 4.0;
  vs << 1.5, 0.5, 3.4;
  RealVector p = vp, s = vs;
  proj.project(p, s, Parameterization::Velocity);
  CHECK(p[0] == 3.0);  // feasible cells are untouched
  CHECK(s[0] == 1.5);

  RealVector p2 = vp.cwiseProduct(vp), s2 = vs.cwiseProduct(vs);
  proj.project(p2, s2, Parameterization::SquaredVelocity);
  CHECK(p2[0] == 9.0);
  CHECK(std::abs(std::sqrt(p2[1]) - p[1]) < 1e-9);
  CHECK(std::abs(std::sqrt(s2[2]) - s[2]) < 1e-9);

  RealVector mu = rho.cwiseProduct(vs.cwiseProduct(vs));
  RealVector lam = rho.cwiseProduct(vp.cwiseProduct(vp)) - 2.0 * mu;
  proj.project(lam, mu, Parameterization::Lame, rho);
  for (Index i = 0; i < 3; ++i) {
    CHECK(std::abs(std::sqrt(mu[i] / rho[i]) - s[i]) < 1e-9);
    CHECK(std::abs(std::sqrt((lam[i] + 2.0 * mu[i]) / rho[i]) - p[i]) < 1e-9);
  }
  CHECK_THROWS_AS(proj.project(lam, mu, Parameterization::Lame), Error);
}

TEST_CASE("constrained model step matches a grid oracle on two cells") {
  NormalSystem ns = NormalSystem::zeros(2, Parameterization::Velocity);
  ns.h11 << 3.0, 1.0;
  ns.h12 << 1.0, -0.4;
  ns.h22 << 2.0, 2.5;
  // Unconstrained minimizers (7.5, 0.2) and (1.0, 4.0) both lie outside.
  ns.g1 << 3.0 * 7.5 + 1.0 * 0.2, 1.0 * 1.0 - 0.4 * 4.0;
  ns.g2 << 1.0 * 7.5 + 2.0 * 0.2, -0.4 * 1.0 + 2.5 * 4.0;
  ns.yy = 100.0;
  const ConstraintProjector proj(kBox, kBand);
  const RealVector prior = RealVector::Constant(2, 3.0);
  const ConstrainedUpdate cu =
      constrained_model_step(ns, proj, prior, RealVector::Constant(2, 1.5), {}, {0.0, 1e-10, 5000});
  CHECK(cu.converged);
  const ModelUpdate& up = cu.update;
  for (Index i = 0; i < 2; ++i) {
    CHECK(kBox.contains({up.m1[i], up.m2[i]}, 1e-6));
    CHECK(kBand.contains({up.m1[i], up.m2[i]}, 1e-6));
  }
  CHECK((up.m1 - (up.m1_from_g1 + up.m1_from_g2 + up.m1_projection)).norm() == 0.0);

  // Cells decouple; search each on a zooming grid over the feasible set.
  double oracle = 0.5 * ns.yy;
  for (Index i = 0; i < 2; ++i) {
    auto f = [&](double a, double b) {
      return 0.5 * (ns.h11[i] * a * a + 2.0 * ns.h12[i] * a * b + ns.h22[i] * b * b) -
             (ns.g1[i] * a + ns.g2[i] * b);
    };
    double best = std::numeric_limits<double>::infinity(), bp = 0, bs = 0;
    double lo_p = kBox.p_min, hi_p = kBox.p_max, lo_s = kBox.s_min, hi_s = kBox.s_max;
    for (int zoom = 0; zoom < 4; ++zoom) {
      const int k = 400;
      for (int a = 0; a <= k; ++a)
        for (int b = 0; b <= k; ++b) {
          const double p = lo_p + (hi_p - lo_p) * a / k, s = lo_s + (hi_s - lo_s) * b / k;
          if (!inside({p, s}, 1e-12)) continue;
          const double v = f(p, s);
          if (v < best) {
            best = v;
            bp = p;
            bs = s;
          }
        }
      const double wp = (hi_p - lo_p) / k * 4, ws = (hi_s - lo_s) / k * 4;
      lo_p = std::max(kBox.p_min, bp - wp);
      hi_p = std::min(kBox.p_max, bp + wp);
      lo_s = std::max(kBox.s_min, bs - ws);
      hi_s = std::min(kBox.s_max, bs + ws);
    }
    oracle += best;
  }
  const double obj = ns.objective(up.m1, up.m2);
  CHECK(std::abs(obj - oracle) <= 1e-4 * std::abs(oracle));
  CHECK(cu.gamma == doctest::Approx((3.0 + 1.0 + 2.0 + 2.5) / 4.0));
}
