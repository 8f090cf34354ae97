#include "efwi/constraints.hpp"

#include <array>

#include <algorithm>
#include <cmath>
#include <limits>

namespace efwi {

namespace {

double dist(const PlanePoint& a, const PlanePoint& b) {
  return std::hypot(a.p - b.p, a.s - b.s);
}

}  // namespace

void BoxSet::validate() const {
  if (!(p_min < p_max) || !(s_min < s_max)) {
    throw Error("BoxSet: lower bounds must be below upper bounds");
  }
}

bool BoxSet::contains(const PlanePoint& x, double tol) const {
  return x.p >= p_min - tol && x.p <= p_max + tol && x.s >= s_min - tol &&
         x.s <= s_max + tol;
}

double BoxSet::distance(const PlanePoint& x) const {
  return dist(x, project_box(x, *this));
}

double HalfPlane::violation(const PlanePoint& x) const {
  const double v = a * x.p + b * x.s;
  return sense == Sense::AtLeast ? c - v : v - c;
}

double HalfPlane::distance(const PlanePoint& x) const {
  const double v = violation(x);
  return v > 0.0 ? v / std::hypot(a, b) : 0.0;
}

BandSet BandSet::whole_plane() {
  const double inf = std::numeric_limits<double>::infinity();
  return {{1.0, 0.0, -inf, Sense::AtLeast}, {1.0, 0.0, inf, Sense::AtMost}};
}

void BandSet::validate() const {
  for (const HalfPlane* h : {&lower, &upper}) {
    if (h->a == 0.0 && h->b == 0.0) throw Error("BandSet: zero line normal");
    if (std::isnan(h->c)) throw Error("BandSet: line offset is NaN");
  }
  // Both as n.x <= c with unit n; opposite normals bound a strip that must
  // have non-negative width.
  auto as_upper = [](const HalfPlane& h) {
    const double len = std::hypot(h.a, h.b);
    const double sign = h.sense == Sense::AtMost ? 1.0 : -1.0;
    return std::array<double, 3>{sign * h.a / len, sign * h.b / len, sign * h.c / len};
  };
  const auto l = as_upper(lower), u = as_upper(upper);
  const double cross = l[0] * u[1] - l[1] * u[0];
  const double dot = l[0] * u[0] + l[1] * u[1];
  if (std::abs(cross) < 1e-12 && dot < 0.0 && l[2] + u[2] < 0.0) {
    throw Error("BandSet: the two lines bound an empty strip");
  }
}

bool BandSet::contains(const PlanePoint& x, double tol) const {
  return lower.distance(x) <= tol && upper.distance(x) <= tol;
}

double BandSet::distance(const PlanePoint& x) const {
  return dist(x, project_band(x, *this));
}

PlanePoint project_box(const PlanePoint& x, const BoxSet& box) {
  return {std::clamp(x.p, box.p_min, box.p_max),
          std::clamp(x.s, box.s_min, box.s_max)};
}

PlanePoint project_halfspace(const PlanePoint& x, const HalfPlane& h) {
  if (h.a == 0.0 && h.b == 0.0) throw Error("project_halfspace: zero normal");
  const double v = h.violation(x);
  if (!(v > 0.0)) return x;
  const double t = (h.a * x.p + h.b * x.s - h.c) / (h.a * h.a + h.b * h.b);
  return {x.p - t * h.a, x.s - t * h.b};
}

PlanePoint project_band(const PlanePoint& x, const BandSet& band) {
  if (band.contains(x)) return x;
  // The projection lies on one of the two lines or at their crossing; take
  // the nearest feasible candidate.
  std::vector<PlanePoint> candidates = {project_halfspace(x, band.lower),
                                        project_halfspace(x, band.upper)};
  const double det = band.lower.a * band.upper.b - band.lower.b * band.upper.a;
  if (det != 0.0) {
    candidates.push_back(
        {(band.lower.c * band.upper.b - band.lower.b * band.upper.c) / det,
         (band.lower.a * band.upper.c - band.lower.c * band.upper.a) / det});
  }
  const double tol = 1e-12 * (1.0 + std::abs(x.p) + std::abs(x.s));
  PlanePoint best = x;
  double best_d = std::numeric_limits<double>::infinity();
  for (const PlanePoint& c : candidates) {
    if (!band.contains(c, tol)) continue;
    const double d = dist(x, c);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (!std::isfinite(best_d)) throw Error("project_band: empty band");
  return best;
}

std::pair<PlanePoint, ProjectionDiagnostics> project_intersection(
    const PlanePoint& x0, const BoxSet& box, const BandSet& band, double tol,
    int max_iter) {
  ProjectionDiagnostics diag;
  if (box.contains(x0) && band.contains(x0)) return {x0, diag};

  const double scale = std::max(box.p_max - box.p_min, box.s_max - box.s_min);
  const double abs_tol = tol * scale;
  PlanePoint x = x0;
  PlanePoint inc_box{0.0, 0.0}, inc_band{0.0, 0.0};
  diag.converged = false;
  for (int k = 1; k <= max_iter; ++k) {
    const PlanePoint prev = x;
    const PlanePoint yb{x.p + inc_box.p, x.s + inc_box.s};
    const PlanePoint y = project_box(yb, box);
    inc_box = {yb.p - y.p, yb.s - y.s};
    const PlanePoint zb{y.p + inc_band.p, y.s + inc_band.s};
    x = project_band(zb, band);
    inc_band = {zb.p - x.p, zb.s - x.s};

    diag.iterations = k;
    diag.infeasibility = std::max(box.distance(x), band.distance(x));
    if (diag.infeasibility <= abs_tol && dist(x, prev) <= abs_tol &&
        dist(x, y) <= abs_tol) {
      diag.converged = true;
      break;
    }
  }
  return {x, diag};
}

std::vector<PlanePoint> feasible_polygon(const BoxSet& box, const BandSet& band) {
  std::vector<PlanePoint> poly = {{box.p_min, box.s_min},
                                  {box.p_max, box.s_min},
                                  {box.p_max, box.s_max},
                                  {box.p_min, box.s_max}};
  for (const HalfPlane* h : {&band.lower, &band.upper}) {
    std::vector<PlanePoint> out;
    const std::size_t m = poly.size();
    for (std::size_t i = 0; i < m; ++i) {
      const PlanePoint& a = poly[i];
      const PlanePoint& b = poly[(i + 1) % m];
      const double va = h->violation(a);
      const double vb = h->violation(b);
      if (va <= 0.0) out.push_back(a);
      if ((va <= 0.0) != (vb <= 0.0)) {
        const double t = va / (va - vb);
        out.push_back({a.p + t * (b.p - a.p), a.s + t * (b.s - a.s)});
      }
    }
    poly = std::move(out);
    if (poly.empty()) break;
  }
  return poly;
}

ConstraintProjector::ConstraintProjector(BoxSet box, BandSet band,
                                         ConstraintPlane plane, double tol,
                                         int max_iter)
    : box_(box), band_(band), plane_(plane), tol_(tol), max_iter_(max_iter) {
  box_.validate();
  band_.validate();
  if (!(tol > 0.0) || max_iter < 1) {
    throw Error("ConstraintProjector: tol must be positive and max_iter >= 1");
  }
  if (feasible_polygon(box_, band_).empty()) {
    throw Error("ConstraintProjector: box and band do not intersect");
  }
}

ProjectionDiagnostics ConstraintProjector::project(RealVector& m1, RealVector& m2,
                                                   Parameterization param,
                                                   const RealVector& density) const {
  if (m1.size() != m2.size()) throw Error("ConstraintProjector: size mismatch");
  const bool convert =
      plane_ == ConstraintPlane::Velocity && param != Parameterization::Velocity;
  if (convert && param == Parameterization::Lame && density.size() != m1.size()) {
    throw Error("ConstraintProjector: density required for Lame models");
  }

  ProjectionDiagnostics total;
  for (Index i = 0; i < m1.size(); ++i) {
    PlanePoint x{m1[i], m2[i]};
    if (convert) {
      if (param == Parameterization::SquaredVelocity) {
        x = {std::sqrt(std::max(x.p, 0.0)), std::sqrt(std::max(x.s, 0.0))};
      } else {
        const double r = density[i];
        x = {std::sqrt(std::max((m1[i] + 2.0 * m2[i]) / r, 0.0)),
             std::sqrt(std::max(m2[i] / r, 0.0))};
      }
    }
    const auto [y, diag] = project_intersection(x, box_, band_, tol_, max_iter_);
    total.iterations = std::max(total.iterations, diag.iterations);
    total.infeasibility = std::max(total.infeasibility, diag.infeasibility);
    total.converged = total.converged && diag.converged;
    if (y.p == x.p && y.s == x.s) continue;
    if (!convert) {
      m1[i] = y.p;
      m2[i] = y.s;
    } else if (param == Parameterization::SquaredVelocity) {
      m1[i] = y.p * y.p;
      m2[i] = y.s * y.s;
    } else {
      const double r = density[i];
      m2[i] = r * y.s * y.s;
      m1[i] = r * (y.p * y.p - 2.0 * y.s * y.s);
    }
  }
  return total;
}

ConstrainedUpdate constrained_model_step(const NormalSystem& sys,
                                         const ConstraintProjector& projector,
                                         const RealVector& prior1,
                                         const RealVector& prior2,
                                         const RealVector& density,
                                         const ConstrainedStepOptions& options) {
  const Index n = sys.cells();
  if (prior1.size() != n || prior2.size() != n) {
    throw Error("constrained_model_step: prior has wrong size");
  }
  ConstrainedUpdate out;
  out.gamma = options.gamma;
  if (out.gamma == 0.0) {
    out.gamma = (sys.h11.sum() + sys.h22.sum()) / double(2 * n);
  }
  if (!(out.gamma > 0.0)) throw Error("constrained_model_step: gamma must be positive");
  const double gamma = out.gamma;

  const RealVector a = sys.h11.array() + gamma;
  const RealVector d = sys.h22.array() + gamma;
  const RealVector det = a.cwiseProduct(d) - sys.h12.cwiseProduct(sys.h12);
  const RealVector i11 = d.cwiseQuotient(det);
  const RealVector i12 = -sys.h12.cwiseQuotient(det);
  const RealVector i22 = a.cwiseQuotient(det);

  RealVector p1 = prior1, p2 = prior2;
  out.projection = projector.project(p1, p2, sys.parameterization, density);
  RealVector q1 = RealVector::Zero(n), q2 = RealVector::Zero(n);
  RealVector m1(n), m2(n), g1(n), g2(n);

  for (int k = 1; k <= options.max_iter; ++k) {
    g1 = sys.g1 + gamma * (p1 + q1);
    g2 = sys.g2 + gamma * (p2 + q2);
    m1 = i11.cwiseProduct(g1) + i12.cwiseProduct(g2);
    m2 = i12.cwiseProduct(g1) + i22.cwiseProduct(g2);
    p1 = m1 - q1;
    p2 = m2 - q2;
    out.projection = projector.project(p1, p2, sys.parameterization, density);
    q1 += p1 - m1;
    q2 += p2 - m2;
    out.iterations = k;
    const double gap = std::sqrt((p1 - m1).squaredNorm() + (p2 - m2).squaredNorm());
    const double size = std::sqrt(m1.squaredNorm() + m2.squaredNorm());
    if (gap <= options.tol * size) {
      out.converged = true;
      break;
    }
  }

  ModelUpdate& u = out.update;
  u.m1_from_g1 = i11.cwiseProduct(g1);
  u.m1_from_g2 = i12.cwiseProduct(g2);
  u.m2_from_g1 = i12.cwiseProduct(g1);
  u.m2_from_g2 = i22.cwiseProduct(g2);
  u.m1_projection = p1 - (u.m1_from_g1 + u.m1_from_g2);
  u.m2_projection = p2 - (u.m2_from_g1 + u.m2_from_g2);
  u.m1 = u.m1_from_g1 + u.m1_from_g2 + u.m1_projection;
  u.m2 = u.m2_from_g1 + u.m2_from_g2 + u.m2_projection;
  u.residual_norm = std::sqrt(std::max(0.0, 2.0 * sys.objective(u.m1, u.m2)));
  return out;
}

}  // namespace efwi
