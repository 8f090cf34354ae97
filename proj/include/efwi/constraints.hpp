#pragma once

#include <optional>
#include <vector>

#include "efwi/model.hpp"
#include "efwi/model_update.hpp"
#include "efwi/types.hpp"

namespace efwi {

/// A point in the (m_p, m_s) plane of one cell.
struct PlanePoint {
  double p = 0.0;
  double s = 0.0;
};

struct BoxSet {
  double p_min = 0.0, s_min = 0.0;
  double p_max = 0.0, s_max = 0.0;

  void validate() const;
  bool contains(const PlanePoint& x, double tol = 0.0) const;
  double distance(const PlanePoint& x) const;
};

enum class Sense { AtLeast, AtMost };

/// a * m_p + b * m_s >= c (AtLeast) or <= c (AtMost).
struct HalfPlane {
  double a = 0.0, b = 0.0, c = 0.0;
  Sense sense = Sense::AtLeast;

  /// Signed violation; positive when the constraint is broken.
  double violation(const PlanePoint& x) const;
  double distance(const PlanePoint& x) const;
};

/// Points between two lines.
struct BandSet {
  HalfPlane lower{1.0, 0.0, 0.0, Sense::AtLeast};
  HalfPlane upper{1.0, 0.0, 0.0, Sense::AtMost};

  /// Band that constrains nothing (both offsets infinite).
  static BandSet whole_plane();
  void validate() const;
  bool contains(const PlanePoint& x, double tol = 0.0) const;
  double distance(const PlanePoint& x) const;
};

struct ProjectionDiagnostics {
  int iterations = 0;
  double infeasibility = 0.0;
  bool converged = true;
};

PlanePoint project_box(const PlanePoint& x, const BoxSet& box);
PlanePoint project_halfspace(const PlanePoint& x, const HalfPlane& h);
/// Exact projection onto the band (intersection of its two half-planes).
PlanePoint project_band(const PlanePoint& x, const BandSet& band);

/// Dykstra's alternating projections onto box and band. Stops when the
/// distance to either set, the gap between the two partial projections and
/// the change between sweeps all fall below tol * scale, where scale is the
/// larger box side.
std::pair<PlanePoint, ProjectionDiagnostics> project_intersection(
    const PlanePoint& x, const BoxSet& box, const BandSet& band,
    double tol = 1e-6, int max_iter = 200);

/// Vertices (counter-clockwise) of box ∩ band; empty when they are disjoint.
std::vector<PlanePoint> feasible_polygon(const BoxSet& box, const BandSet& band);

/// Plane in which the sets are expressed.
enum class ConstraintPlane { Velocity, Active };

/// Applies the intersection projection to every cell of a model pair,
/// converting to and from the velocity plane when requested.
class ConstraintProjector {
 public:
  ConstraintProjector(BoxSet box, BandSet band,
                      ConstraintPlane plane = ConstraintPlane::Velocity,
                      double tol = 1e-6, int max_iter = 200);

  /// `density` is only needed when the model is in Lame form and the sets
  /// live in the velocity plane.
  ProjectionDiagnostics project(RealVector& m1, RealVector& m2,
                                Parameterization parameterization,
                                const RealVector& density = {}) const;

  const BoxSet& box() const { return box_; }
  const BandSet& band() const { return band_; }
  ConstraintPlane plane() const { return plane_; }
  double tol() const { return tol_; }

 private:
  BoxSet box_;
  BandSet band_;
  ConstraintPlane plane_;
  double tol_;
  int max_iter_;
};

struct ConstrainedStepOptions {
  double gamma = 0.0;  ///< 0 selects trace(H) / (2n)
  double tol = 1e-6;
  int max_iter = 200;
};

struct ConstrainedUpdate {
  ModelUpdate update;
  int iterations = 0;
  bool converged = false;
  double gamma = 0.0;
  ProjectionDiagnostics projection;
};

/// ADMM for min ||L m - y||^2 subject to m in C:
///   m <- (H + gamma I)^-1 (g + gamma (p + q)),  p <- P_C(m - q),  q <- q + p - m.
/// Starts from p = P_C(prior), q = 0 and returns the feasible iterate p.
ConstrainedUpdate constrained_model_step(const NormalSystem& sys,
                                         const ConstraintProjector& projector,
                                         const RealVector& prior1,
                                         const RealVector& prior2,
                                         const RealVector& density = {},
                                         const ConstrainedStepOptions& options = {});

}  // namespace efwi
