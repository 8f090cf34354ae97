#pragma once

#include <string_view>
#include <utility>

#include "efwi/types.hpp"

namespace efwi {

/// Regular 2D grid. Fields are stored with z fastest: index = ix * nz + iz.
class GridGeometry {
 public:
  GridGeometry(int nz, int nx, double dz, double dx);

  int nz() const { return nz_; }
  int nx() const { return nx_; }
  double dz() const { return dz_; }
  double dx() const { return dx_; }
  Index size() const { return Index(nz_) * nx_; }

  Index index(int iz, int ix) const { return Index(ix) * nz_ + iz; }
  int iz_of(Index i) const { return int(i % nz_); }
  int ix_of(Index i) const { return int(i / nz_); }
  double z(int iz) const { return iz * dz_; }
  double x(int ix) const { return ix * dx_; }

  bool operator==(const GridGeometry& other) const = default;

 private:
  int nz_;
  int nx_;
  double dz_;
  double dx_;
};

enum class Unit {
  Pascal,
  MetersPerSecond,
  KilometersPerSecond,
  SquaredMetersPerSecond,
  KilogramsPerCubicMeter,
  Dimensionless,
};

std::string_view unit_name(Unit unit);
Unit parse_unit(std::string_view name);

/// One material property sampled on every grid cell.
struct ParameterField {
  RealVector values;
  Unit unit = Unit::Dimensionless;

  Index size() const { return values.size(); }
  bool all_finite() const { return values.allFinite(); }
};

enum class Parameterization { Lame, SquaredVelocity, Velocity };

std::string_view parameterization_name(Parameterization p);
Parameterization parse_parameterization(std::string_view name);

struct LameFields {
  ParameterField lambda;
  ParameterField mu;
  /// Cells where lambda came out negative. Reported, not rejected.
  Index negative_lambda_cells = 0;
};

struct VelocityFields {
  ParameterField vp;
  ParameterField vs;
};

/// Isotropic elastic medium on a grid, expressed in one of three
/// parameterizations. Density is carried separately and never inverted.
class ElasticModel {
 public:
  ElasticModel(GridGeometry grid, Parameterization parameterization,
               ParameterField first, ParameterField second,
               ParameterField density);

  static ElasticModel from_lame(GridGeometry grid, RealVector lambda,
                                RealVector mu, RealVector rho);
  static ElasticModel from_velocities(GridGeometry grid, RealVector vp,
                                      RealVector vs, RealVector rho);
  static ElasticModel from_squared_velocities(GridGeometry grid,
                                              RealVector vp2, RealVector vs2,
                                              RealVector rho);

  const GridGeometry& grid() const { return grid_; }
  Parameterization parameterization() const { return parameterization_; }
  const ParameterField& first() const { return first_; }
  const ParameterField& second() const { return second_; }
  const ParameterField& density() const { return density_; }

  /// (lambda, mu) of the medium regardless of the stored parameterization.
  LameFields lame() const;
  VelocityFields velocities() const;

  /// Same medium, replacing the two stored fields (units kept).
  ElasticModel with_fields(RealVector first, RealVector second) const;

  /// Throws Error when mu < 0, lambda + 2 mu <= 0 or rho <= 0 anywhere.
  void check_physical() const;
  bool is_physical() const;

  std::uint64_t hash() const;

 private:
  GridGeometry grid_;
  Parameterization parameterization_;
  ParameterField first_;
  ParameterField second_;
  ParameterField density_;
};

/// mu = rho Vs^2, lambda = rho (Vp^2 - 2 Vs^2).
LameFields lame_from_velocities(const ParameterField& vp,
                                const ParameterField& vs,
                                const ParameterField& rho);

/// Vp = sqrt((lambda + 2 mu) / rho), Vs = sqrt(mu / rho).
VelocityFields velocities_from_lame(const ParameterField& lambda,
                                    const ParameterField& mu,
                                    const ParameterField& rho);

/// Empirical Vs(Vp) polynomial for crustal rocks, evaluated in km/s and
/// clamped from below at `floor_km_s`.
ParameterField brocher_vs_from_vp(const ParameterField& vp_km_s,
                                  double floor_km_s);
double brocher_vs_from_vp(double vp_km_s);

struct PoissonRatio {
  ParameterField nu;
  /// Cells where vp <= vs; nu is still evaluated there.
  Index flagged_cells = 0;
};

PoissonRatio poisson_ratio(const ParameterField& vp, const ParameterField& vs);

ElasticModel convert_parameterization(const ElasticModel& model,
                                      Parameterization target);

}  // namespace efwi
