#include "efwi/model.hpp"

#include <cmath>
#include <string>

namespace efwi {

std::uint64_t fnv1a(const void* data, std::size_t bytes, std::uint64_t seed) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

GridGeometry::GridGeometry(int nz, int nx, double dz, double dx)
    : nz_(nz), nx_(nx), dz_(dz), dx_(dx) {
  if (nz < 3 || nx < 3) {
    throw Error("grid needs at least 3 cells per axis, got nz=" +
                std::to_string(nz) + " nx=" + std::to_string(nx));
  }
  if (!(dz > 0.0) || !(dx > 0.0)) {
    throw Error("grid spacing must be positive");
  }
}

std::string_view unit_name(Unit unit) {
  switch (unit) {
    case Unit::Pascal: return "Pa";
    case Unit::MetersPerSecond: return "m/s";
    case Unit::KilometersPerSecond: return "km/s";
    case Unit::SquaredMetersPerSecond: return "(m/s)^2";
    case Unit::KilogramsPerCubicMeter: return "kg/m^3";
    case Unit::Dimensionless: return "1";
  }
  return "1";
}

Unit parse_unit(std::string_view name) {
  for (Unit u : {Unit::Pascal, Unit::MetersPerSecond, Unit::KilometersPerSecond,
                 Unit::SquaredMetersPerSecond, Unit::KilogramsPerCubicMeter,
                 Unit::Dimensionless}) {
    if (unit_name(u) == name) return u;
  }
  throw Error("unknown unit '" + std::string(name) + "'");
}

std::string_view parameterization_name(Parameterization p) {
  switch (p) {
    case Parameterization::Lame: return "lame";
    case Parameterization::SquaredVelocity: return "squared-velocity";
    case Parameterization::Velocity: return "velocity";
  }
  return "lame";
}

Parameterization parse_parameterization(std::string_view name) {
  for (auto p : {Parameterization::Lame, Parameterization::SquaredVelocity,
                 Parameterization::Velocity}) {
    if (parameterization_name(p) == name) return p;
  }
  throw Error("unknown parameterization '" + std::string(name) + "'");
}

namespace {

void require_same_size(const ParameterField& a, const ParameterField& b,
                       const char* what) {
  if (a.size() != b.size()) {
    throw Error(std::string(what) + ": field sizes differ (" +
                std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                ")");
  }
}

}  // namespace

ElasticModel::ElasticModel(GridGeometry grid, Parameterization parameterization,
                           ParameterField first, ParameterField second,
                           ParameterField density)
    : grid_(grid),
      parameterization_(parameterization),
      first_(std::move(first)),
      second_(std::move(second)),
      density_(std::move(density)) {
  const Index n = grid_.size();
  if (first_.size() != n || second_.size() != n || density_.size() != n) {
    throw Error("model fields must have grid.size() = " + std::to_string(n) +
                " entries");
  }
  if (!first_.all_finite() || !second_.all_finite() || !density_.all_finite()) {
    throw Error("model fields must be finite");
  }
}

ElasticModel ElasticModel::from_lame(GridGeometry grid, RealVector lambda,
                                     RealVector mu, RealVector rho) {
  return {grid, Parameterization::Lame, {std::move(lambda), Unit::Pascal},
          {std::move(mu), Unit::Pascal},
          {std::move(rho), Unit::KilogramsPerCubicMeter}};
}

ElasticModel ElasticModel::from_velocities(GridGeometry grid, RealVector vp,
                                           RealVector vs, RealVector rho) {
  return {grid, Parameterization::Velocity,
          {std::move(vp), Unit::MetersPerSecond},
          {std::move(vs), Unit::MetersPerSecond},
          {std::move(rho), Unit::KilogramsPerCubicMeter}};
}

ElasticModel ElasticModel::from_squared_velocities(GridGeometry grid,
                                                   RealVector vp2,
                                                   RealVector vs2,
                                                   RealVector rho) {
  return {grid, Parameterization::SquaredVelocity,
          {std::move(vp2), Unit::SquaredMetersPerSecond},
          {std::move(vs2), Unit::SquaredMetersPerSecond},
          {std::move(rho), Unit::KilogramsPerCubicMeter}};
}

LameFields ElasticModel::lame() const {
  const RealVector& rho = density_.values;
  switch (parameterization_) {
    case Parameterization::Lame:
      return {first_, second_, (first_.values.array() < 0.0).count()};
    case Parameterization::SquaredVelocity: {
      LameFields out;
      out.mu = {rho.cwiseProduct(second_.values), Unit::Pascal};
      out.lambda = {
          (rho.array() * (first_.values.array() - 2.0 * second_.values.array()))
              .matrix(),
          Unit::Pascal};
      out.negative_lambda_cells = (out.lambda.values.array() < 0.0).count();
      return out;
    }
    case Parameterization::Velocity:
      return lame_from_velocities(first_, second_, density_);
  }
  return {};
}

VelocityFields ElasticModel::velocities() const {
  switch (parameterization_) {
    case Parameterization::Velocity:
      return {first_, second_};
    case Parameterization::SquaredVelocity:
      return {{first_.values.cwiseMax(0.0).cwiseSqrt(), Unit::MetersPerSecond},
              {second_.values.cwiseMax(0.0).cwiseSqrt(), Unit::MetersPerSecond}};
    case Parameterization::Lame:
      return velocities_from_lame(first_, second_, density_);
  }
  return {};
}

ElasticModel ElasticModel::with_fields(RealVector first, RealVector second) const {
  return {grid_, parameterization_, {std::move(first), first_.unit},
          {std::move(second), second_.unit}, density_};
}

bool ElasticModel::is_physical() const {
  const LameFields lm = lame();
  const auto& lambda = lm.lambda.values.array();
  const auto& mu = lm.mu.values.array();
  return (mu >= 0.0).all() && (lambda + 2.0 * mu > 0.0).all() &&
         (density_.values.array() > 0.0).all();
}

void ElasticModel::check_physical() const {
  if (!is_physical()) {
    throw Error("non-physical model: need mu >= 0, lambda + 2 mu > 0, rho > 0");
  }
}

std::uint64_t ElasticModel::hash() const {
  std::uint64_t h = fnv1a(&parameterization_, sizeof(parameterization_));
  const int dims[2] = {grid_.nz(), grid_.nx()};
  h = fnv1a(dims, sizeof(dims), h);
  for (const auto* f : {&first_, &second_, &density_}) {
    h = fnv1a(f->values.data(), sizeof(double) * std::size_t(f->size()), h);
  }
  return h;
}

LameFields lame_from_velocities(const ParameterField& vp,
                                const ParameterField& vs,
                                const ParameterField& rho) {
  require_same_size(vp, vs, "lame_from_velocities");
  require_same_size(vp, rho, "lame_from_velocities");
  const auto vp2 = vp.values.array().square();
  const auto vs2 = vs.values.array().square();
  LameFields out;
  out.mu = {(rho.values.array() * vs2).matrix(), Unit::Pascal};
  out.lambda = {(rho.values.array() * (vp2 - 2.0 * vs2)).matrix(), Unit::Pascal};
  out.negative_lambda_cells = (out.lambda.values.array() < 0.0).count();
  return out;
}

VelocityFields velocities_from_lame(const ParameterField& lambda,
                                    const ParameterField& mu,
                                    const ParameterField& rho) {
  require_same_size(lambda, mu, "velocities_from_lame");
  require_same_size(lambda, rho, "velocities_from_lame");
  const auto& l = lambda.values.array();
  const auto& m = mu.values.array();
  const auto& r = rho.values.array();
  if ((m < 0.0).any() || (l + 2.0 * m <= 0.0).any() || (r <= 0.0).any()) {
    throw Error("velocities_from_lame: negative argument under square root");
  }
  return {{((l + 2.0 * m) / r).sqrt().matrix(), Unit::MetersPerSecond},
          {(m / r).sqrt().matrix(), Unit::MetersPerSecond}};
}

double brocher_vs_from_vp(double vp) {
  // Horner form of 0.7858 - 1.2344 vp + 0.7949 vp^2 - 0.1238 vp^3 + 0.0044 vp^4
  return 0.7858 + vp * (-1.2344 + vp * (0.7949 + vp * (-0.1238 + vp * 0.0044)));
}

ParameterField brocher_vs_from_vp(const ParameterField& vp_km_s,
                                  double floor_km_s) {
  if (vp_km_s.unit != Unit::KilometersPerSecond) {
    throw Error("brocher_vs_from_vp expects vp in km/s, got " +
                std::string(unit_name(vp_km_s.unit)));
  }
  ParameterField vs{RealVector(vp_km_s.size()), Unit::KilometersPerSecond};
  for (Index i = 0; i < vp_km_s.size(); ++i) {
    vs.values[i] = std::max(brocher_vs_from_vp(vp_km_s.values[i]), floor_km_s);
  }
  return vs;
}

PoissonRatio poisson_ratio(const ParameterField& vp, const ParameterField& vs) {
  require_same_size(vp, vs, "poisson_ratio");
  PoissonRatio out{{RealVector(vp.size()), Unit::Dimensionless}, 0};
  for (Index i = 0; i < vp.size(); ++i) {
    const double p2 = vp.values[i] * vp.values[i];
    const double s2 = vs.values[i] * vs.values[i];
    if (vp.values[i] <= vs.values[i]) ++out.flagged_cells;
    out.nu.values[i] = (p2 - 2.0 * s2) / (2.0 * (p2 - s2));
  }
  return out;
}

ElasticModel convert_parameterization(const ElasticModel& model,
                                      Parameterization target) {
  if (model.parameterization() == target) return model;
  const GridGeometry& grid = model.grid();
  const RealVector& rho = model.density().values;
  switch (target) {
    case Parameterization::Lame: {
      LameFields lm = model.lame();
      return ElasticModel::from_lame(grid, std::move(lm.lambda.values),
                                     std::move(lm.mu.values), rho);
    }
    case Parameterization::SquaredVelocity: {
      if (model.parameterization() == Parameterization::Velocity) {
        return ElasticModel::from_squared_velocities(
            grid, model.first().values.array().square().matrix(),
            model.second().values.array().square().matrix(), rho);
      }
      const LameFields lm = model.lame();
      const RealVector vs2 = lm.mu.values.cwiseQuotient(rho);
      const RealVector vp2 =
          (lm.lambda.values + 2.0 * lm.mu.values).cwiseQuotient(rho);
      return ElasticModel::from_squared_velocities(grid, vp2, vs2, rho);
    }
    case Parameterization::Velocity: {
      if (model.parameterization() == Parameterization::SquaredVelocity) {
        const auto& p2 = model.first().values;
        const auto& s2 = model.second().values;
        if ((p2.array() < 0.0).any() || (s2.array() < 0.0).any()) {
          throw Error("convert_parameterization: negative squared velocity");
        }
        return ElasticModel::from_velocities(grid, p2.cwiseSqrt(),
                                             s2.cwiseSqrt(), rho);
      }
      VelocityFields v = model.velocities();
      return ElasticModel::from_velocities(grid, std::move(v.vp.values),
                                           std::move(v.vs.values), rho);
    }
  }
  throw Error("convert_parameterization: invalid target");
}

}  // namespace efwi
