#include "efwi/driver.hpp"

#include <chrono>
#include <cmath>
#include <iomanip>
#include <iostream>
#include <limits>
#include <numbers>
#include <sstream>

namespace efwi {

namespace {

double angular(double f_hz) { return 2.0 * std::numbers::pi * f_hz; }

Parameterization linear_parameterization(Parameterization p) {
  return p == Parameterization::Velocity ? Parameterization::SquaredVelocity : p;
}

double max_abs_diagonal(const ComplexSparse& a) {
  double m = 0.0;
  for (Index i = 0; i < a.rows(); ++i) m = std::max(m, std::abs(a.coeff(i, i)));
  return m;
}

class Stopwatch {
 public:
  explicit Stopwatch(bool enabled)
      : enabled_(enabled), start_(std::chrono::steady_clock::now()) {}
  double elapsed_ms() const {
    if (!enabled_) return 0.0;
    const auto d = std::chrono::steady_clock::now() - start_;
    return std::chrono::duration<double, std::milli>(d).count();
  }

 private:
  bool enabled_;
  std::chrono::steady_clock::time_point start_;
};

// Cells outside the mask keep their prior values; the decomposition is
// rewritten there so that it still sums to the stored model.
void freeze_masked(ModelUpdate& u, const RealVector& prior1, const RealVector& prior2,
                   const std::vector<std::uint8_t>& mask) {
  for (Index i = 0; i < u.m1.size(); ++i) {
    if (mask[std::size_t(i)]) continue;
    u.m1_from_g1[i] = prior1[i];
    u.m2_from_g2[i] = prior2[i];
    u.m1_from_g2[i] = u.m1_projection[i] = 0.0;
    u.m2_from_g1[i] = u.m2_projection[i] = 0.0;
    u.m1[i] = u.m1_from_g1[i] + u.m1_from_g2[i] + u.m1_projection[i];
    u.m2[i] = u.m2_from_g1[i] + u.m2_from_g2[i] + u.m2_projection[i];
  }
}

}  // namespace

std::string_view mode_name(Mode mode) {
  switch (mode) {
    case Mode::ADMM: return "admm";
    case Mode::WRI: return "wri";
    case Mode::ReducedFWI: return "fwi";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : {Mode::ADMM, Mode::WRI, Mode::ReducedFWI}) {
    if (mode_name(m) == name) return m;
  }
  throw Error("unknown mode '" + std::string(name) + "' (admm, wri, fwi)");
}

int FrequencySchedule::total_iterations() const {
  int total = 0;
  for (const auto& s : stages) total += s.iterations;
  return total;
}

void FrequencySchedule::validate() const {
  if (stages.empty()) throw Error("frequency schedule is empty");
  for (const auto& s : stages) {
    if (s.iterations < 1) throw Error("schedule stage with fewer than 1 iteration");
    if (s.freqs_hz.empty()) throw Error("schedule stage without frequencies");
    for (double f : s.freqs_hz) {
      if (!(f > 0.0) || !std::isfinite(f)) throw Error("frequencies must be positive");
    }
  }
}

FrequencySchedule build_schedule(const std::vector<FrequencyCycle>& cycles,
                                 int iters_first, int iters_rest) {
  if (cycles.empty()) throw Error("build_schedule: no cycles");
  if (iters_first < 1 || iters_rest < 1) {
    throw Error("build_schedule: iteration counts must be >= 1");
  }
  FrequencySchedule out;
  for (const auto& c : cycles) {
    if (!(c.f_lo > 0.0) || c.f_lo > c.f_hi || !(c.step > 0.0)) {
      throw Error("build_schedule: invalid cycle");
    }
    const int count = int(std::floor((c.f_hi - c.f_lo) / c.step + 1e-9)) + 1;
    for (int i = 0; i < count; ++i) {
      out.stages.push_back({{c.f_lo + i * c.step}, i == 0 ? iters_first : iters_rest});
    }
  }
  return out;
}

SolveAccounting pde_solve_accounting(const FrequencySchedule& schedule,
                                     const SketchSpec& sketch, int ns) {
  std::vector<std::pair<int, int>> segments;
  int iteration = 0;
  for (const auto& stage : schedule.stages) {
    const int solves = int(stage.freqs_hz.size());
    for (int k = 0; k < stage.iterations; ++k, ++iteration) {
      const int q = sketch.enabled() ? std::min(sketch.q_at(iteration), ns) : ns;
      if (!segments.empty() && segments.back().second == q) {
        segments.back().first += solves;
      } else {
        segments.push_back({solves, q});
      }
    }
  }
  return pde_solve_accounting(ns, segments);
}

void InversionConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw Error("beta must be positive");
  if (!(xi >= 0.0)) throw Error("xi must be non-negative");
  schedule.validate();
  if (sketch.q < 0 || sketch.warmup_q < 0 || sketch.warmup_iterations < 0) {
    throw Error("sketch sizes must be non-negative");
  }
  if (sketch.enabled() && sketch.warmup_iterations > 0 && sketch.warmup_q < 1) {
    throw Error("sketch warm-up needs warmup_q >= 1");
  }
  if (!(gn_step_length > 0.0 && gn_step_length <= 1.0)) {
    throw Error("gn_step_length must be in (0, 1]");
  }
  if (!(fwi_step_fraction > 0.0)) throw Error("fwi_step_fraction must be positive");
}

ComplexMatrix Acquisition::source_matrix(double f_hz) const {
  return sources.b * ricker_spectrum(ricker_f0, f_hz);
}

std::vector<std::uint8_t> Acquisition::update_mask() const {
  std::vector<std::uint8_t> mask = pml_mask(grid, bc);
  for (auto& v : mask) v = v ? 0 : 1;
  return mask;
}

Acquisition make_acquisition(const GridGeometry& grid, const BoundarySpec& bc,
                             const std::vector<Point>& sources,
                             const std::vector<Point>& receivers,
                             double ricker_f0, Complex force_x, Complex force_z) {
  bc.validate();
  return {grid, bc, build_source_set(sources, grid, force_x, force_z),
          build_sampling_operator(receivers, grid), ricker_f0};
}

const ComplexMatrix& ObservedData::at(double f_hz) const {
  for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
    if (std::abs(freqs_hz[i] - f_hz) <= 1e-9 * f_hz) return data[i];
  }
  throw Error("no observed data at " + std::to_string(f_hz) + " Hz");
}

void ObservedData::set(double f_hz, ComplexMatrix d) {
  for (std::size_t i = 0; i < freqs_hz.size(); ++i) {
    if (std::abs(freqs_hz[i] - f_hz) <= 1e-9 * f_hz) {
      data[i] = std::move(d);
      return;
    }
  }
  freqs_hz.push_back(f_hz);
  data.push_back(std::move(d));
}

ObservedData model_data(const ElasticModel& model, const Acquisition& acq,
                        const std::vector<double>& freqs_hz) {
  const DifferenceOperators D = build_difference_operators(acq.grid);
  ObservedData out;
  for (double f : freqs_hz) {
    const WaveOperators ops = stretch_operators(D, acq.bc, angular(f));
    const ImpedanceMatrix A = assemble_impedance(model, ops);
    const ComplexMatrix U = forward_solve(A, acq.source_matrix(f));
    out.set(f, acq.receivers.matrix.cast<Complex>() * U);
  }
  return out;
}

std::pair<double, double> IterationLog::residuals_at(int iter) const {
  double d = 0.0, s = 0.0;
  for (const auto& r : rows) {
    if (r.iter != iter) continue;
    d += r.data_res * r.data_res;
    s += r.src_res * r.src_res;
  }
  return {std::sqrt(d), std::sqrt(s)};
}

std::pair<double, double> IterationLog::errors_at(int iter) const {
  for (const auto& r : rows) {
    if (r.iter == iter) return {r.err_mp, r.err_ms};
  }
  throw Error("no log rows for iteration " + std::to_string(iter));
}

long long IterationLog::total_solves() const {
  long long n = 0;
  for (const auto& r : rows) n += r.solves;
  return n;
}

void IterationLog::write_csv(std::ostream& os) const {
  os << "iter,freq_hz,data_res,src_res,err_mp,err_ms,solves,wall_ms\n";
  const auto flags = os.flags();
  const auto prec = os.precision();
  os << std::setprecision(17);
  for (const auto& r : rows) {
    os << r.iter << ',' << r.freq_hz << ',' << r.data_res << ',' << r.src_res << ','
       << r.err_mp << ',' << r.err_ms << ',' << r.solves << ',' << r.wall_ms << '\n';
  }
  os.flags(flags);
  os.precision(prec);
}

IterationLog IterationLog::read_csv(std::istream& is) {
  IterationLog log;
  std::string line;
  if (!std::getline(is, line) || line.rfind("iter,", 0) != 0) {
    throw Error("iteration log: missing header");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(cell);
    if (cells.size() != 8) throw Error("iteration log: expected 8 columns: " + line);
    LogRow r;
    r.iter = std::stoi(cells[0]);
    r.freq_hz = std::stod(cells[1]);
    r.data_res = std::stod(cells[2]);
    r.src_res = std::stod(cells[3]);
    r.err_mp = std::stod(cells[4]);
    r.err_ms = std::stod(cells[5]);
    r.solves = std::stoll(cells[6]);
    r.wall_ms = std::stod(cells[7]);
    log.append(r);
  }
  return log;
}

ModelErrors model_errors(const ElasticModel& model, const ElasticModel& truth,
                         const std::vector<std::uint8_t>& mask) {
  if (!(model.grid() == truth.grid())) throw Error("model_errors: grids differ");
  const VelocityFields v = model.velocities();
  const VelocityFields t = truth.velocities();
  double dp = 0.0, ds = 0.0, np = 0.0, ns = 0.0;
  for (Index i = 0; i < v.vp.size(); ++i) {
    if (!mask.empty() && !mask[std::size_t(i)]) continue;
    dp += std::pow(v.vp.values[i] - t.vp.values[i], 2);
    ds += std::pow(v.vs.values[i] - t.vs.values[i], 2);
    np += std::pow(t.vp.values[i], 2);
    ns += std::pow(t.vs.values[i], 2);
  }
  return {std::sqrt(dp / np), std::sqrt(ds / ns)};
}

Residuals compute_residuals(const ImpedanceMatrix& A, const ComplexMatrix& U,
                            const ComplexMatrix& B, const SamplingOperator& P,
                            const ComplexMatrix& D) {
  Residuals r;
  r.data = (P.matrix.cast<Complex>() * U - D).norm();
  r.source = (A.matrix * U - B).norm();
  return r;
}

double dual_damping_factor(int k, double xi) {
  if (k < 0 || xi < 0.0) throw Error("dual_damping_factor: need k >= 0, xi >= 0");
  if (xi == 0.0) return 1.0;
  return double(k) / (double(k) + xi);
}

ComplexMatrix damped_dual_update(const ComplexMatrix& s, const ComplexMatrix& b,
                                 const ImpedanceMatrix& A, const ComplexMatrix& u,
                                 int k, double xi) {
  const double factor = dual_damping_factor(k, xi);
  ComplexMatrix next = s + b - A.matrix * u;
  if (factor != 1.0) next *= factor;
  return next;
}

void begin_stage(ADMMState& state, const FrequencyStage& stage,
                 const Acquisition& acq) {
  const DifferenceOperators D = build_difference_operators(acq.grid);
  const Index n2 = 2 * acq.grid.size();
  state.k = 0;
  state.freqs_hz = stage.freqs_hz;
  state.duals.assign(stage.freqs_hz.size(),
                     ComplexMatrix::Zero(n2, acq.sources.count()));
  state.beta_scale.clear();
  for (double f : stage.freqs_hz) {
    const WaveOperators ops = stretch_operators(D, acq.bc, angular(f));
    const double a = max_abs_diagonal(assemble_impedance(state.model, ops).matrix);
    state.beta_scale.push_back(a * a);
  }
}

void admm_iteration(ADMMState& state, const InversionConfig& config,
                    const Acquisition& acq, const ObservedData& observed,
                    const FrequencyStage& stage,
                    const std::optional<ElasticModel>& truth,
                    const IterationObserver& observer) {
  const Stopwatch clock(config.record_wall_time);
  if (state.freqs_hz != stage.freqs_hz) {
    throw Error("admm_iteration: begin_stage was not called for this stage");
  }
  const ElasticModel& model = state.model;
  const Index n = acq.grid.size();
  const int ns = int(acq.sources.count());
  const auto mask = acq.update_mask();
  const Parameterization lin = linear_parameterization(model.parameterization());
  const DifferenceOperators D = build_difference_operators(acq.grid);

  std::optional<SketchOperator> sketch;
  if (config.sketch.enabled()) {
    const int q = std::min(config.sketch.q_at(state.iteration), ns);
    sketch = draw_sketch(ns, q, derive_seed(config.seed, streams::sketch,
                                            std::uint64_t(state.iteration)));
  }

  struct FrequencyWork {
    WaveOperators ops;
    ComplexMatrix U, B, D;
  };
  std::vector<FrequencyWork> work;
  NormalSystem sys = NormalSystem::zeros(n, lin);
  for (std::size_t fi = 0; fi < stage.freqs_hz.size(); ++fi) {
    const double f = stage.freqs_hz[fi];
    FrequencyWork w{stretch_operators(D, acq.bc, angular(f)), {}, {}, {}};
    const ImpedanceMatrix A = assemble_impedance(model, w.ops);
    ComplexMatrix s = state.duals[fi];
    w.B = acq.source_matrix(f);
    w.D = observed.at(f);
    if (sketch) {
      w.B = apply_sketch(*sketch, w.B);
      w.D = apply_sketch(*sketch, w.D);
      s = apply_sketch(*sketch, s);
    }
    const double beta = config.normalize_beta
                            ? config.beta * kBetaReference / state.beta_scale[fi]
                            : config.beta;
    const ComplexMatrix b_aug = w.B + s;
    w.U = AugmentedSolver(A, acq.receivers, beta).solve(b_aug, w.D);
    for (Index j = 0; j < w.U.cols(); ++j) {
      sys.accumulate(
          build_scattering_system(w.U.col(j), b_aug.col(j), model, lin, w.ops));
    }
    work.push_back(std::move(w));
  }
  sys.restrict_to(mask);

  const RealVector& prior1 = model.first().values;
  const RealVector& prior2 = model.second().values;
  const RealVector& rho = model.density().values;
  std::optional<ModelUpdate> update;
  ElasticModel next = model;
  if (model.parameterization() == Parameterization::Velocity) {
    next = gauss_newton_velocity_step(sys, model, config.gn_step_length).model;
    if (config.constraints) {
      RealVector vp = next.first().values, vs = next.second().values;
      config.constraints->project(vp, vs, Parameterization::Velocity);
      for (Index i = 0; i < n; ++i) {
        if (!mask[std::size_t(i)]) {
          vp[i] = prior1[i];
          vs[i] = prior2[i];
        }
      }
      next = next.with_fields(std::move(vp), std::move(vs));
    }
  } else {
    if (config.constraints) {
      update = constrained_model_step(sys, *config.constraints, prior1, prior2, rho,
                                      config.admm_step)
                   .update;
    } else {
      update = solve_model_step(sys, prior1, prior2);
    }
    freeze_masked(*update, prior1, prior2, mask);
    next = model.with_fields(update->m1, update->m2);
  }
  if (!next.is_physical()) {
    throw SolverError("model update produced a non-physical medium at iteration " +
                      std::to_string(state.iteration + 1));
  }
  if (observer) {
    observer({state.iteration + 1, &stage, &sys, update ? &*update : nullptr, &model,
              &next});
  }

  ModelErrors err{std::numeric_limits<double>::quiet_NaN(),
                  std::numeric_limits<double>::quiet_NaN()};
  if (truth) err = model_errors(next, *truth, mask);

  std::vector<ComplexMatrix> duals = state.duals;
  std::vector<LogRow> rows;
  for (std::size_t fi = 0; fi < work.size(); ++fi) {
    const FrequencyWork& w = work[fi];
    const ImpedanceMatrix A = assemble_impedance(next, w.ops);
    const Residuals res = compute_residuals(A, w.U, w.B, acq.receivers, w.D);
    if (config.mode == Mode::ADMM) {
      if (sketch) {
        const ComplexMatrix r = w.B - A.matrix * w.U;
        duals[fi] = dual_damping_factor(state.k, config.xi) *
                    (duals[fi] + lift_sketch(*sketch, r));
      } else {
        duals[fi] = damped_dual_update(duals[fi], w.B, A, w.U, state.k, config.xi);
      }
    }
    rows.push_back({state.iteration + 1, stage.freqs_hz[fi], res.data, res.source,
                    err.err_mp, err.err_ms, w.U.cols(), 0.0});
  }

  state.model = std::move(next);
  state.duals = std::move(duals);
  ++state.k;
  ++state.iteration;
  const double ms = clock.elapsed_ms();
  for (auto& r : rows) {
    r.wall_ms = ms;
    state.log.append(r);
  }
}

std::pair<RealVector, RealVector> reduced_fwi_gradient(
    const ElasticModel& model, const Acquisition& acq, const ObservedData& observed,
    const std::vector<double>& freqs_hz, double* misfit) {
  const Index n = acq.grid.size();
  const Parameterization lin = linear_parameterization(model.parameterization());
  const DifferenceOperators D = build_difference_operators(acq.grid);
  const ComplexMatrix P = acq.receivers.matrix.cast<Complex>();
  RealVector g1 = RealVector::Zero(n), g2 = RealVector::Zero(n);
  double phi = 0.0;
  for (double f : freqs_hz) {
    const WaveOperators ops = stretch_operators(D, acq.bc, angular(f));
    const ImpedanceMatrix A = assemble_impedance(model, ops);
    const LuFactorization lu(A);
    const ComplexMatrix B = acq.source_matrix(f);
    const ComplexMatrix U = lu.solve(B);
    const ComplexMatrix R = P * U - observed.at(f);
    phi += 0.5 * R.squaredNorm();
    const ComplexMatrix V = lu.solve_adjoint(P.transpose() * R);
    for (Index j = 0; j < U.cols(); ++j) {
      const ScatteringSystem L =
          build_scattering_system(U.col(j), B.col(j), model, lin, ops);
      const auto vx = V.col(j).head(n).array().conjugate();
      const auto vz = V.col(j).tail(n).array().conjugate();
      g1.array() -= (vx * L.l11.array() + vz * L.l21.array()).real();
      g2.array() -= (vx * L.l12.array() + vz * L.l22.array()).real();
    }
  }
  if (model.parameterization() == Parameterization::Velocity) {
    g1 = 2.0 * model.first().values.cwiseProduct(g1);
    g2 = 2.0 * model.second().values.cwiseProduct(g2);
  }
  if (misfit) *misfit = phi;
  return {std::move(g1), std::move(g2)};
}

bool reduced_fwi_iteration(ADMMState& state, const InversionConfig& config,
                           const Acquisition& acq, const ObservedData& observed,
                           const FrequencyStage& stage,
                           const std::optional<ElasticModel>& truth,
                           const IterationObserver& observer) {
  const Stopwatch clock(config.record_wall_time);
  const ElasticModel& model = state.model;
  const auto mask = acq.update_mask();
  const long long ns = acq.sources.count();
  const long long nf = static_cast<long long>(stage.freqs_hz.size());

  std::vector<double> data_res;
  double phi0 = 0.0;
  RealVector g1 = RealVector::Zero(acq.grid.size());
  RealVector g2 = RealVector::Zero(acq.grid.size());
  for (double f : stage.freqs_hz) {
    double phi_f = 0.0;
    const auto [a, b] = reduced_fwi_gradient(model, acq, observed, {f}, &phi_f);
    g1 += a;
    g2 += b;
    phi0 += phi_f;
    data_res.push_back(std::sqrt(2.0 * phi_f));
  }
  long long solves = 2 * ns * nf;
  for (Index i = 0; i < g1.size(); ++i) {
    if (!mask[std::size_t(i)]) g1[i] = g2[i] = 0.0;
  }

  const double gmax = std::max(g1.cwiseAbs().maxCoeff(), g2.cwiseAbs().maxCoeff());
  const double mmax = std::max(model.first().values.cwiseAbs().maxCoeff(),
                               model.second().values.cwiseAbs().maxCoeff());
  const double gnorm2 = g1.squaredNorm() + g2.squaredNorm();
  bool accepted = false;
  ElasticModel next = model;
  if (gmax > 0.0) {
    double alpha = config.fwi_step_fraction * mmax / gmax;
    const DifferenceOperators D = build_difference_operators(acq.grid);
    const ComplexMatrix P = acq.receivers.matrix.cast<Complex>();
    for (int h = 0; h <= config.fwi_max_halvings && !accepted; ++h, alpha *= 0.5) {
      ElasticModel trial =
          model.with_fields(model.first().values - alpha * g1,
                            model.second().values - alpha * g2);
      if (!trial.is_physical()) continue;
      double phi = 0.0;
      for (double f : stage.freqs_hz) {
        const WaveOperators ops = stretch_operators(D, acq.bc, angular(f));
        const ComplexMatrix U =
            forward_solve(assemble_impedance(trial, ops), acq.source_matrix(f));
        phi += 0.5 * (P * U - observed.at(f)).squaredNorm();
      }
      solves += ns * nf;
      if (phi <= phi0 - 1e-4 * alpha * gnorm2) {
        accepted = true;
        next = std::move(trial);
      }
    }
  }
  if (observer) {
    observer({state.iteration + 1, &stage, nullptr, nullptr, &model, &next});
  }

  ModelErrors err{std::numeric_limits<double>::quiet_NaN(),
                  std::numeric_limits<double>::quiet_NaN()};
  if (truth) err = model_errors(next, *truth, mask);
  const double ms = clock.elapsed_ms();
  for (std::size_t fi = 0; fi < stage.freqs_hz.size(); ++fi) {
    state.log.append({state.iteration + 1, stage.freqs_hz[fi], data_res[fi], 0.0,
                      err.err_mp, err.err_ms, fi == 0 ? solves : 0, ms});
  }
  state.model = std::move(next);
  ++state.k;
  ++state.iteration;
  return accepted;
}

InversionResult run_inversion(const InversionConfig& config, const Acquisition& acq,
                              const ObservedData& observed,
                              const ElasticModel& initial,
                              const std::optional<ElasticModel>& truth,
                              const IterationObserver& observer) {
  config.validate();
  if (!(initial.grid() == acq.grid)) throw Error("initial model grid does not match");
  ADMMState state{.model = convert_parameterization(initial, config.parameterization)};
  InversionResult result{state.model, {}, {}};
  for (std::size_t si = 0; si < config.schedule.stages.size(); ++si) {
    const FrequencyStage& stage = config.schedule.stages[si];
    state.stage = int(si);
    try {
      begin_stage(state, stage, acq);
      for (int it = 0; it < stage.iterations; ++it) {
        if (config.mode == Mode::ReducedFWI) {
          if (!reduced_fwi_iteration(state, config, acq, observed, stage, truth,
                                     observer)) {
            break;
          }
        } else {
          admm_iteration(state, config, acq, observed, stage, truth, observer);
        }
      }
    } catch (const SolverError& e) {
      std::cerr << "stage " << si << " aborted: " << e.what() << '\n';
    }
    result.stage_models.push_back(state.model);
  }
  result.model = state.model;
  result.log = std::move(state.log);
  return result;
}

InversionResult reduced_fwi_baseline(InversionConfig config, const Acquisition& acq,
                                     const ObservedData& observed,
                                     const ElasticModel& initial,
                                     const std::optional<ElasticModel>& truth) {
  config.mode = Mode::ReducedFWI;
  return run_inversion(config, acq, observed, initial, truth);
}

}  // namespace efwi
