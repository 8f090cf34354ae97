#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "efwi/constraints.hpp"
#include "efwi/discretization.hpp"
#include "efwi/model.hpp"
#include "efwi/model_update.hpp"
#include "efwi/sketching.hpp"
#include "efwi/wavefield.hpp"

namespace efwi {

enum class Mode { ADMM, WRI, ReducedFWI };

std::string_view mode_name(Mode mode);
Mode parse_mode(std::string_view name);

/// Frequencies inverted together for a number of iterations.
struct FrequencyStage {
  std::vector<double> freqs_hz;
  int iterations = 1;
};

struct FrequencySchedule {
  std::vector<FrequencyStage> stages;

  int total_iterations() const;
  void validate() const;
};

struct FrequencyCycle {
  double f_lo = 0.0;
  double f_hi = 0.0;
  double step = 0.5;
};

/// One stage per frequency; the first frequency of each cycle runs
/// `iters_first` iterations and the others `iters_rest`.
FrequencySchedule build_schedule(const std::vector<FrequencyCycle>& cycles,
                                 int iters_first, int iters_rest);

/// Sketch size per iteration: `warmup_q` for the first `warmup_iterations`
/// iterations, `q` afterwards; q = 0 disables sketching.
struct SketchSpec {
  int q = 0;
  int warmup_iterations = 0;
  int warmup_q = 0;

  bool enabled() const { return q > 0; }
  int q_at(int iteration) const {
    return iteration < warmup_iterations ? warmup_q : q;
  }
};

/// Solve-count accounting of a schedule run with a sketch specification.
/// Every frequency of an iteration costs one solve per kept source.
SolveAccounting pde_solve_accounting(const FrequencySchedule& schedule,
                                     const SketchSpec& sketch, int ns);

/// Reference factor of the normalized penalty. With it the default
/// beta = 1e6 sits in the working range of the double-circle toy.
inline constexpr double kBetaReference = 5e-4;

struct InversionConfig {
  double beta = 1e6;
  double xi = 0.0;
  FrequencySchedule schedule;
  Parameterization parameterization = Parameterization::SquaredVelocity;
  std::optional<ConstraintProjector> constraints;
  SketchSpec sketch;
  Mode mode = Mode::ADMM;
  std::uint64_t seed = 0;

  /// Use beta * kBetaReference / max|diag A(m)|^2, with the diagonal taken
  /// at the start of each stage, so beta does not depend on physical units.
  bool normalize_beta = true;
  double gn_step_length = 1.0;
  ConstrainedStepOptions admm_step;
  /// Initial step of the reduced-space line search, as a fraction of the
  /// largest model value moved by the first trial.
  double fwi_step_fraction = 0.02;
  int fwi_max_halvings = 10;
  bool record_wall_time = false;

  void validate() const;
};

/// Sources, receivers and boundary conditions shared by every frequency.
struct Acquisition {
  GridGeometry grid;
  BoundarySpec bc;
  SourceSet sources;
  SamplingOperator receivers;
  double ricker_f0 = 10.0;

  /// Source matrix at a frequency, scaled by the wavelet spectrum.
  ComplexMatrix source_matrix(double f_hz) const;
  /// Cells the inversion may update (outside absorbing layers).
  std::vector<std::uint8_t> update_mask() const;
};

Acquisition make_acquisition(const GridGeometry& grid, const BoundarySpec& bc,
                             const std::vector<Point>& sources,
                             const std::vector<Point>& receivers,
                             double ricker_f0 = 10.0,
                             Complex force_x = 0.0, Complex force_z = 1.0);

/// Observed data, one 2nr x ns matrix per frequency.
struct ObservedData {
  std::vector<double> freqs_hz;
  std::vector<ComplexMatrix> data;

  const ComplexMatrix& at(double f_hz) const;
  void set(double f_hz, ComplexMatrix d);
};

ObservedData model_data(const ElasticModel& model, const Acquisition& acq,
                        const std::vector<double>& freqs_hz);

struct LogRow {
  int iter = 0;
  double freq_hz = 0.0;
  double data_res = 0.0;
  double src_res = 0.0;
  double err_mp = 0.0;
  double err_ms = 0.0;
  long long solves = 0;
  double wall_ms = 0.0;
};

struct IterationLog {
  std::vector<LogRow> rows;

  void append(const LogRow& row) { rows.push_back(row); }
  int iterations() const { return rows.empty() ? 0 : rows.back().iter; }
  /// Residuals of one iteration combined over its frequencies in quadrature.
  std::pair<double, double> residuals_at(int iter) const;
  /// Model errors logged at one iteration.
  std::pair<double, double> errors_at(int iter) const;
  long long total_solves() const;
  void write_csv(std::ostream& os) const;
  static IterationLog read_csv(std::istream& is);
};

struct ADMMState {
  ElasticModel model;
  /// Scaled duals per stage frequency, each 2n x ns.
  std::vector<ComplexMatrix> duals;
  /// max|diag A|^2 per stage frequency, fixed at the start of the stage.
  std::vector<double> beta_scale;
  std::vector<double> freqs_hz;  ///< frequencies of the current stage
  int k = 0;            ///< iteration inside the current stage
  int iteration = 0;    ///< global iteration count
  int stage = 0;
  IterationLog log;
};

struct ModelErrors {
  double err_mp = 0.0;
  double err_ms = 0.0;
};

/// ||m - m*|| / ||m*|| per velocity class over the masked cells.
ModelErrors model_errors(const ElasticModel& model, const ElasticModel& truth,
                         const std::vector<std::uint8_t>& mask);

struct Residuals {
  double data = 0.0;    ///< ||P U - D||_F
  double source = 0.0;  ///< ||A U - B||_F
};

Residuals compute_residuals(const ImpedanceMatrix& A, const ComplexMatrix& U,
                            const ComplexMatrix& B, const SamplingOperator& P,
                            const ComplexMatrix& D);

/// s <- k / (k + xi) (s + b - A u); the factor is 1 when xi = 0.
ComplexMatrix damped_dual_update(const ComplexMatrix& s, const ComplexMatrix& b,
                                 const ImpedanceMatrix& A, const ComplexMatrix& u,
                                 int k, double xi);
double dual_damping_factor(int k, double xi);

/// Passed to the observer after every model update.
struct IterationReport {
  int iteration = 0;
  const FrequencyStage* stage = nullptr;
  const NormalSystem* system = nullptr;   ///< null for the reduced-space mode
  const ModelUpdate* update = nullptr;    ///< null for Gauss-Newton and FWI
  const ElasticModel* prior = nullptr;
  const ElasticModel* model = nullptr;
};

using IterationObserver = std::function<void(const IterationReport&)>;

/// Starts a stage: resets the duals and the stage counter.
void begin_stage(ADMMState& state, const FrequencyStage& stage,
                 const Acquisition& acq);

/// One outer iteration of the wavefield/model/dual splitting on the given
/// stage. WRI mode keeps the duals at zero.
void admm_iteration(ADMMState& state, const InversionConfig& config,
                    const Acquisition& acq, const ObservedData& observed,
                    const FrequencyStage& stage,
                    const std::optional<ElasticModel>& truth = std::nullopt,
                    const IterationObserver& observer = {});

/// One steepest-descent iteration of reduced-space FWI with backtracking.
/// Returns false when the line search stalls.
bool reduced_fwi_iteration(ADMMState& state, const InversionConfig& config,
                           const Acquisition& acq, const ObservedData& observed,
                           const FrequencyStage& stage,
                           const std::optional<ElasticModel>& truth = std::nullopt,
                           const IterationObserver& observer = {});

/// Gradient of 1/2 sum ||P A(m)^-1 b - d||^2 over sources and the stage
/// frequencies, in the model's parameterization.
std::pair<RealVector, RealVector> reduced_fwi_gradient(
    const ElasticModel& model, const Acquisition& acq,
    const ObservedData& observed, const std::vector<double>& freqs_hz,
    double* misfit = nullptr);

struct InversionResult {
  ElasticModel model;
  IterationLog log;
  std::vector<ElasticModel> stage_models;
};

InversionResult run_inversion(const InversionConfig& config,
                              const Acquisition& acq,
                              const ObservedData& observed,
                              const ElasticModel& initial,
                              const std::optional<ElasticModel>& truth = std::nullopt,
                              const IterationObserver& observer = {});

/// run_inversion with mode forced to ReducedFWI.
InversionResult reduced_fwi_baseline(InversionConfig config,
                                     const Acquisition& acq,
                                     const ObservedData& observed,
                                     const ElasticModel& initial,
                                     const std::optional<ElasticModel>& truth = std::nullopt);

}  // namespace efwi
