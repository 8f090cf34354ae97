#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "efwi/driver.hpp"
#include "efwi/model.hpp"

namespace efwi {

namespace fs = std::filesystem;

/// Grid file: a text header terminated by "end", then nz * nx little-endian
/// float64 values with z varying fastest.
struct GridFile {
  GridGeometry grid;
  ParameterField field;
  std::string name;
};

void write_grid(const fs::path& path, const GridGeometry& grid,
                const ParameterField& field, const std::string& name);
GridFile read_grid(const fs::path& path);

/// Data file: text header, then per frequency a column-major 2nr x ns
/// complex matrix as interleaved little-endian float64 (re, im).
void write_data(const fs::path& path, const ObservedData& data);
ObservedData read_data(const fs::path& path);

/// Complex Gaussian noise rescaled so the realized SNR of every frequency
/// matrix is exactly `snr_db`. An infinite SNR returns the data unchanged.
ObservedData add_noise(const ObservedData& data, double snr_db, std::uint64_t seed);

struct ScenarioOptions {
  int nz = 0;          ///< 0 keeps the scenario default
  int nx = 0;
  double spacing = 0.0;
  int sources = 0;
  int receivers = 0;
};

struct Scenario {
  std::string name;
  ElasticModel truth;
  ElasticModel initial;
  Acquisition acquisition;
  FrequencySchedule schedule;

  /// Distinct frequencies used by the schedule, ascending.
  std::vector<double> frequencies() const;
};

/// double-circle, double-circle-rough, layered-1d-start or homogeneous.
Scenario generate_scenario(const std::string& name, const ScenarioOptions& options = {});
std::vector<std::string> scenario_names();

/// Everything needed to run one manifest.
struct RunSetup {
  fs::path manifest_path;
  Scenario scenario;
  InversionConfig config;
  std::optional<double> noise_snr_db;
  std::optional<fs::path> observed_path;
  fs::path output_dir;
  /// Iterations whose inverse-Hessian block contributions are written out.
  std::vector<int> crosstalk_iterations;
};

/// Command-line overrides applied on top of the manifest keys.
struct ManifestOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<Mode> mode;
  std::optional<double> beta;
  std::optional<double> xi;
  std::optional<int> sketch_q;
  std::optional<fs::path> output_dir;
};

RunSetup load_manifest(const fs::path& path, const ManifestOverrides& overrides = {});

/// Observed data for a setup: read from file when given, otherwise modeled
/// in the true model, with noise added when requested.
ObservedData observed_data(const RunSetup& setup);

struct RunOutputs {
  InversionResult result;
  fs::path log_path;
  std::vector<fs::path> model_paths;
};

/// Runs the inversion and writes log.csv, the final model grids and any
/// requested cross-talk snapshots.
RunOutputs run_manifest(const RunSetup& setup);

/// Writes truth/initial grids and a manifest for a generated scenario.
fs::path write_scenario(const Scenario& scenario, const fs::path& dir);

void write_model(const ElasticModel& model, const fs::path& dir,
                 const std::string& prefix);

}  // namespace efwi
