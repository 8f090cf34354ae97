// Command-line front end: scenario generation, forward modeling, inversion,
// constraint projection and metric recomputation.

#include <cstdlib>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "efwi/io.hpp"

namespace {

using namespace efwi;

struct CommonFlags {
  std::string manifest;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<double> beta;
  std::optional<double> xi;
  std::optional<int> sketch_q;
  std::optional<std::string> output_dir;

  void attach(CLI::App* app) {
    app->add_option("manifest", manifest, "Run manifest (JSON)")->required()->check(CLI::ExistingFile);
    app->add_option("--seed", seed, "Master seed");
    app->add_option("--mode", mode, "admm, wri or fwi");
    app->add_option("--beta", beta, "Penalty parameter");
    app->add_option("--xi", xi, "Dual damping parameter");
    app->add_option("--sketch-q", sketch_q, "Sketched sources per iteration (0 disables)");
    app->add_option("--output-dir", output_dir, "Output directory");
  }

  RunSetup load() const {
    ManifestOverrides ov;
    ov.seed = seed;
    if (mode) ov.mode = parse_mode(*mode);
    ov.beta = beta;
    ov.xi = xi;
    ov.sketch_q = sketch_q;
    if (output_dir) ov.output_dir = fs::path(*output_dir);
    return load_manifest(manifest, ov);
  }
};

int cmd_scenario(const std::string& name, const std::string& out, const ScenarioOptions& o) {
  const Scenario s = generate_scenario(name, o);
  const fs::path manifest = write_scenario(s, out);
  const ObservedData d = model_data(s.truth, s.acquisition, s.frequencies());
  write_data(fs::path(out) / "observed.data", d);
  std::cout << "wrote " << manifest.string() << " (" << s.acquisition.sources.count()
            << " sources, " << s.acquisition.receivers.receivers() << " receivers, "
            << s.truth.grid().nz() << "x" << s.truth.grid().nx() << " grid)\n";
  return 0;
}

int cmd_forward(const CommonFlags& f, const std::string& out) {
  const RunSetup setup = f.load();
  const ObservedData d = observed_data(setup);
  const fs::path path = out.empty() ? setup.output_dir / "observed.data" : fs::path(out);
  write_data(path, d);
  std::cout << "wrote " << path.string() << " (" << d.freqs_hz.size() << " frequencies)\n";
  return 0;
}

int cmd_invert(const CommonFlags& f) {
  const RunSetup setup = f.load();
  const RunOutputs out = run_manifest(setup);
  const IterationLog& log = out.result.log;
  const int last = log.iterations();
  if (last > 0) {
    const auto [d, s] = log.residuals_at(last);
    const auto [ep, es] = log.errors_at(last);
    std::cout << mode_name(setup.config.mode) << ": " << last << " iterations, data "
              << d << ", source " << s << ", error vp " << ep << ", vs " << es << '\n';
  }
  std::cout << "log: " << out.log_path.string() << '\n';
  return 0;
}

int cmd_project(const CommonFlags& f, const std::string& vp_path, const std::string& vs_path,
                const std::string& out_prefix) {
  const RunSetup setup = f.load();
  if (!setup.config.constraints) throw Error("manifest defines no constraints");
  const GridFile vp = read_grid(vp_path), vs = read_grid(vs_path);
  if (!(vp.grid == vs.grid)) throw Error("vp and vs grids differ");
  RealVector p = vp.field.values, s = vs.field.values;
  const ProjectionDiagnostics diag =
      setup.config.constraints->project(p, s, Parameterization::Velocity);
  write_grid(out_prefix + "_vp.grid", vp.grid, {p, vp.field.unit}, "vp");
  write_grid(out_prefix + "_vs.grid", vs.grid, {s, vs.field.unit}, "vs");
  std::cout << "projected; max Dykstra iterations " << diag.iterations << ", infeasibility "
            << diag.infeasibility << (diag.converged ? "" : " (not converged)") << '\n';
  return 0;
}

int cmd_metrics(const CommonFlags& f, const std::string& vp_path, const std::string& vs_path) {
  const RunSetup setup = f.load();
  const GridFile vp = read_grid(vp_path), vs = read_grid(vs_path);
  const ElasticModel model = ElasticModel::from_velocities(
      vp.grid, vp.field.values, vs.field.values, setup.scenario.truth.density().values);
  const ModelErrors e =
      model_errors(model, setup.scenario.truth, setup.scenario.acquisition.update_mask());
  std::cout.precision(17);
  std::cout << "err_mp," << e.err_mp << "\nerr_ms," << e.err_ms << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Frequency-domain elastic waveform inversion"};
  app.require_subcommand(1);

  std::string scenario_name, scenario_out = "scenario";
  ScenarioOptions so;
  auto* scen = app.add_subcommand("scenario", "Emit a benchmark scenario");
  scen->add_option("name", scenario_name, "double-circle, double-circle-rough, layered-1d-start or homogeneous")->required();
  scen->add_option("--out", scenario_out, "Output directory");
  scen->add_option("--sources", so.sources, "Source count");
  scen->add_option("--receivers", so.receivers, "Receiver count");
  scen->add_option("--nz", so.nz, "Grid rows");
  scen->add_option("--nx", so.nx, "Grid columns");

  CommonFlags fwd_flags, inv_flags, proj_flags, met_flags;
  std::string fwd_out, proj_vp, proj_vs, proj_out = "projected", met_vp, met_vs;
  auto* fwd = app.add_subcommand("forward", "Model data in the true model of a manifest");
  fwd_flags.attach(fwd);
  fwd->add_option("--out", fwd_out, "Data file");
  auto* inv = app.add_subcommand("invert", "Run an inversion");
  inv_flags.attach(inv);
  auto* proj = app.add_subcommand("project", "Project a (vp, vs) model pair onto the constraint sets");
  proj_flags.attach(proj);
  proj->add_option("--vp", proj_vp)->required()->check(CLI::ExistingFile);
  proj->add_option("--vs", proj_vs)->required()->check(CLI::ExistingFile);
  proj->add_option("--out", proj_out, "Output prefix");
  auto* met = app.add_subcommand("metrics", "Model errors of a snapshot against the true model");
  met_flags.attach(met);
  met->add_option("--vp", met_vp)->required()->check(CLI::ExistingFile);
  met->add_option("--vs", met_vs)->required()->check(CLI::ExistingFile);

  CLI11_PARSE(app, argc, argv);
  try {
    if (scen->parsed()) return cmd_scenario(scenario_name, scenario_out, so);
    if (fwd->parsed()) return cmd_forward(fwd_flags, fwd_out);
    if (inv->parsed()) return cmd_invert(inv_flags);
    if (proj->parsed()) return cmd_project(proj_flags, proj_vp, proj_vs, proj_out);
    if (met->parsed()) return cmd_metrics(met_flags, met_vp, met_vs);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
