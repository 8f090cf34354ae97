#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "efwi/io.hpp"

namespace py = pybind11;
using namespace efwi;

namespace {

// Node values as an (nz, nx) array.
RealMatrix as_image(const GridGeometry& g, const RealVector& v) {
  return Eigen::Map<const RealMatrix>(v.data(), g.nz(), g.nx());
}

RealVector from_image(const GridGeometry& g, const RealMatrix& image) {
  if (image.rows() != g.nz() || image.cols() != g.nx()) {
    throw Error("image shape does not match the grid");
  }
  return Eigen::Map<const RealVector>(image.data(), g.size());
}

py::dict model_dict(const ElasticModel& m) {
  const VelocityFields v = m.velocities();
  py::dict d;
  d["vp"] = as_image(m.grid(), v.vp.values);
  d["vs"] = as_image(m.grid(), v.vs.values);
  d["rho"] = as_image(m.grid(), m.density().values);
  return d;
}

py::list log_rows(const IterationLog& log) {
  py::list out;
  for (const LogRow& r : log.rows) {
    py::dict d;
    d["iter"] = r.iter;
    d["freq_hz"] = r.freq_hz;
    d["data_res"] = r.data_res;
    d["src_res"] = r.src_res;
    d["err_mp"] = r.err_mp;
    d["err_ms"] = r.err_ms;
    d["solves"] = r.solves;
    d["wall_ms"] = r.wall_ms;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_efwi, m) {
  m.doc() = "Frequency-domain elastic waveform inversion core";
  py::register_exception<Error>(m, "EfwiError", PyExc_ValueError);

  py::class_<GridGeometry>(m, "Grid")
      .def(py::init<int, int, double, double>(), py::arg("nz"), py::arg("nx"),
           py::arg("dz"), py::arg("dx"))
      .def_property_readonly("nz", &GridGeometry::nz)
      .def_property_readonly("nx", &GridGeometry::nx)
      .def_property_readonly("dz", &GridGeometry::dz)
      .def_property_readonly("dx", &GridGeometry::dx)
      .def("__repr__", [](const GridGeometry& g) {
        return "Grid(nz=" + std::to_string(g.nz()) + ", nx=" + std::to_string(g.nx()) + ")";
      });

  m.def("brocher_vs", py::vectorize(py::overload_cast<double>(&brocher_vs_from_vp)),
        py::arg("vp_km_s"));
  m.def("dual_damping_factor", &dual_damping_factor, py::arg("k"), py::arg("xi"));
  m.def("sketch_speedup_percent", &sketch_speedup_percent, py::arg("q"), py::arg("ns"));
  m.def("schedule_iterations",
        [](const std::vector<std::array<double, 3>>& cycles, int first, int rest) {
          std::vector<FrequencyCycle> c;
          for (const auto& x : cycles) c.push_back({x[0], x[1], x[2]});
          return build_schedule(c, first, rest).total_iterations();
        },
        py::arg("cycles"), py::arg("iters_first"), py::arg("iters_rest"));

  m.def(
      "project",
      [](double p, double s, std::array<double, 4> box, std::array<double, 3> lower,
         std::array<double, 3> upper, double tol, int max_iter) {
        const BoxSet b{box[0], box[1], box[2], box[3]};
        const BandSet band{{lower[0], lower[1], lower[2], Sense::AtLeast},
                           {upper[0], upper[1], upper[2], Sense::AtMost}};
        const auto [y, diag] = project_intersection({p, s}, b, band, tol, max_iter);
        return py::make_tuple(y.p, y.s, diag.converged);
      },
      py::arg("p"), py::arg("s"), py::arg("box"), py::arg("lower"), py::arg("upper"),
      py::arg("tol") = 1e-10, py::arg("max_iter") = 1000,
      "Projects (p, s) onto box (p_min, s_min, p_max, s_max) intersected with "
      "the band a*p + b*s >= c (lower) and a*p + b*s <= c (upper).");

  m.def("scenario_names", &scenario_names);
  m.def(
      "scenario",
      [](const std::string& name, int nz, int nx, double spacing, int sources, int receivers) {
        const Scenario s = generate_scenario(name, {nz, nx, spacing, sources, receivers});
        py::dict d;
        d["name"] = s.name;
        d["grid"] = s.truth.grid();
        d["truth"] = model_dict(s.truth);
        d["initial"] = model_dict(s.initial);
        d["frequencies"] = s.frequencies();
        d["iterations"] = s.schedule.total_iterations();
        d["sources"] = s.acquisition.sources.count();
        d["receivers"] = s.acquisition.receivers.receivers();
        return d;
      },
      py::arg("name"), py::arg("nz") = 0, py::arg("nx") = 0, py::arg("spacing") = 0.0,
      py::arg("sources") = 0, py::arg("receivers") = 0);

  m.def(
      "read_grid",
      [](const fs::path& path) {
        const GridFile g = read_grid(path);
        return py::make_tuple(g.grid, as_image(g.grid, g.field.values), g.name,
                              std::string(unit_name(g.field.unit)));
      },
      py::arg("path"));
  m.def(
      "write_grid",
      [](const fs::path& path, const GridGeometry& g, const RealMatrix& image,
         const std::string& name, const std::string& unit) {
        write_grid(path, g, {from_image(g, image), parse_unit(unit)}, name);
      },
      py::arg("path"), py::arg("grid"), py::arg("image"), py::arg("name"),
      py::arg("unit") = "m/s");

  m.def(
      "run_manifest",
      [](const fs::path& path, std::optional<std::uint64_t> seed, std::optional<std::string> mode,
         std::optional<double> beta, std::optional<double> xi, std::optional<int> sketch_q,
         std::optional<fs::path> output_dir) {
        ManifestOverrides ov{seed, {}, beta, xi, sketch_q, output_dir};
        if (mode) ov.mode = parse_mode(*mode);
        std::optional<RunOutputs> run;
        {
          py::gil_scoped_release release;
          run.emplace(run_manifest(load_manifest(path, ov)));
        }
        const RunOutputs& out = *run;
        py::dict d;
        d["log"] = log_rows(out.result.log);
        d["log_path"] = out.log_path;
        d["model_paths"] = out.model_paths;
        d["model"] = model_dict(out.result.model);
        return d;
      },
      py::arg("path"), py::arg("seed") = py::none(), py::arg("mode") = py::none(),
      py::arg("beta") = py::none(), py::arg("xi") = py::none(),
      py::arg("sketch_q") = py::none(), py::arg("output_dir") = py::none());
}
