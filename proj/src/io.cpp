#include "efwi/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

namespace efwi {

using json = nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian platforms are not supported");

void write_le_doubles(std::ostream& os, const double* values, std::size_t count) {
  if constexpr (std::endian::native == std::endian::little) {
    os.write(reinterpret_cast<const char*>(values), std::streamsize(count * 8));
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, values + i, 8);
      bits = __builtin_bswap64(bits);
      os.write(reinterpret_cast<const char*>(&bits), 8);
    }
  }
}

void read_le_doubles(std::istream& is, double* values, std::size_t count,
                     const fs::path& path) {
  is.read(reinterpret_cast<char*>(values), std::streamsize(count * 8));
  if (std::size_t(is.gcount()) != count * 8) {
    throw Error(path.string() + ": truncated payload (expected " +
                std::to_string(count * 8) + " bytes, got " +
                std::to_string(is.gcount()) + ")");
  }
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i < count; ++i) {
      std::uint64_t bits;
      std::memcpy(&bits, values + i, 8);
      bits = __builtin_bswap64(bits);
      std::memcpy(values + i, &bits, 8);
    }
  }
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// Reads "key value" lines up to "end"; the first line must be `magic`.
std::vector<std::pair<std::string, std::string>> read_header(std::istream& is,
                                                             const std::string& magic,
                                                             const fs::path& path) {
  std::string line;
  if (!std::getline(is, line) || line != magic) {
    throw Error(path.string() + ": not a '" + magic + "' file");
  }
  std::vector<std::pair<std::string, std::string>> out;
  while (std::getline(is, line)) {
    if (line == "end") return out;
    const auto sp = line.find(' ');
    if (sp == std::string::npos) throw Error(path.string() + ": malformed header line '" + line + "'");
    out.emplace_back(line.substr(0, sp), line.substr(sp + 1));
  }
  throw Error(path.string() + ": header is missing 'end'");
}

const std::string& header_value(const std::vector<std::pair<std::string, std::string>>& h,
                                const std::string& key, const fs::path& path) {
  for (const auto& [k, v] : h) {
    if (k == key) return v;
  }
  throw Error(path.string() + ": header lacks '" + key + "'");
}

double parse_double(const std::string& s, const fs::path& path) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size()) throw Error(path.string() + ": bad number '" + s + "'");
  return v;
}

int parse_int(const std::string& s, const fs::path& path) {
  const double v = parse_double(s, path);
  if (v != std::floor(v)) throw Error(path.string() + ": expected integer, got '" + s + "'");
  return int(v);
}

void expect_eof(std::istream& is, const fs::path& path) {
  if (is.peek() != std::char_traits<char>::eof()) {
    throw Error(path.string() + ": trailing bytes after payload");
  }
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  return os;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path.string() + "'");
  return is;
}

std::vector<Point> circle_points(Point center, double radius, int count) {
  std::vector<Point> pts;
  for (int k = 0; k < count; ++k) {
    const double a = 2.0 * std::numbers::pi * k / count;
    pts.push_back({center.x + radius * std::cos(a), center.z + radius * std::sin(a)});
  }
  return pts;
}

BoundarySpec absorbing_boundary(int width, double vmax, double h) {
  BoundarySpec bc;
  bc.pml_width = width;
  bc.pml_max_damping = suggested_pml_damping(vmax, width * h);
  return bc;
}

Scenario double_circle(const ScenarioOptions& o) {
  const int nz = o.nz ? o.nz : 100;
  const int nx = o.nx ? o.nx : 100;
  const double h = o.spacing > 0.0 ? o.spacing : 30.0;
  const GridGeometry grid(nz, nx, h, h);
  const Index n = grid.size();
  const double vp0 = 3000.0, vs0 = 1750.0, rho0 = 2000.0;
  const Point c{grid.x(nx - 1) / 2.0, grid.z(nz - 1) / 2.0};
  const double offset = 450.0, radius = 250.0;
  RealVector vp = RealVector::Constant(n, vp0);
  RealVector vs = RealVector::Constant(n, vs0);
  for (Index i = 0; i < n; ++i) {
    const double x = grid.x(grid.ix_of(i)), z = grid.z(grid.iz_of(i));
    if (std::hypot(x - (c.x - offset), z - c.z) < radius) vp[i] = 1.1 * vp0;
    if (std::hypot(x - (c.x + offset), z - c.z) < radius) vs[i] = 1.1 * vs0;
  }
  const RealVector rho = RealVector::Constant(n, rho0);
  const BoundarySpec bc = absorbing_boundary(12, vp0, h);
  const auto src = circle_points(c, 1000.0, o.sources ? o.sources : 16);
  const auto rec = circle_points(c, 1000.0, o.receivers ? o.receivers : 128);
  Scenario s{"double-circle",
             ElasticModel::from_velocities(grid, vp, vs, rho),
             ElasticModel::from_velocities(grid, RealVector::Constant(n, vp0),
                                           RealVector::Constant(n, vs0), rho),
             make_acquisition(grid, bc, src, rec, 10.0),
             {{{{2.5, 5.0}, 70}}}};
  return s;
}

// Same target, but the start increases linearly with depth from 8% below to
// 8% above the background.
Scenario double_circle_rough(const ScenarioOptions& o) {
  Scenario s = double_circle(o);
  const GridGeometry& g = s.truth.grid();
  const Index n = g.size();
  RealVector vp(n), vs(n);
  for (Index i = 0; i < n; ++i) {
    const double t = g.z(g.iz_of(i)) / g.z(g.nz() - 1);
    vp[i] = 3000.0 * (0.92 + 0.16 * t);
    vs[i] = 1750.0 * (0.92 + 0.16 * t);
  }
  s.name = "double-circle-rough";
  s.initial = ElasticModel::from_velocities(g, vp, vs, s.truth.density().values);
  return s;
}

Scenario layered(const ScenarioOptions& o) {
  const int nz = o.nz ? o.nz : 64;
  const int nx = o.nx ? o.nx : 128;
  const double h = o.spacing > 0.0 ? o.spacing : 25.0;
  const GridGeometry grid(nz, nx, h, h);
  const Index n = grid.size();
  const int pml = 10;
  const double top = pml * h, bottom = grid.z(nz - 1 - pml);
  const double width = grid.x(nx - 1);

  // Folded layers with a thrust-like offset, Vp in km/s inside the range
  // where the Brocher relation increases.
  const std::vector<double> layer_vp = {2.8, 3.2, 3.6, 4.0, 4.4};
  const std::vector<double> depth_frac = {0.2, 0.42, 0.62, 0.8};
  RealVector vp(n), vs(n), vp_init(n), vs_init(n);
  for (Index i = 0; i < n; ++i) {
    const double x = grid.x(grid.ix_of(i)), z = grid.z(grid.iz_of(i));
    const double zr = std::clamp((z - top) / (bottom - top), 0.0, 1.0);
    const double fold = 0.06 * std::sin(2.0 * std::numbers::pi * x / width);
    const double thrust = x > 0.55 * width ? -0.05 : 0.0;
    std::size_t k = 0;
    while (k < depth_frac.size() && zr > depth_frac[k] + fold + thrust) ++k;
    vp[i] = layer_vp[k];
    vp_init[i] = 2.7 + (4.6 - 2.7) * zr;
    vs_init[i] = 1.0 + (2.0 - 1.0) * zr;
  }
  const ParameterField vs_field =
      brocher_vs_from_vp(ParameterField{vp, Unit::KilometersPerSecond}, 1.0);
  vs = vs_field.values;
  vp *= 1000.0;
  vs *= 1000.0;
  vp_init *= 1000.0;
  vs_init *= 1000.0;

  const RealVector rho = RealVector::Constant(n, 2000.0);
  const BoundarySpec bc = absorbing_boundary(pml, vp_init.maxCoeff(), h);
  const int ns = o.sources ? o.sources : 16;
  const int nr = o.receivers ? o.receivers : 96;
  const double x0 = (pml + 2) * h, x1 = grid.x(nx - 1 - pml - 2);
  const double zs = (pml + 2) * h;
  std::vector<Point> src, rec;
  for (int k = 0; k < ns; ++k) src.push_back({x0 + (x1 - x0) * (k + 0.5) / ns, zs});
  for (int k = 0; k < nr; ++k) {
    rec.push_back({x0 + (x1 - x0) * k / std::max(nr - 1, 1), zs});
  }
  FrequencySchedule schedule = build_schedule({{3.0, 6.0, 1.0}}, 10, 5);
  return {"layered-1d-start", ElasticModel::from_velocities(grid, vp, vs, rho),
          ElasticModel::from_velocities(grid, vp_init, vs_init, rho),
          make_acquisition(grid, bc, src, rec, 10.0), schedule};
}

Scenario homogeneous(const ScenarioOptions& o) {
  const int nz = o.nz ? o.nz : 40;
  const int nx = o.nx ? o.nx : 40;
  const double h = o.spacing > 0.0 ? o.spacing : 30.0;
  const GridGeometry grid(nz, nx, h, h);
  const Index n = grid.size();
  const ElasticModel m = ElasticModel::from_velocities(
      grid, RealVector::Constant(n, 3000.0), RealVector::Constant(n, 1750.0),
      RealVector::Constant(n, 2000.0));
  const Point c{grid.x(nx - 1) / 2.0, grid.z(nz - 1) / 2.0};
  const BoundarySpec bc = absorbing_boundary(8, 3000.0, h);
  return {"homogeneous", m, m,
          make_acquisition(grid, bc, circle_points(c, 300.0, o.sources ? o.sources : 4),
                           circle_points(c, 300.0, o.receivers ? o.receivers : 32), 10.0),
          {{{{3.0}, 2}}}};
}

// ---- manifest parsing ----

EdgeKind parse_edge(const std::string& s) {
  if (s == "absorbing") return EdgeKind::Absorbing;
  if (s == "free-surface") return EdgeKind::FreeSurface;
  throw Error("unknown boundary kind '" + s + "' (absorbing, free-surface)");
}

std::vector<Point> parse_points(const json& j) {
  std::vector<Point> pts;
  if (j.is_array()) {
    for (const auto& p : j) pts.push_back({p.at(0).get<double>(), p.at(1).get<double>()});
    return pts;
  }
  if (j.contains("circle")) {
    const auto& c = j.at("circle");
    return circle_points({c.at("center").at(0).get<double>(), c.at("center").at(1).get<double>()},
                         c.at("radius").get<double>(), c.at("count").get<int>());
  }
  if (j.contains("line")) {
    const auto& l = j.at("line");
    const double x0 = l.at("x0").get<double>(), x1 = l.at("x1").get<double>();
    const double z = l.at("z").get<double>();
    const int count = l.at("count").get<int>();
    for (int k = 0; k < count; ++k) {
      pts.push_back({x0 + (x1 - x0) * k / std::max(count - 1, 1), z});
    }
    return pts;
  }
  throw Error("acquisition points must be a list, a circle or a line");
}

HalfPlane parse_halfplane(const json& j, Sense sense) {
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>(), sense};
}

FrequencySchedule parse_schedule(const json& j) {
  FrequencySchedule s;
  if (j.contains("stages")) {
    for (const auto& st : j.at("stages")) {
      s.stages.push_back({st.at("freqs").get<std::vector<double>>(),
                          st.at("iterations").get<int>()});
    }
  } else if (j.contains("cycles")) {
    std::vector<FrequencyCycle> cycles;
    for (const auto& c : j.at("cycles")) {
      cycles.push_back({c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>()});
    }
    s = build_schedule(cycles, j.at("iters_first").get<int>(), j.at("iters_rest").get<int>());
  } else {
    throw Error("schedule needs 'stages' or 'cycles'");
  }
  s.validate();
  return s;
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "name",        "scenario",   "scenario_options", "model",     "acquisition",
      "boundary",    "schedule",   "beta",             "xi",        "parameterization",
      "constraints", "sketch",     "mode",             "seed",      "output_dir",
      "noise_snr_db", "observed",  "record_wall_time", "normalize_beta",
      "description", "crosstalk_iterations"};
  return keys;
}

}  // namespace

void write_grid(const fs::path& path, const GridGeometry& grid,
                const ParameterField& field, const std::string& name) {
  if (field.size() != grid.size()) throw Error("write_grid: field size does not match grid");
  if (name.empty() || name.find_first_of(" \n") != std::string::npos) {
    throw Error("write_grid: field name must be a single word");
  }
  std::ofstream os = open_out(path);
  os << "EFWIGRID 1\n"
     << "nz " << grid.nz() << "\nnx " << grid.nx() << "\ndz " << format_double(grid.dz())
     << "\ndx " << format_double(grid.dx()) << "\nunits " << unit_name(field.unit)
     << "\nfield " << name << "\nend\n";
  write_le_doubles(os, field.values.data(), std::size_t(field.size()));
  if (!os) throw Error("write_grid: failed writing '" + path.string() + "'");
}

GridFile read_grid(const fs::path& path) {
  std::ifstream is = open_in(path);
  const auto h = read_header(is, "EFWIGRID 1", path);
  const GridGeometry grid(parse_int(header_value(h, "nz", path), path),
                          parse_int(header_value(h, "nx", path), path),
                          parse_double(header_value(h, "dz", path), path),
                          parse_double(header_value(h, "dx", path), path));
  GridFile out{grid, {RealVector(grid.size()), parse_unit(header_value(h, "units", path))},
               header_value(h, "field", path)};
  read_le_doubles(is, out.field.values.data(), std::size_t(grid.size()), path);
  expect_eof(is, path);
  return out;
}

void write_data(const fs::path& path, const ObservedData& data) {
  if (data.freqs_hz.empty()) throw Error("write_data: no frequencies");
  const Index rows = data.data.front().rows(), cols = data.data.front().cols();
  for (const auto& d : data.data) {
    if (d.rows() != rows || d.cols() != cols) throw Error("write_data: inconsistent shapes");
  }
  std::ofstream os = open_out(path);
  os << "EFWIDATA 1\nrows " << rows << "\ncols " << cols << "\nfreqs "
     << data.freqs_hz.size() << "\nfreq_hz";
  for (double f : data.freqs_hz) os << ' ' << format_double(f);
  os << "\nend\n";
  for (const auto& d : data.data) {
    write_le_doubles(os, reinterpret_cast<const double*>(d.data()), std::size_t(2 * d.size()));
  }
  if (!os) throw Error("write_data: failed writing '" + path.string() + "'");
}

ObservedData read_data(const fs::path& path) {
  std::ifstream is = open_in(path);
  const auto h = read_header(is, "EFWIDATA 1", path);
  const int rows = parse_int(header_value(h, "rows", path), path);
  const int cols = parse_int(header_value(h, "cols", path), path);
  const int nf = parse_int(header_value(h, "freqs", path), path);
  std::istringstream fl(header_value(h, "freq_hz", path));
  ObservedData out;
  for (std::string tok; fl >> tok;) out.freqs_hz.push_back(parse_double(tok, path));
  if (int(out.freqs_hz.size()) != nf || rows < 1 || cols < 1) {
    throw Error(path.string() + ": inconsistent data header");
  }
  for (int k = 0; k < nf; ++k) {
    ComplexMatrix d(rows, cols);
    read_le_doubles(is, reinterpret_cast<double*>(d.data()), std::size_t(2 * d.size()), path);
    out.data.push_back(std::move(d));
  }
  expect_eof(is, path);
  return out;
}

ObservedData add_noise(const ObservedData& data, double snr_db, std::uint64_t seed) {
  if (std::isnan(snr_db)) throw Error("add_noise: SNR is NaN");
  if (std::isinf(snr_db) && snr_db > 0.0) return data;
  ObservedData out = data;
  for (std::size_t k = 0; k < out.data.size(); ++k) {
    ComplexMatrix& d = out.data[k];
    std::mt19937_64 rng(derive_seed(seed, streams::noise, k));
    std::normal_distribution<double> normal(0.0, 1.0);
    ComplexMatrix noise(d.rows(), d.cols());
    for (Index j = 0; j < noise.cols(); ++j) {
      for (Index i = 0; i < noise.rows(); ++i) {
        const double re = normal(rng);
        noise(i, j) = Complex(re, normal(rng));
      }
    }
    const double signal = d.squaredNorm();
    const double target = signal / std::pow(10.0, snr_db / 10.0);
    noise *= std::sqrt(target / noise.squaredNorm());
    d += noise;
  }
  return out;
}

std::vector<double> Scenario::frequencies() const {
  std::vector<double> f;
  for (const auto& s : schedule.stages) f.insert(f.end(), s.freqs_hz.begin(), s.freqs_hz.end());
  std::sort(f.begin(), f.end());
  f.erase(std::unique(f.begin(), f.end()), f.end());
  return f;
}

std::vector<std::string> scenario_names() {
  return {"double-circle", "double-circle-rough", "layered-1d-start", "homogeneous"};
}

Scenario generate_scenario(const std::string& name, const ScenarioOptions& options) {
  if (name == "double-circle") return double_circle(options);
  if (name == "double-circle-rough") return double_circle_rough(options);
  if (name == "layered-1d-start") return layered(options);
  if (name == "homogeneous") return homogeneous(options);
  throw Error("unknown scenario '" + name +
              "' (double-circle, double-circle-rough, layered-1d-start, homogeneous)");
}

RunSetup load_manifest(const fs::path& path, const ManifestOverrides& ov) {
  std::ifstream is = open_in(path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  for (const auto& [key, value] : j.items()) {
    if (!known_keys().count(key)) throw Error(path.string() + ": unknown key '" + key + "'");
  }
  const fs::path base = path.parent_path();
  auto make_scenario = [&] {
    ScenarioOptions so;
    if (j.contains("scenario_options")) {
      const auto& o = j.at("scenario_options");
      so.nz = o.value("nz", 0);
      so.nx = o.value("nx", 0);
      so.spacing = o.value("spacing", 0.0);
      so.sources = o.value("sources", 0);
      so.receivers = o.value("receivers", 0);
    }
    return generate_scenario(j.value("scenario", std::string("homogeneous")), so);
  };
  std::optional<RunSetup> holder;
  try {
    holder.emplace(RunSetup{path, make_scenario(), {}, {}, {}, {}});
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }
  RunSetup& setup = *holder;

  try {
    Scenario& sc = setup.scenario;

    if (j.contains("model")) {
      const auto& m = j.at("model");
      auto load = [&](const char* key) {
        GridFile g = read_grid(resolve(base, m.at(key).get<std::string>()));
        return g;
      };
      const GridFile tvp = load("true_vp"), tvs = load("true_vs"), rho = load("density");
      const GridFile ivp = load("initial_vp"), ivs = load("initial_vs");
      for (const GridFile* g : {&tvs, &rho, &ivp, &ivs}) {
        if (!(g->grid == tvp.grid)) throw Error("model grids differ");
      }
      sc.truth = ElasticModel::from_velocities(tvp.grid, tvp.field.values, tvs.field.values,
                                               rho.field.values);
      sc.initial = ElasticModel::from_velocities(tvp.grid, ivp.field.values,
                                                 ivs.field.values, rho.field.values);
    }
    const GridGeometry grid = sc.truth.grid();

    BoundarySpec bc = sc.acquisition.bc;
    if (j.contains("boundary")) {
      const auto& b = j.at("boundary");
      bc.top = parse_edge(b.value("top", std::string("absorbing")));
      bc.bottom = parse_edge(b.value("bottom", std::string("absorbing")));
      bc.left = parse_edge(b.value("left", std::string("absorbing")));
      bc.right = parse_edge(b.value("right", std::string("absorbing")));
      bc.pml_width = b.value("pml_width", bc.pml_width);
      if (b.contains("pml_damping")) {
        const auto& d = b.at("pml_damping");
        if (d.is_string()) {
          if (d.get<std::string>() != "auto") throw Error("pml_damping must be a number or \"auto\"");
          const double vmax = sc.initial.velocities().vp.values.maxCoeff();
          bc.pml_max_damping = suggested_pml_damping(vmax, bc.pml_width * grid.dx());
        } else {
          bc.pml_max_damping = d.get<double>();
        }
      }
    }
    std::vector<Point> src = sc.acquisition.sources.positions;
    std::vector<Point> rec;
    for (Index node : sc.acquisition.receivers.nodes) {
      rec.push_back({grid.x(grid.ix_of(node)), grid.z(grid.iz_of(node))});
    }
    double f0 = sc.acquisition.ricker_f0;
    Complex fx = sc.acquisition.sources.force_x, fz = sc.acquisition.sources.force_z;
    if (j.contains("acquisition")) {
      const auto& a = j.at("acquisition");
      if (a.contains("sources")) src = parse_points(a.at("sources"));
      if (a.contains("receivers")) rec = parse_points(a.at("receivers"));
      f0 = a.value("ricker_f0", f0);
      if (a.contains("force")) {
        fx = a.at("force").at(0).get<double>();
        fz = a.at("force").at(1).get<double>();
      }
    }
    sc.acquisition = make_acquisition(grid, bc, src, rec, f0, fx, fz);
    if (j.contains("schedule")) sc.schedule = parse_schedule(j.at("schedule"));

    InversionConfig& c = setup.config;
    c.schedule = sc.schedule;
    c.beta = j.value("beta", c.beta);
    c.xi = j.value("xi", c.xi);
    c.parameterization =
        parse_parameterization(j.value("parameterization", std::string("squared-velocity")));
    c.mode = parse_mode(j.value("mode", std::string("admm")));
    c.seed = j.value("seed", std::uint64_t{0});
    c.record_wall_time = j.value("record_wall_time", false);
    c.normalize_beta = j.value("normalize_beta", true);
    if (j.contains("sketch")) {
      const auto& s = j.at("sketch");
      c.sketch.q = s.value("q", 0);
      c.sketch.warmup_iterations = s.value("warmup_iterations", 0);
      c.sketch.warmup_q = s.value("warmup_q", 0);
    }
    if (j.contains("constraints")) {
      const auto& k = j.at("constraints");
      const auto& b = k.at("box");
      BoxSet box{b.at("p_min").get<double>(), b.at("s_min").get<double>(),
                 b.at("p_max").get<double>(), b.at("s_max").get<double>()};
      BandSet band = BandSet::whole_plane();
      if (k.contains("band")) {
        band = {parse_halfplane(k.at("band").at("lower"), Sense::AtLeast),
                parse_halfplane(k.at("band").at("upper"), Sense::AtMost)};
      }
      const std::string plane = k.value("plane", std::string("velocity"));
      if (plane != "velocity" && plane != "active") {
        throw Error("constraints.plane must be 'velocity' or 'active'");
      }
      c.constraints.emplace(box, band,
                            plane == "velocity" ? ConstraintPlane::Velocity
                                                : ConstraintPlane::Active,
                            k.value("tol", 1e-6), k.value("max_iter", 200));
      c.admm_step.tol = k.value("tol", 1e-6);
      c.admm_step.max_iter = k.value("max_iter", 200);
    }
    setup.crosstalk_iterations = j.value("crosstalk_iterations", std::vector<int>{});
    if (j.contains("noise_snr_db")) setup.noise_snr_db = j.at("noise_snr_db").get<double>();
    if (j.contains("observed")) {
      setup.observed_path = resolve(base, j.at("observed").get<std::string>());
      if (!fs::exists(*setup.observed_path)) {
        throw Error("observed data file '" + setup.observed_path->string() + "' does not exist");
      }
    }
    setup.output_dir = resolve(base, j.value("output_dir", std::string("out/") +
                                                           j.value("name", path.stem().string())));
  } catch (const json::exception& e) {
    throw Error(path.string() + ": " + e.what());
  }

  if (ov.seed) setup.config.seed = *ov.seed;
  if (ov.mode) setup.config.mode = *ov.mode;
  if (ov.beta) setup.config.beta = *ov.beta;
  if (ov.xi) setup.config.xi = *ov.xi;
  if (ov.sketch_q) setup.config.sketch.q = *ov.sketch_q;
  if (ov.output_dir) setup.output_dir = *ov.output_dir;
  setup.config.validate();
  return std::move(setup);
}

ObservedData observed_data(const RunSetup& setup) {
  ObservedData d = setup.observed_path
                       ? read_data(*setup.observed_path)
                       : model_data(setup.scenario.truth, setup.scenario.acquisition,
                                    setup.scenario.frequencies());
  if (setup.noise_snr_db) d = add_noise(d, *setup.noise_snr_db, setup.config.seed);
  return d;
}

void write_model(const ElasticModel& model, const fs::path& dir, const std::string& prefix) {
  const VelocityFields v = model.velocities();
  write_grid(dir / (prefix + "_vp.grid"), model.grid(), v.vp, "vp");
  write_grid(dir / (prefix + "_vs.grid"), model.grid(), v.vs, "vs");
}

RunOutputs run_manifest(const RunSetup& setup) {
  const ObservedData observed = observed_data(setup);
  fs::create_directories(setup.output_dir);
  const auto& wanted = setup.crosstalk_iterations;
  IterationObserver observer;
  if (!wanted.empty()) {
    observer = [&](const IterationReport& r) {
      if (!r.system || std::find(wanted.begin(), wanted.end(), r.iteration) == wanted.end()) return;
      const CrossTalkReport c = hessian_cross_talk_report(*r.system, r.prior->first().values,
                                                          r.prior->second().values);
      const GridGeometry& g = r.prior->grid();
      const std::string tag = "crosstalk_it" + std::to_string(r.iteration) + "_";
      const std::pair<const char*, const RealVector*> fields[] = {
          {"p_total", &c.total_p},    {"p_diag", &c.diagonal_p}, {"p_off", &c.off_diagonal_p},
          {"s_total", &c.total_s},    {"s_diag", &c.diagonal_s}, {"s_off", &c.off_diagonal_s}};
      for (const auto& [name, v] : fields) {
        write_grid(setup.output_dir / (tag + name + ".grid"), g,
                   {*v, r.prior->first().unit}, name);
      }
    };
  }
  RunOutputs out{run_inversion(setup.config, setup.scenario.acquisition, observed,
                               setup.scenario.initial, setup.scenario.truth, observer),
                 {}, {}};
  out.log_path = setup.output_dir / "log.csv";
  std::ofstream os = open_out(out.log_path);
  out.result.log.write_csv(os);
  write_model(out.result.model, setup.output_dir, "final");
  out.model_paths = {setup.output_dir / "final_vp.grid", setup.output_dir / "final_vs.grid"};
  return out;
}

fs::path write_scenario(const Scenario& scenario, const fs::path& dir) {
  fs::create_directories(dir);
  write_model(scenario.truth, dir, "true");
  write_model(scenario.initial, dir, "initial");
  write_grid(dir / "density.grid", scenario.truth.grid(), scenario.truth.density(), "rho");
  json stages = json::array();
  for (const auto& s : scenario.schedule.stages) {
    stages.push_back({{"freqs", s.freqs_hz}, {"iterations", s.iterations}});
  }
  json src = json::array(), rec = json::array();
  const GridGeometry& g = scenario.truth.grid();
  for (const auto& p : scenario.acquisition.sources.positions) src.push_back({p.x, p.z});
  for (Index node : scenario.acquisition.receivers.nodes) {
    rec.push_back({g.x(g.ix_of(node)), g.z(g.iz_of(node))});
  }
  const BoundarySpec& bc = scenario.acquisition.bc;
  json j = {
      {"name", scenario.name},
      {"scenario", scenario.name},
      {"model",
       {{"true_vp", "true_vp.grid"}, {"true_vs", "true_vs.grid"}, {"density", "density.grid"},
        {"initial_vp", "initial_vp.grid"}, {"initial_vs", "initial_vs.grid"}}},
      {"acquisition",
       {{"sources", src}, {"receivers", rec}, {"ricker_f0", scenario.acquisition.ricker_f0}}},
      {"boundary",
       {{"top", bc.free_surface() ? "free-surface" : "absorbing"},
        {"pml_width", bc.pml_width},
        {"pml_damping", bc.pml_max_damping}}},
      {"schedule", {{"stages", stages}}},
      {"beta", 1e6},
      {"xi", 0.0},
      {"parameterization", "squared-velocity"},
      {"mode", "admm"},
      {"seed", 1},
      {"output_dir", "out"}};
  const fs::path path = dir / "manifest.json";
  std::ofstream os = open_out(path);
  os << j.dump(2) << '\n';
  return path;
}

}  // namespace efwi
