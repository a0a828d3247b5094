// rupture-lab: command-line front end.

#include "verify_suite.hpp"

#include <rupture/density.hpp>
#include <rupture/exact.hpp>
#include <rupture/field_io.hpp>
#include <rupture/gmt.hpp>
#include <rupture/parallel.hpp>
#include <rupture/solver.hpp>
#include <rupture/symmetry.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace rupture;

namespace {

constexpr const char* kSchema = "rupture-lab/1";

enum Exit { kOk = 0, kVerifyFailed = 1, kConfigError = 2, kNumericFailure = 3 };

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int exit_code_for(ErrorCode c) {
  switch (c) {
    case ErrorCode::EmptyIntersection:
    case ErrorCode::EmptyMask:
    case ErrorCode::QuadratureFailure:
    case ErrorCode::NoCandidates:
    case ErrorCode::ZeroMass:
    case ErrorCode::EmptySample:
      return kNumericFailure;
    default:
      return kConfigError;
  }
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json point_json(const Point& x) {
  json a = json::array();
  for (int i = 0; i < x.dim(); ++i) a.push_back(x[i]);
  return a;
}

Point parse_point(const std::string& s) {
  std::vector<double> xs;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      xs.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("bad coordinate '" + tok + "' in point '" + s + "'");
    }
  }
  if (xs.empty() || xs.size() > static_cast<std::size_t>(kMaxDim)) throw ConfigError("bad point '" + s + "'");
  return Point::from(xs);
}

// min:max:count, geometric
std::vector<double> parse_ladder(const std::string& s) {
  double lo = 0, hi = 0;
  int count = 0;
  char c1 = 0, c2 = 0;
  std::stringstream ss(s);
  if (!(ss >> lo >> c1 >> hi >> c2 >> count) || c1 != ':' || c2 != ':' || !ss.eof())
    throw ConfigError("radii must look like min:max:count, got '" + s + "'");
  if (!(lo > 0 && hi >= lo && count >= 1)) throw ConfigError("radii need 0 < min <= max and count >= 1");
  return count == 1 ? std::vector<double>{lo} : geometric_ladder(lo, hi, count);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path() && !fs::exists(path.parent_path()))
    throw Error(ErrorCode::IoFailure, "output directory does not exist: " + path.parent_path().string());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot write " + path.string());
  return f;
}

void write_json(const fs::path& path, const json& j) {
  auto f = open_out(path);
  f << j.dump(2) << "\n";
}

class Csv {
 public:
  Csv(const fs::path& path, const std::vector<std::string>& header) : f_(open_out(path)) { row_strings(header); }
  void row(const std::vector<double>& v) {
    std::vector<std::string> s;
    for (double x : v) s.push_back(fmt(x));
    row_strings(s);
  }

 private:
  void row_strings(const std::vector<std::string>& v) {
    for (std::size_t i = 0; i < v.size(); ++i) f_ << (i ? "," : "") << v[i];
    f_ << "\n";
  }
  std::ofstream f_;
};

fs::path sibling(const fs::path& out, const std::string& suffix) {
  fs::path p = out;
  p.replace_extension();
  return fs::path(p.string() + suffix);
}

// Point cloud CSV: n coordinate columns followed by a weight column; an optional header row.
AtomicMeasure read_cloud(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw Error(ErrorCode::IoFailure, "cannot read " + path.string());
  std::vector<Point> pts;
  std::vector<double> w;
  std::string line;
  int cols = -1;
  std::size_t lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> v;
    std::stringstream ss(line);
    std::string tok;
    bool numeric = true;
    while (std::getline(ss, tok, ',')) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        while (used < tok.size() && std::isspace(static_cast<unsigned char>(tok[used]))) ++used;
        if (used != tok.size()) numeric = false;
      } catch (const std::exception&) {
        numeric = false;
      }
    }
    if (!numeric) {
      if (lineno == 1) continue;
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": non-numeric row");
    }
    if (cols < 0) cols = static_cast<int>(v.size());
    if (static_cast<int>(v.size()) != cols || cols < 2 || cols > kMaxDim + 1)
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected n coordinates plus a weight");
    pts.push_back(Point::from(std::span<const double>(v.data(), v.size() - 1)));
    w.push_back(v.back());
  }
  if (pts.empty()) throw ConfigError(path.string() + ": no points");
  return AtomicMeasure(pts, w);
}

// --config JSON: keys name the subcommand's own options (underscores for dashes); explicit flags win.
void apply_config(CLI::App* sub, const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config " + path);
  json j;
  try {
    j = json::parse(f);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  for (const auto& [key, value] : j.items()) {
    std::string name = "--" + key;
    std::replace(name.begin(), name.end(), '_', '-');
    CLI::Option* opt = key == "config" ? nullptr : sub->get_option_no_throw(name);
    if (!opt) throw ConfigError("unknown config key '" + key + "'");
    if (opt->count() > 0) continue;
    auto as_string = [&](const json& v) -> std::string {
      if (v.is_string()) return v.get<std::string>();
      if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
      if (v.is_number()) return v.dump();
      throw ConfigError("config key '" + key + "' has an unsupported value");
    };
    if (value.is_array()) {
      for (const auto& e : value) opt->add_result(as_string(e));
    } else {
      opt->add_result(as_string(value));
    }
    opt->run_callback();
  }
}

json envelope(const std::string& command, std::uint64_t seed) {
  json j;
  j["schema"] = kSchema;
  j["command"] = command;
  j["seed"] = seed;
  return j;
}

// ---------------------------------------------------------------------------------------------

struct Common {
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

struct MakeExactArgs {
  int n = 2;
  double p = 3.0;
  double eps = 0.1;
  std::string kind = "radial";
  std::size_t shape = 257;
  double extent = 3.2;
  std::string out;
};

int cmd_make_exact(const MakeExactArgs& a, const Common& c) {
  if (a.n < 1 || a.n > kMaxDim) throw ConfigError("--n must lie in [1,4]");
  if (!(a.p > 1.0)) throw ConfigError("--p must exceed 1");
  if (a.shape < 3) throw ConfigError("--shape must be at least 3");
  if (!(a.extent > 0.0)) throw ConfigError("--extent must be positive");
  const Grid g = Grid::box(a.n, a.shape, a.extent);
  ScalarField u;
  if (a.kind == "radial") {
    u = homogeneous_field(HomogeneousSolution(a.n, a.p), g);
  } else if (a.kind == "cylinder") {
    if (a.n < 3) throw ConfigError("cylinder needs n >= 3");
    Point axis(a.n);
    axis[a.n - 1] = 1.0;
    u = homogeneous_field(HomogeneousSolution(a.n, a.p, {axis}), g);
  } else if (a.kind == "ode") {
    if (!(a.eps > 0.0)) throw ConfigError("--eps must be positive");
    const double reach = a.extent * std::sqrt(static_cast<double>(a.n));
    // v(s) grows at least like s - eps, so s_max = eps + 2 reach^2 + 4 covers |r| <= reach
    const auto sol = ode_profile(a.p, a.eps, a.eps + 2.0 * reach * reach + 4.0);
    if (sol.r_max() < a.extent) throw NumericFailure("ODE profile does not reach the box edge");
    u = ode_field(sol, g, 0);
  } else {
    throw ConfigError("--kind must be radial, cylinder or ode");
  }
  save_field(u, a.out);
  json j = envelope("make-exact", c.seed);
  j["kind"] = a.kind;
  j["n"] = a.n;
  j["p"] = a.p;
  if (a.kind == "ode") j["eps"] = a.eps;
  j["shape"] = a.shape;
  j["extent"] = a.extent;
  j["spacing"] = g.spacing();
  j["out"] = a.out;
  std::cout << j.dump(2) << "\n";
  return kOk;
}

struct SolveArgs {
  std::string init, forcing, out, history;
  std::string method = "flow";
  double p = 3.0;
  std::vector<double> delta_schedule = SolverConfig{}.delta_schedule;
  double dt_safety = 0.9;
  std::size_t max_steps = 200000;
  double tol_residual = 1e-6;
  std::string boundary = "dirichlet";
  std::size_t check_interval = 50;
};

SolverConfig solver_config(const SolveArgs& a) {
  SolverConfig cfg;
  cfg.p = a.p;
  cfg.delta_schedule = a.delta_schedule;
  cfg.dt_safety = a.dt_safety;
  cfg.max_steps = a.max_steps;
  cfg.tol_residual = a.tol_residual;
  cfg.check_interval = a.check_interval;
  if (a.boundary == "dirichlet") {
    cfg.boundary = BoundaryKind::Dirichlet;
  } else if (a.boundary == "neumann") {
    cfg.boundary = BoundaryKind::Neumann;
  } else {
    throw ConfigError("boundary must be dirichlet or neumann");
  }
  cfg.validate();
  return cfg;
}

std::optional<ScalarField> maybe_forcing(const std::string& path, const Grid& g) {
  if (path.empty()) return std::nullopt;
  auto f = load_field(path);
  if (!(f.grid() == g)) throw ConfigError("forcing grid does not match the field grid");
  return f;
}

int cmd_solve(const SolveArgs& a, const Common& c) {
  const auto init = load_field(a.init);
  const auto cfg = solver_config(a);
  const auto f = maybe_forcing(a.forcing, init.grid());
  SolveResult res;
  if (a.method == "flow") {
    res = solve_elliptic(f ? &*f : nullptr, cfg, init);
  } else if (a.method == "newton") {
    NewtonConfig nc;
    nc.p = cfg.p;
    nc.tol_residual = cfg.tol_residual;
    res = solve_pinned(f ? &*f : nullptr, nc, init);
  } else {
    throw ConfigError("method must be flow or newton");
  }
  save_field(res.u, a.out);
  const fs::path hist = a.history.empty() ? sibling(a.out, ".history.csv") : fs::path(a.history);
  {
    Csv csv(hist, {"check", "stage", "residual", "energy"});
    std::size_t stage = 0;
    for (std::size_t i = 0; i < res.residual_history.size(); ++i) {
      while (stage < res.stage_ends.size() && i >= res.stage_ends[stage]) ++stage;
      const double e = i < res.energy_history.size() ? res.energy_history[i] : kNaN;
      csv.row({static_cast<double>(i), static_cast<double>(stage), res.residual_history[i], e});
    }
  }
  json j = envelope("solve", c.seed);
  j["method"] = a.method;
  j["converged"] = res.converged;
  j["steps"] = res.steps;
  j["rejected_steps"] = res.rejected_steps;
  j["final_residual"] = num(res.final_residual);
  j["active_rupture_cells"] = res.active_rupture_cells;
  j["out"] = a.out;
  j["history"] = hist.string();
  write_json(sibling(a.out, ".json"), j);
  std::cout << j.dump(2) << "\n";
  if (!res.converged) throw NumericFailure("solver did not reach tol_residual");
  return kOk;
}

struct EvolveArgs : SolveArgs {
  double T = 0.1;
  std::vector<double> snapshots;
};

int cmd_evolve(const EvolveArgs& a, const Common& c) {
  const auto u0 = load_field(a.init);
  const auto cfg = solver_config(a);
  const auto f = maybe_forcing(a.forcing, u0.grid());
  const auto snaps = evolve_parabolic(u0, a.T, cfg, a.snapshots, f ? &*f : nullptr);
  save_field(snaps.back().u, a.out);
  const fs::path hist = a.history.empty() ? sibling(a.out, ".history.csv") : fs::path(a.history);
  {
    Csv csv(hist, {"t", "energy", "min_u", "rupture_cells"});
    for (const auto& s : snaps) {
      const auto& v = s.u.values();
      const double lo = *std::min_element(v.begin(), v.end());
      const auto cells = std::count_if(v.begin(), v.end(), [&](double x) { return x <= cfg.delta_min(); });
      csv.row({s.t, energy(s.u, f ? &*f : nullptr, cfg.p, cfg.delta_min()), lo, static_cast<double>(cells)});
    }
  }
  json j = envelope("evolve", c.seed);
  j["T"] = a.T;
  j["snapshots"] = snaps.size();
  j["out"] = a.out;
  j["history"] = hist.string();
  write_json(sibling(a.out, ".json"), j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

struct DensityArgs {
  std::string field, forcing, point = "0,0", radii = "0.05:0.3:16", out;
  double p = 3.0;
  double floor = 0.0;
};

int cmd_density(const DensityArgs& a, const Common& c) {
  const auto u = load_field(a.field);
  const auto f = maybe_forcing(a.forcing, u.grid());
  const Point x = parse_point(a.point);
  if (x.dim() != u.grid().dim()) throw ConfigError("--point dimension does not match the field");
  const auto radii = parse_ladder(a.radii);
  std::optional<double> floor;
  if (a.floor > 0.0) floor = a.floor;
  const DensityEvaluator ev(u, f ? &*f : nullptr, a.p, floor);
  const auto prof = density_profile(ev, x, radii);
  const double reach = u.grid().distance_to_boundary(x);
  {
    Csv csv(a.out, {"r", "D", "D_f", "F", "H", "I_f", "theta", "theta_f", "W_f"});
    for (const auto& v : prof.values) {
      const double w = 2.0 * v.r * std::sqrt(Cutoff::kSupport) <= reach ? pinch_W(ev, x, v.r) : kNaN;
      csv.row({v.r, v.D, v.D_f, v.F, v.H, v.I_f, v.theta, v.theta_f, w});
    }
  }
  json j = envelope("density", c.seed);
  j["field"] = a.field;
  j["point"] = point_json(x);
  j["p"] = a.p;
  j["rows"] = prof.values.size();
  j["truncated"] = prof.truncated;
  j["monotone_defect"] = num(prof.monotone_defect);
  // dθ/dr by finite differences against its closed form (f ≡ 0 only); absolute, since the closed
  // form vanishes for homogeneous solutions
  double fd_gap = kNaN, rhs_scale = kNaN;
  for (std::size_t i = 0; i < prof.dtheta_fd.size(); ++i) {
    fd_gap = std::max(std::isnan(fd_gap) ? 0.0 : fd_gap, std::abs(prof.dtheta_fd[i] - prof.dtheta_rhs[i]));
    rhs_scale = std::max(std::isnan(rhs_scale) ? 0.0 : rhs_scale, std::abs(prof.dtheta_rhs[i]));
  }
  j["dtheta_max_abs_gap"] = num(fd_gap);
  j["dtheta_max_abs_rhs"] = num(rhs_scale);
  double clipped = 0.0;
  for (const auto& v : prof.values) clipped = std::max(clipped, v.clipped_fraction);
  j["max_clipped_fraction"] = clipped;
  j["csv"] = a.out;
  write_json(sibling(a.out, ".json"), j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

struct StratifyArgs {
  std::string field, samples = "33", out;
  double p = 3.0, epsilon = 0.1, rmin = 0.0, rmax = 0.0;
  int k = 0;
  std::size_t random_frames = 32;
};

int cmd_stratify(const StratifyArgs& a, const Common& c) {
  const auto u = load_field(a.field);
  const Grid& g = u.grid();
  const int n = g.dim();
  if (!(a.rmin > 0.0)) throw ConfigError("--rmin must be positive");
  const double rmax = a.rmax > 0.0 ? a.rmax : 8.0 * a.rmin;
  std::vector<Point> pts;
  const bool lattice = !a.samples.empty() && std::all_of(a.samples.begin(), a.samples.end(), ::isdigit);
  if (lattice) {
    const std::size_t m = std::stoul(a.samples);
    if (m < 1) throw ConfigError("--samples lattice needs at least one point per axis");
    if (std::pow(static_cast<double>(m), n) > 1e7) throw ConfigError("--samples lattice too large");
    std::vector<double> lo(n), step(n);
    for (int i = 0; i < n; ++i) {
      lo[i] = g.box_lo(i) + rmax;
      const double span = g.box_hi(i) - rmax - lo[i];
      if (span < 0) throw ConfigError("box is narrower than 2 rmax");
      step[i] = m > 1 ? span / static_cast<double>(m - 1) : 0.0;
      if (m == 1) lo[i] += 0.5 * span;
    }
    std::size_t total = 1;
    for (int i = 0; i < n; ++i) total *= m;
    for (std::size_t l = 0; l < total; ++l) {
      Point x(n);
      std::size_t r = l;
      for (int i = n - 1; i >= 0; --i) {
        x[i] = lo[i] + static_cast<double>(r % m) * step[i];
        r /= m;
      }
      pts.push_back(x);
    }
  } else {
    const auto cloud = read_cloud(a.samples);
    if (cloud.dim() != n) throw ConfigError("sample dimension does not match the field");
    pts = cloud.points();
  }
  SymmetryOptions so;
  so.seed = c.seed;
  so.random_frames = a.random_frames;
  const auto rep = quantitative_stratum(u, a.p, a.k, a.epsilon, a.rmin, rmax, pts, so);
  const fs::path flagged_csv = sibling(a.out, ".flagged.csv");
  {
    std::vector<std::string> header;
    for (int i = 0; i < n; ++i) header.push_back("x" + std::to_string(i));
    header.push_back("best_defect");
    header.push_back("best_scale");
    Csv csv(flagged_csv, header);
    for (const auto& sp : rep.points) {
      if (!sp.flagged) continue;
      std::vector<double> row(sp.x.begin(), sp.x.end());
      row.push_back(sp.best_defect);
      row.push_back(sp.best_scale);
      csv.row(row);
    }
  }
  json j = envelope("stratify", c.seed);
  j["field"] = a.field;
  j["p"] = a.p;
  j["k"] = a.k;
  j["epsilon"] = a.epsilon;
  j["r_min"] = a.rmin;
  j["r_max"] = rmax;
  j["scales"] = rep.scales;
  j["samples"] = rep.points.size();
  j["flagged"] = rep.flagged_count();
  json pts_json = json::array();
  for (const auto& sp : rep.points) {
    json e;
    e["x"] = point_json(sp.x);
    e["flagged"] = sp.flagged;
    e["best_defect"] = num(sp.best_defect);
    e["best_scale"] = num(sp.best_scale);
    pts_json.push_back(e);
  }
  j["points"] = pts_json;
  j["flagged_csv"] = flagged_csv.string();
  write_json(a.out, j);
  json brief = j;
  brief.erase("points");
  std::cout << brief.dump(2) << "\n";
  return kOk;
}

struct MinkowskiArgs {
  std::string field, center, radii = "0.01:0.1:8", out;
  double p = 3.0, epsilon = 0.0, threshold = kNaN, radius = 0.0;
  int k = 0;
};

int cmd_minkowski(const MinkowskiArgs& a, const Common& c) {
  const auto u = load_field(a.field);
  const Grid& g = u.grid();
  const int n = g.dim();
  const auto radii = parse_ladder(a.radii);
  if (a.k < 0 || a.k > n) throw ConfigError("--k must lie in [0, n]");
  const bool by_eps = a.epsilon > 0.0;
  if (by_eps == !std::isnan(a.threshold)) throw ConfigError("give exactly one of --epsilon and --threshold");
  Point ctr = a.center.empty() ? Point::zero(n) : parse_point(a.center);
  if (ctr.dim() != n) throw ConfigError("--center dimension does not match the field");
  double rad = a.radius;
  if (!(rad > 0.0)) {
    rad = 0.0;
    for (int i = 0; i < n; ++i) rad += std::pow(g.box_hi(i) - g.box_lo(i), 2);
    rad = std::sqrt(rad) + g.spacing();
  }
  const BallRegion within(ctr, rad);
  MinkowskiContent mc;
  if (by_eps) {
    mc = sublevel_content(u, a.epsilon, a.p, within, radii, a.k);
  } else {
    Mask m(g);
    visit_ball(g, ctr, rad, [&](std::size_t l, double) { m.set(l, u[l] < a.threshold); });
    mc = minkowski_content(m, a.k, radii);
  }
  const fs::path csv_path = sibling(a.out, ".csv");
  {
    Csv csv(csv_path, {"r", "volume", "content"});
    for (std::size_t i = 0; i < mc.radii.size(); ++i) csv.row({mc.radii[i], mc.volumes[i], mc.contents[i]});
  }
  json j = envelope("minkowski", c.seed);
  j["field"] = a.field;
  if (by_eps) {
    j["epsilon"] = a.epsilon;
    j["p"] = a.p;
  } else {
    j["threshold"] = a.threshold;
  }
  j["k"] = a.k;
  j["within"] = {{"center", point_json(ctr)}, {"radius", rad}};
  j["radii"] = mc.radii;
  j["contents"] = mc.contents;
  j["slope"] = num(mc.slope);
  j["dimension"] = num(mc.dimension);
  j["csv"] = csv_path.string();
  write_json(a.out, j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

struct DisplacementArgs {
  std::string points, point, radii = "0.01:1:9", out;
  int k = 1;
};

int cmd_displacement(const DisplacementArgs& a, const Common& c) {
  const auto mu = read_cloud(a.points);
  const int n = mu.dim();
  const Point x = a.point.empty() ? Point::zero(n) : parse_point(a.point);
  if (x.dim() != n) throw ConfigError("--point dimension does not match the cloud");
  if (a.k < 0 || a.k > n) throw ConfigError("--k must lie in [0, n]");
  const auto radii = parse_ladder(a.radii);
  const AtomIndex index(mu, radii.front());
  const fs::path csv_path = sibling(a.out, ".csv");
  json spectra = json::array();
  {
    Csv csv(csv_path, {"r", "D", "mass"});
    for (double r : radii) {
      const BallRegion ball(x, r);
      const double mass = mu.mass_in(ball);
      csv.row({r, displacement(mu, index, x, r, a.k), mass});
      json e;
      e["r"] = r;
      if (mass > 0.0) {
        const auto s = moment_spectrum(mu, ball);
        e["eigenvalues"] = s.eigenvalues;
        e["moment_identity_residual"] = moment_identity_residual(mu, ball, s);
      } else {
        e["eigenvalues"] = json::array();
      }
      spectra.push_back(e);
    }
  }
  json j = envelope("displacement", c.seed);
  j["points"] = a.points;
  j["atoms"] = mu.size();
  j["x"] = point_json(x);
  j["k"] = a.k;
  j["spectra"] = spectra;
  if (radii.size() >= 2) j["rectifiability_integral"] = num(rectifiability_integral(mu, x, radii, a.k).integral);
  j["csv"] = csv_path.string();
  write_json(a.out, j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

struct CoverArgs {
  std::string points, out;
  double radius = 0.0, span = 0.0;
};

int cmd_cover(const CoverArgs& a, const Common& c) {
  const auto mu = read_cloud(a.points);
  if (!(a.radius > 0.0)) throw ConfigError("--radius must be positive");
  const auto pts = mu.points();
  const auto vc = vitali_cover(pts, a.radius);
  const fs::path csv_path = sibling(a.out, ".csv");
  {
    std::vector<std::string> header{"index"};
    for (int i = 0; i < mu.dim(); ++i) header.push_back("x" + std::to_string(i));
    Csv csv(csv_path, header);
    for (auto i : vc.kept) {
      std::vector<double> row{static_cast<double>(i)};
      for (int d = 0; d < mu.dim(); ++d) row.push_back(pts[i][d]);
      csv.row(row);
    }
  }
  json j = envelope("cover", c.seed);
  j["points"] = a.points;
  j["radius"] = a.radius;
  j["kept"] = vc.kept;
  j["count"] = vc.kept.size();
  j["disjoint"] = vc.disjoint;
  j["covers"] = vc.covers;
  if (a.span > 0.0) {
    const auto sp = effective_span(pts, a.span);
    j["effective_span"] = {{"s", a.span}, {"k_max", sp.k_max}, {"chosen", sp.chosen}};
  }
  j["csv"] = csv_path.string();
  write_json(a.out, j);
  std::cout << j.dump(2) << "\n";
  return kOk;
}

struct VerifyArgs {
  std::string suite = "quick", out;
};

int cmd_verify(const VerifyArgs& a, const Common& c) {
  if (a.suite != "quick" && a.suite != "full") throw ConfigError("--suite must be quick or full");
  verify::SuiteOptions opt;
  opt.full = a.suite == "full";
  opt.seed = c.seed;
  opt.on_result = [](const verify::CriterionResult& r) {
    std::printf("%-4s %2d %-28s %8.2fs  %s\n", r.pass ? "PASS" : "FAIL", r.id, r.name.c_str(), r.seconds,
                r.detail.c_str());
    std::fflush(stdout);
  };
  const auto results = verify::run_suite(opt);
  bool ok = true;
  json arr = json::array();
  for (const auto& r : results) {
    ok = ok && r.pass;
    arr.push_back({{"id", r.id}, {"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
  }
  if (!a.out.empty()) {
    json j = envelope("verify", c.seed);
    j["suite"] = a.suite;
    j["pass"] = ok;
    j["results"] = arr;
    write_json(a.out, j);
  }
  std::printf("%s\n", ok ? "all criteria passed" : "verification FAILED");
  return ok ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rupture-lab: rupture sets of Δu = u^{-p} + f"};
  app.require_subcommand(1);
  app.fallthrough();
  Common common;
  app.add_option("--seed", common.seed, "seed for randomized routines (RUPTURE_LAB_SEED overrides)");
  app.add_option("--threads", common.threads, "cap on internal parallelism")->check(CLI::PositiveNumber);
  std::string config;

  auto add_config = [&](CLI::App* s) { s->add_option("--config", config, "JSON file of option values"); };

  MakeExactArgs mk;
  auto* s_mk = app.add_subcommand("make-exact", "write an exact solution as RFLD");
  s_mk->add_option("--n", mk.n, "dimension");
  s_mk->add_option("--p", mk.p, "exponent p > 1");
  s_mk->add_option("--eps", mk.eps, "ODE minimum value (kind=ode)");
  s_mk->add_option("--kind", mk.kind, "radial | cylinder | ode");
  s_mk->add_option("--shape", mk.shape, "cells per axis");
  s_mk->add_option("--extent", mk.extent, "box half-width");
  s_mk->add_option("--out", mk.out, "output RFLD")->required();
  add_config(s_mk);

  SolveArgs sv;
  EvolveArgs ev;
  auto add_solver = [&](CLI::App* s, SolveArgs& a) {
    s->add_option("--init", a.init, "initial RFLD")->required();
    s->add_option("--forcing", a.forcing, "forcing RFLD on the same grid");
    s->add_option("--out", a.out, "output RFLD")->required();
    s->add_option("--history", a.history, "history CSV (default: <out>.history.csv)");
    s->add_option("--p", a.p, "exponent");
    s->add_option("--delta-schedule", a.delta_schedule, "decreasing regularization levels");
    s->add_option("--dt-safety", a.dt_safety, "fraction of the stable step");
    s->add_option("--max-steps", a.max_steps, "step cap");
    s->add_option("--tol-residual", a.tol_residual, "stopping residual");
    s->add_option("--boundary", a.boundary, "dirichlet | neumann");
    s->add_option("--check-interval", a.check_interval, "steps between residual checks");
    add_config(s);
  };
  auto* s_sv = app.add_subcommand("solve", "stationary solve");
  add_solver(s_sv, sv);
  s_sv->add_option("--method", sv.method, "flow (regularized gradient flow) | newton (zeros of init pinned)");
  auto* s_ev = app.add_subcommand("evolve", "parabolic evolution");
  add_solver(s_ev, ev);
  s_ev->add_option("--T", ev.T, "final time");
  s_ev->add_option("--snapshots", ev.snapshots, "extra history times");

  DensityArgs dn;
  auto* s_dn = app.add_subcommand("density", "monotone density profile at a point");
  s_dn->add_option("--field", dn.field, "RFLD")->required();
  s_dn->add_option("--forcing", dn.forcing, "forcing RFLD");
  s_dn->add_option("--point", dn.point, "comma-separated coordinates");
  s_dn->add_option("--radii", dn.radii, "min:max:count, geometric");
  s_dn->add_option("--p", dn.p, "exponent");
  s_dn->add_option("--floor", dn.floor, "u floor (default: grid-derived)");
  s_dn->add_option("--out", dn.out, "profile CSV; summary JSON alongside")->required();
  add_config(s_dn);

  StratifyArgs st;
  auto* s_st = app.add_subcommand("stratify", "quantitative stratum S^k_{ε,r}");
  s_st->add_option("--field", st.field, "RFLD")->required();
  s_st->add_option("--p", st.p, "exponent");
  s_st->add_option("--k", st.k, "stratum index");
  s_st->add_option("--epsilon", st.epsilon, "symmetry threshold");
  s_st->add_option("--rmin", st.rmin, "smallest scale")->required();
  s_st->add_option("--rmax", st.rmax, "largest scale (default 8 rmin)");
  s_st->add_option("--samples", st.samples, "points per axis of a lattice, or a point CSV");
  s_st->add_option("--random-frames", st.random_frames, "random candidate frames per fit");
  s_st->add_option("--out", st.out, "report JSON; flagged CSV alongside")->required();
  add_config(s_st);

  MinkowskiArgs mi;
  auto* s_mi = app.add_subcommand("minkowski", "Minkowski content of a sublevel set");
  s_mi->add_option("--field", mi.field, "RFLD")->required();
  s_mi->add_option("--p", mi.p, "exponent");
  s_mi->add_option("--epsilon", mi.epsilon, "set {u < ε r^α}");
  s_mi->add_option("--threshold", mi.threshold, "set {u < t}");
  s_mi->add_option("--k", mi.k, "content dimension");
  s_mi->add_option("--radii", mi.radii, "min:max:count");
  s_mi->add_option("--center", mi.center, "restricting ball center");
  s_mi->add_option("--radius", mi.radius, "restricting ball radius (default: whole box)");
  s_mi->add_option("--out", mi.out, "report JSON; CSV alongside")->required();
  add_config(s_mi);

  DisplacementArgs di;
  auto* s_di = app.add_subcommand("displacement", "Jones numbers and moment spectra of a weighted cloud");
  s_di->add_option("--points", di.points, "CSV: coordinates then weight")->required();
  s_di->add_option("--point", di.point, "center (default origin)");
  s_di->add_option("--radii", di.radii, "min:max:count");
  s_di->add_option("--k", di.k, "plane dimension");
  s_di->add_option("--out", di.out, "report JSON; CSV alongside")->required();
  add_config(s_di);

  CoverArgs co;
  auto* s_co = app.add_subcommand("cover", "Vitali cover of equal balls");
  s_co->add_option("--points", co.points, "CSV: coordinates then weight")->required();
  s_co->add_option("--radius", co.radius, "ball radius")->required();
  s_co->add_option("--span", co.span, "also report the s-effective span at this s");
  s_co->add_option("--out", co.out, "report JSON; CSV alongside")->required();
  add_config(s_co);

  VerifyArgs vf;
  auto* s_vf = app.add_subcommand("verify", "run the property suite");
  s_vf->add_option("--suite", vf.suite, "quick | full");
  s_vf->add_option("--out", vf.out, "report JSON");
  add_config(s_vf);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfigError;
  }

  try {
    CLI::App* sub = app.get_subcommands().front();
    if (!config.empty()) apply_config(sub, config);
    if (const char* env = std::getenv("RUPTURE_LAB_SEED")) {
      try {
        std::size_t used = 0;
        common.seed = std::stoull(env, &used);
        if (used != std::strlen(env)) throw std::invalid_argument(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("RUPTURE_LAB_SEED is not an unsigned integer: ") + env);
      }
    }
    set_thread_count(common.threads);
    if (sub == s_mk) return cmd_make_exact(mk, common);
    if (sub == s_sv) return cmd_solve(sv, common);
    if (sub == s_ev) return cmd_evolve(ev, common);
    if (sub == s_dn) return cmd_density(dn, common);
    if (sub == s_st) return cmd_stratify(st, common);
    if (sub == s_mi) return cmd_minkowski(mi, common);
    if (sub == s_di) return cmd_displacement(di, common);
    if (sub == s_co) return cmd_cover(co, common);
    if (sub == s_vf) return cmd_verify(vf, common);
    return kConfigError;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const CLI::ParseError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfigError;
  } catch (const NumericFailure& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  } catch (const Error& e) {
    std::cerr << (exit_code_for(e.code()) == kNumericFailure ? "numeric failure: " : "error: ") << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumericFailure;
  }
}
