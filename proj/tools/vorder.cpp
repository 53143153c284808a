// vorder: configuration-driven front end. See docs/config.md for the schema.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "vorder/io.hpp"
#include "vorder/oracle.hpp"
#include "vorder/pde.hpp"

using namespace vorder;

namespace {

enum Exit { kOk = 0, kUsage = 1, kValidation = 2, kNumerics = 3 };

int log_level() {
  static const int level = [] {
    const char* v = std::getenv("VORDER_LOG");
    if (!v) return 1;
    const std::string s(v);
    if (s == "quiet" || s == "0") return 0;
    if (s == "debug" || s == "2") return 2;
    return 1;
  }();
  return level;
}

void log(int level, const std::string& msg) {
  if (level <= log_level()) std::cerr << "[vorder] " << msg << "\n";
}

int exit_code(ErrorKind k) {
  switch (k) {
    case ErrorKind::Numerics:
    case ErrorKind::Precision:
    case ErrorKind::Genericity:
    case ErrorKind::Separation:
      return kNumerics;
    default:
      return kValidation;
  }
}

// Runs fn(i) for i < n on up to `threads` workers; results are stored by index by the
// caller, so ordering never depends on scheduling.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const auto workers = static_cast<std::size_t>(std::max(1, threads));
  if (workers == 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex m;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::min(workers, n); ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next++) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(m);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Configuration

const std::map<std::string, std::set<std::string>> kSections = {
    {"forward", {"p", "panel", "times", "contour_nodes", "round_trip"}},
    {"moment", {"directions", "offset", "probe"}},
    {"identity", {"directions", "h"}},
    {"recover", {"model", "count", "directions", "peel_directions", "probe", "floor", "max_balls", "retries",
                 "hull_directions", "offset", "resolution", "initial"}},
    {"check", {}},
    {"oracle", {"cases", "method", "dims", "max_norm", "shapes"}},
};

const std::set<std::string> kTopLevel = {"command", "seed", "threads", "out", "field", "reference",
                                         "excitation", "mesh", "forward", "moment", "identity",
                                         "recover", "check", "oracle"};

Error bad(const std::string& msg) { return Error(ErrorKind::Configuration, msg); }

void apply_override(Json& cfg, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0) throw bad("override '" + spec + "' is not key=value");
  const std::string key = spec.substr(0, eq), text = spec.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const Json::parse_error&) {
    value = text;
  }
  Json* node = &cfg;
  std::stringstream ss(key);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw bad("override path '" + key + "' crosses a non-object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = Json::object();
  }
  if (!node->is_object()) throw bad("override path '" + key + "' crosses a non-object");
  const Json& old = (*node)[parts.back()];
  if (old.is_object() || old.is_array()) throw bad("override '" + key + "' targets a structured value; only scalars");
  (*node)[parts.back()] = value;
}

template <typename T>
T get_or(const Json& j, const char* key, T fallback) {
  if (!j.is_object() || !j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const Json::exception&) {
    throw bad(std::string("field '") + key + "' has the wrong type");
  }
}

struct Run {
  std::string command;
  Json cfg;
  Json section;
  std::uint64_t seed = 1;
  int threads = 1;
  std::string out = "out";
  OrderField field;
  OrderField reference;
  ExcitationSpec exc;
  std::map<std::string, std::string> files;

  double h() const {
    const double v = get_or(cfg.value("mesh", Json::object()), "h", 0.05);
    if (!(v > 0.0)) throw bad("mesh.h must be positive");
    return v;
  }
};

Run load(const std::string& command, const std::string& path, const std::vector<std::string>& overrides) {
  Run run;
  run.command = command;
  std::ifstream is(path);
  if (!is) throw bad("cannot read config '" + path + "'");
  try {
    run.cfg = Json::parse(is);
  } catch (const Json::parse_error& e) {
    throw bad(std::string("config is not valid JSON: ") + e.what());
  }
  if (!run.cfg.is_object()) throw bad("config must be a JSON object");
  for (const auto& o : overrides) apply_override(run.cfg, o);
  for (auto it = run.cfg.begin(); it != run.cfg.end(); ++it)
    if (!kTopLevel.count(it.key())) throw bad("unknown top-level key '" + it.key() + "'");
  if (run.cfg.contains("command") && run.cfg["command"] != command)
    throw bad("config is for '" + run.cfg["command"].get<std::string>() + "', not '" + command + "'");
  run.section = run.cfg.value(command, Json::object());
  if (!run.section.is_object()) throw bad("section '" + command + "' must be an object");
  for (auto it = run.section.begin(); it != run.section.end(); ++it)
    if (!kSections.at(command).count(it.key())) throw bad("unknown key '" + command + "." + it.key() + "'");

  run.seed = get_or<std::uint64_t>(run.cfg, "seed", 1);
  run.threads = get_or(run.cfg, "threads", 1);
  if (run.threads < 1) throw bad("threads must be at least 1");
  run.out = get_or<std::string>(run.cfg, "out", "out");

  if (command != "oracle") {
    if (!run.cfg.contains("field")) throw bad("missing 'field'");
    run.field = order_field_from_json(run.cfg["field"]);
    if (run.cfg.contains("reference")) {
      run.reference = order_field_from_json(run.cfg["reference"]);
    } else {
      run.reference = run.field;
      run.reference.inclusions.clear();
    }
    if (run.reference.dim != run.field.dim) throw bad("field and reference differ in dimension");
  }
  const Json ex = run.cfg.value("excitation", Json::object());
  run.exc.k = get_or(ex, "k", 2);
  run.exc.allow_k0 = get_or(ex, "allow_k0", false);
  if (ex.contains("omega0")) {
    const auto w = ex["omega0"].get<std::vector<double>>();
    if (w.size() != 2) throw bad("excitation.omega0 must have two entries");
    run.exc.omega0 = Vec2(w[0], w[1]);
  }
  run.exc.validate();
  return run;
}

Vec omega0_of(const Run& run) {
  Vec w = Vec::Zero(run.field.dim);
  w[0] = run.exc.omega0.x();
  w[1] = run.exc.omega0.y();
  return w.normalized();
}

HalfLineProbe probe_of(const Run& run, const Json& j) {
  const Mat basis = orthonormal_basis_with_first(omega0_of(run));
  const auto R = get_or<std::vector<double>>(j, "R", {2.0, 4.0, 0.1});
  if (R.size() != 3) throw bad("probe.R must be [start, stop, step]");
  Vec phis = Vec::Zero(run.field.dim - 2);
  if (j.contains("phis")) {
    const auto p = j["phis"].get<std::vector<double>>();
    if (static_cast<int>(p.size()) != run.field.dim - 2) throw bad("probe.phis must have d - 2 entries");
    phis = Eigen::Map<const Vec>(p.data(), static_cast<Eigen::Index>(p.size()));
  }
  return make_probe(basis, get_or(j, "theta", 0.1), phis, range_grid(R[0], R[1], R[2]));
}

// Bound on |x| over the domain, and the largest radius a ball inside it can have.
std::pair<double, double> bounds(const Run& run) {
  const Domain& dom = run.field.domain;
  if (dom.is_disk()) return {dom.disk().center.norm() + dom.disk().radius, dom.disk().radius};
  double m = 0.0;
  for (const auto& v : dom.polygon().vertices) m = std::max(m, v.norm());
  return {m, m};
}

std::vector<double> real_values(const Vec& v) { return {v.data(), v.data() + v.size()}; }

std::vector<std::string> direction_header(int d, const char* first) {
  std::vector<std::string> h{first, "omega_x", "omega_y"};
  if (d == 3) h.push_back("omega_z");
  return h;
}

// ---------------------------------------------------------------------------
// Subcommands

Complex parse_p(const Json& j) {
  if (j.is_number()) return j.get<double>();
  if (j.is_array() && j.size() == 2) return {j[0].get<double>(), j[1].get<double>()};
  throw bad("forward.p entries must be numbers or [re, im]");
}

void cmd_forward(Run& run) {
  if (run.field.dim != 2) throw Error(ErrorKind::Unsupported, "the FEM solver is two-dimensional");
  const auto mesh = build_mesh(run.field.domain, run.h());
  log(1, "mesh: " + std::to_string(mesh->num_nodes()) + " nodes, " + std::to_string(mesh->num_triangles()) + " triangles");
  const LaplaceFamily family(mesh, run.field);
  const Json& s = run.section;
  const Json panel = s.value("panel", Json::object());
  const std::string kind = get_or<std::string>(panel, "kind", "exponential");
  const int count = get_or(panel, "count", 16);
  const double offset = get_or(panel, "offset", 0.0);
  TestPanel tests;
  std::vector<Vec2> where;
  if (kind == "exponential") {
    tests = exponential_panel(count, offset);
    for (int j = 0; j < count; ++j) {
      const double a = offset + 2.0 * kPi * j / count;
      where.emplace_back(std::cos(a), std::sin(a));
    }
  } else if (kind == "hat") {
    tests = hat_panel(*mesh, count);
    for (const auto& t : tests) where.push_back(mesh->nodes[static_cast<std::size_t>(t.node)]);
  } else {
    throw bad("forward.panel.kind must be 'exponential' or 'hat'");
  }

  std::vector<Complex> ps;
  for (const auto& p : s.value("p", Json::array({1.0}))) ps.push_back(parse_p(p));
  std::vector<FluxTrace> fluxes(ps.size());
  parallel_for(ps.size(), run.threads, [&](std::size_t i) { fluxes[i] = flux_panel(ps[i], family, run.exc, tests); });
  CsvTable lap({"p_re", "p_im", "direction_index", kind == "hat" ? "x" : "omega_x", kind == "hat" ? "y" : "omega_y",
                "value_re", "value_im"});
  for (std::size_t i = 0; i < ps.size(); ++i)
    for (std::size_t j = 0; j < tests.size(); ++j) {
      const Complex v = fluxes[i].values[static_cast<Eigen::Index>(j)];
      lap.row({ps[i].real(), ps[i].imag(), static_cast<double>(j), where[j].x(), where[j].y(), v.real(), v.imag()});
    }
  run.files["laplace_flux.csv"] = lap.text();

  Json summary;
  summary["nodes"] = mesh->num_nodes();
  summary["triangles"] = mesh->num_triangles();
  summary["h"] = run.h();
  ContourOptions copts;
  copts.nodes = get_or(s, "contour_nodes", 32);
  if (s.contains("times")) {
    const auto t = s["times"].get<std::vector<double>>();
    const Vec times = Eigen::Map<const Vec>(t.data(), static_cast<Eigen::Index>(t.size()));
    const auto td = time_domain_flux(family, run.exc, tests, times, copts);
    CsvTable tab({"t", "direction_index", "omega_x", "omega_y", "value", "imag"});
    for (Eigen::Index i = 0; i < td.values.rows(); ++i)
      for (Eigen::Index j = 0; j < td.values.cols(); ++j)
        tab.row({times[i], static_cast<double>(j), where[static_cast<std::size_t>(j)].x(),
                 where[static_cast<std::size_t>(j)].y(), td.values(i, j), td.imaginary(i, j)});
    run.files["time_flux.csv"] = tab.text();
    summary["max_imag_ratio"] = td.max_imag_ratio;
  }
  if (s.contains("round_trip")) {
    const Json& rt = s["round_trip"];
    const auto entry = static_cast<std::size_t>(get_or(rt, "entry", 0));
    if (entry >= tests.size()) throw bad("forward.round_trip.entry is out of range");
    const auto r = laplace_round_trip(family, run.exc, tests[entry], get_or(rt, "p", 2.0), get_or(rt, "T", 40.0), copts);
    summary["round_trip"] = {{"direct", Json::array({r.direct.real(), r.direct.imag()})},
                             {"transformed", Json::array({r.transformed.real(), r.transformed.imag()})},
                             {"discrepancy", r.discrepancy()},
                             {"budget", r.budget()},
                             {"tail", r.tail},
                             {"quadrature", r.quadrature},
                             {"inversion", r.inversion}};
  }
  run.files["forward.json"] = dump(summary);

  CsvTable nodes({"index", "x", "y", "boundary"});
  for (std::size_t i = 0; i < mesh->nodes.size(); ++i)
    nodes.row({static_cast<double>(i), mesh->nodes[i].x(), mesh->nodes[i].y(), mesh->on_boundary[i] ? 1.0 : 0.0});
  CsvTable tris({"index", "a", "b", "c"});
  for (std::size_t i = 0; i < mesh->triangles.size(); ++i) {
    const auto& t = mesh->triangles[i];
    tris.row({static_cast<double>(i), static_cast<double>(t[0]), static_cast<double>(t[1]), static_cast<double>(t[2])});
  }
  run.files["mesh_nodes.csv"] = nodes.text();
  run.files["mesh_triangles.csv"] = tris.text();
}

void cmd_moment(Run& run) {
  const auto W = difference_sampler(run.field, run.reference);
  const int d = run.field.dim;
  const Mat basis = orthonormal_basis_with_first(omega0_of(run));
  const int count = get_or(run.section, "directions", 64);
  const auto dirs = real_directions(basis, count, get_or(run.section, "offset", 0.0));
  std::vector<Complex> values(dirs.size());
  parallel_for(dirs.size(), run.threads, [&](std::size_t i) { values[i] = W(dirs[i]); });
  auto header = direction_header(d, "direction_index");
  header.insert(header.end(), {"value_re", "value_im"});
  CsvTable tab(header);
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    std::vector<double> row{static_cast<double>(i)};
    const auto w = real_values(direction_vector(dirs[i]).real());
    row.insert(row.end(), w.begin(), w.end());
    row.insert(row.end(), {values[i].real(), values[i].imag()});
    tab.row(row);
  }
  run.files["moment.csv"] = tab.text();

  const HalfLineProbe probe = probe_of(run, run.section.value("probe", Json::object()));
  const auto [max_norm, max_radius] = bounds(run);
  probe.validate(max_norm, max_radius);
  CsvTable half({"R", "value_re", "value_im", "log_abs"});
  for (Eigen::Index k = 0; k < probe.R_grid.size(); ++k) {
    const Complex v = W(probe.at(probe.R_grid[k]));
    half.row({probe.R_grid[k], v.real(), v.imag(), std::log(std::abs(v))});
  }
  run.files["halfline.csv"] = half.text();
}

void cmd_identity(Run& run) {
  if (run.field.dim != 2) throw Error(ErrorKind::Unsupported, "the FEM solver is two-dimensional");
  const int count = get_or(run.section, "directions", 16);
  std::vector<Vec2> dirs;
  for (int j = 0; j < count; ++j) dirs.emplace_back(std::cos(2.0 * kPi * j / count), std::sin(2.0 * kPi * j / count));
  const auto hs = get_or<std::vector<double>>(run.section, "h", {run.h()});
  std::vector<IdentityReport> reps(hs.size());
  parallel_for(hs.size(), run.threads, [&](std::size_t i) {
    log(1, "identity at h = " + std::to_string(hs[i]));
    reps[i] = identity_residual(run.field, run.reference, run.exc, build_mesh(run.field.domain, hs[i]), dirs);
  });
  CsvTable tab({"h", "direction_index", "omega_x", "omega_y", "moment_re", "moment_im", "pairing_re", "pairing_im",
                "residual"});
  CsvTable conv({"h", "max_residual", "mean_residual", "scale", "relative_max", "ratio"});
  for (std::size_t i = 0; i < hs.size(); ++i) {
    const auto& r = reps[i];
    for (std::size_t j = 0; j < dirs.size(); ++j) {
      const auto jj = static_cast<Eigen::Index>(j);
      tab.row({hs[i], static_cast<double>(j), dirs[j].x(), dirs[j].y(), r.moment[jj].real(), r.moment[jj].imag(),
               r.pairing[jj].real(), r.pairing[jj].imag(), r.residual[jj]});
    }
    const double ratio = i == 0 ? std::nan("") : reps[i - 1].max_residual / r.max_residual;
    conv.row({hs[i], r.max_residual, r.mean_residual, r.scale, r.scale > 0 ? r.max_residual / r.scale : 0.0, ratio});
  }
  run.files["identity.csv"] = tab.text();
  run.files["convergence.csv"] = conv.text();
}

// Largest over truth inclusions of the distance to the nearest recovered one, in the max
// of |Δcentre|, |Δradius| and |Δamplitude|. Only defined when both lists are balls.
double ball_error(const std::vector<Inclusion>& truth, const std::vector<Inclusion>& got) {
  double worst = 0.0;
  for (const auto& t : truth) {
    const auto* tb = std::get_if<Ball>(&t.shape);
    if (!tb) return std::nan("");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& g : got) {
      const auto* gb = std::get_if<Ball>(&g.shape);
      if (!gb) return std::nan("");
      best = std::min(best, std::max({(gb->center - tb->center).norm(), std::abs(gb->radius - tb->radius),
                                      std::abs(g.amplitude - t.amplitude)}));
    }
    worst = std::max(worst, best);
  }
  return worst;
}

void traces_csv(Run& run, const std::vector<ProbeTrace>& traces) {
  CsvTable tab({"probe_index", "R", "log_abs", "fitted"});
  for (std::size_t i = 0; i < traces.size(); ++i)
    for (Eigen::Index k = 0; k < traces[i].R.size(); ++k)
      tab.row({static_cast<double>(i), traces[i].R[k], traces[i].log_abs[k],
               k < traces[i].fitted.size() ? traces[i].fitted[k] : std::nan("")});
  run.files["traces.csv"] = tab.text();
}

void cmd_recover(Run& run) {
  const auto W = difference_sampler(run.field, run.reference);
  const Json& s = run.section;
  const std::string model = get_or<std::string>(s, "model", "ball");
  const Mat basis = orthonormal_basis_with_first(omega0_of(run));
  Json out;
  out["model"] = model;
  out["note"] = "differences are relative to the declared reference configuration";

  if (model == "hull") {
    if (run.field.dim != 2) throw Error(ErrorKind::Unsupported, "hull recovery is two-dimensional");
    const int n = get_or(s, "hull_directions", 32);
    // Half a step off the axes by default: edge normals are not generic directions.
    const double offset = get_or(s, "offset", kPi / n);
    const Json pj = s.value("probe", Json::object());
    const auto R = get_or<std::vector<double>>(pj, "R", {2.0, 5.0, 0.1});
    if (R.size() != 3) throw bad("probe.R must be [start, stop, step]");
    std::vector<SupportEstimate> est(static_cast<std::size_t>(n));
    parallel_for(est.size(), run.threads, [&](std::size_t j) {
      // Each support value is read in its own frame, ê₁ along the probed normal.
      const double a = offset + 2.0 * kPi * static_cast<double>(j) / n;
      const Vec2 w(std::cos(a), std::sin(a));
      est[j] = support_function(W, make_probe(orthonormal_basis_with_first(w), 0.0, Vec(), range_grid(R[0], R[1], R[2])));
    });
    std::vector<std::pair<Vec2, double>> sup;
    std::vector<ProbeTrace> traces;
    out["supports"] = Json::array();
    for (const auto& e : est) {
      sup.emplace_back(Vec2(e.omega_tilde), e.h);
      traces.push_back(e.trace);
      out["supports"].push_back({{"omega", {e.omega_tilde[0], e.omega_tilde[1]}}, {"h", e.h}, {"rms", e.rms}});
    }
    const auto hull = recover_hull(sup, get_or(s, "resolution", 0.05));
    out["hull"] = Json::array();
    for (const auto& v : hull) out["hull"].push_back({v.x(), v.y()});
    traces_csv(run, traces);
    run.files["recovery.json"] = dump(out);
    return;
  }

  const int count = get_or(s, "count", static_cast<int>(run.field.inclusions.size()));
  if (count < 1) throw bad("recover.count must be at least 1");
  RecoveryReport init;
  const RecoveryReport* start = nullptr;
  if (model == "ball") {
    PeelOptions po;
    po.floor = get_or(s, "floor", po.floor);
    po.max_balls = get_or(s, "max_balls", po.max_balls);
    po.retries = get_or(s, "retries", po.retries);
    po.seed = run.seed;
    std::tie(po.max_norm, po.max_radius) = bounds(run);
    const HalfLineProbe probe = probe_of(run, s.value("probe", Json::object()));
    init = peel_spherical(W, probe, get_or(s, "peel_directions", 3), po);
    out["peel"] = to_json(init);
    traces_csv(run, init.traces);
    start = &init;
  } else if (model == "simplex" || model == "box") {
    if (s.contains("initial")) {
      for (const auto& inc : s["initial"]) init.inclusions.push_back(inclusion_from_json(inc));
      start = &init;
    }
  } else {
    throw bad("recover.model must be ball, simplex, box or hull");
  }
  const auto samples = sample_trace(W, basis, get_or(s, "directions", 64));
  const auto fit = fit_inclusions(samples, FitModel{model, count}, start);
  out["fit"] = to_json(fit);
  const double err = ball_error(run.field.inclusions, fit.inclusions);
  if (model == "ball" && std::isfinite(err) && run.reference.inclusions.empty()) out["truth_error"] = err;
  run.files["recovery.json"] = dump(out);
}

void cmd_check(Run& run) {
  const auto rep = check_assumptions(run.field, run.reference);
  Json j = to_json(rep);
  j["triangulation"] = "lexicographic ear clipping";
  run.files["assumptions.json"] = dump(j);
  for (const auto& it : rep.items) log(1, it.name + ": " + to_string(it.status));
}

void cmd_oracle(Run& run) {
  const Json& s = run.section;
  const int cases = get_or(s, "cases", 30);
  const double max_norm = get_or(s, "max_norm", 10.0);
  const auto dims = get_or<std::vector<int>>(s, "dims", {2, 3});
  const auto shapes = get_or<std::vector<std::string>>(s, "shapes", {"ball", "simplex", "box"});
  const std::string method = get_or<std::string>(s, "method", "tensor");
  QuadratureSpec spec;
  if (method == "tensor") spec.method = QuadratureMethod::Tensor;
  else if (method == "adaptive") spec.method = QuadratureMethod::Adaptive;
  else if (method == "monte_carlo") spec.method = QuadratureMethod::MonteCarlo;
  else throw bad("oracle.method must be tensor, adaptive or monte_carlo");
  for (int d : dims)
    if (d != 2 && d != 3) throw bad("oracle.dims entries must be 2 or 3");
  if (dims.empty() || shapes.empty()) throw bad("oracle needs at least one dimension and shape");

  // Cases are drawn up front so the output does not depend on the thread count.
  std::mt19937_64 rng(run.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  struct Case {
    Inclusion shape;
    CVec y;
  };
  std::vector<Case> all;
  for (int c = 0; c < cases; ++c) {
    const int d = dims[static_cast<std::size_t>(c) % dims.size()];
    const std::string& kind = shapes[static_cast<std::size_t>(c / static_cast<int>(dims.size())) % shapes.size()];
    Vec center(d);
    for (int i = 0; i < d; ++i) center[i] = 0.3 * u(rng);
    Inclusion inc;
    if (kind == "ball") {
      inc = make_ball(center, 0.2 + 0.3 * std::abs(u(rng)), 0.1);
    } else if (kind == "box") {
      Vec w(d);
      for (int i = 0; i < d; ++i) w[i] = 0.2 + 0.4 * std::abs(u(rng));
      inc = make_box(center, w, 0.1);
    } else if (kind == "simplex") {
      Mat m(d, d);
      do {
        for (int i = 0; i < d; ++i)
          for (int k = 0; k < d; ++k) m(i, k) = 0.5 * u(rng);
      } while (std::abs(m.determinant()) < 0.02);
      if (m.determinant() < 0.0) m.col(0) *= -1.0;
      inc = make_simplex(center, m, 0.1);
    } else {
      throw bad("unknown oracle shape '" + kind + "'");
    }
    CVec y(d);
    for (int i = 0; i < d; ++i) y[i] = Complex(u(rng), (c % 2) ? u(rng) : 0.0);
    y *= max_norm * std::abs(u(rng)) / y.norm();
    all.push_back({inc, y});
  }
  std::vector<QuadratureResult> res(all.size());
  parallel_for(all.size(), run.threads, [&](std::size_t i) { res[i] = quadrature_moment(all[i].shape, all[i].y, spec); });
  CsvTable tab({"case_id", "value_re", "value_im", "est_error", "closed_re", "closed_im", "relative_error", "shape", "d"});
  double worst = 0.0;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const Complex closed = shape_moment(all[i].shape, all[i].y);
    const double rel = std::abs(res[i].value - closed) / std::max(std::abs(closed), 1e-300);
    worst = std::max(worst, rel);
    tab.row(std::vector<std::string>{std::to_string(i), format_number(res[i].value.real()),
                                     format_number(res[i].value.imag()), format_number(res[i].error),
                                     format_number(closed.real()), format_number(closed.imag()), format_number(rel),
                                     all[i].shape.kind(), std::to_string(all[i].shape.dim())});
  }
  run.files["oracle.csv"] = tab.text();
  log(1, "oracle: " + std::to_string(all.size()) + " cases, worst relative error " + format_number(worst));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vorder: variable-order subdiffusion toolkit"};
  app.require_subcommand(1);
  std::string config;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  int threads = 0;
  std::string out;
  app.add_option("--config", config, "JSON run configuration")->required();
  auto* seed_opt = app.add_option("--seed", seed, "random seed (overrides config)");
  auto* threads_opt = app.add_option("--threads", threads, "worker threads (overrides config)");
  auto* out_opt = app.add_option("--out", out, "output directory (overrides config)");
  app.add_option("--override", overrides, "key=value, dotted keys into the config");
  const std::map<std::string, void (*)(Run&)> commands = {
      {"forward", cmd_forward}, {"moment", cmd_moment}, {"identity", cmd_identity},
      {"recover", cmd_recover}, {"check", cmd_check},   {"oracle", cmd_oracle}};
  const std::map<std::string, std::string> help = {
      {"forward", "Laplace- and time-domain boundary fluxes"},
      {"moment", "moment function on real directions and a half-line"},
      {"identity", "orthogonality identity residuals and their convergence"},
      {"recover", "peeling, least-squares fit or hull recovery"},
      {"check", "assumption report for a pair of configurations"},
      {"oracle", "quadrature validation of the closed-form moments"}};
  for (const auto& [name, _] : commands) app.add_subcommand(name, help.at(name))->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }
  const std::string name = app.get_subcommands().front()->get_name();

  try {
    Run run = load(name, config, overrides);
    if (*seed_opt) run.seed = seed;
    if (*threads_opt) {
      if (threads < 1) throw bad("--threads must be at least 1");
      run.threads = threads;
    }
    if (*out_opt) run.out = out;
    log(2, "config " + config + ", seed " + std::to_string(run.seed) + ", threads " + std::to_string(run.threads));
    commands.at(name)(run);
    for (const auto& [file, text] : run.files) {
      const std::string path = (std::filesystem::path(run.out) / file).string();
      write_file_atomic(path, text);
      log(1, "wrote " + path);
    }
  } catch (const Error& e) {
    std::cerr << "vorder: " << e.what() << "\n";
    return exit_code(e.kind());
  } catch (const Json::exception& e) {
    std::cerr << "vorder: configuration error: " << e.what() << "\n";
    return kValidation;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "vorder: " << e.what() << "\n";
    return kValidation;
  }
  return kOk;
}
