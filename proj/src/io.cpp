#include "vorder/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

namespace vorder {

namespace {

Json vec(const Vec& v) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Json vec2(const Vec2& v) { return Json::array({v.x(), v.y()}); }

Json points(const std::vector<Vec2>& pts) {
  Json a = Json::array();
  for (const auto& p : pts) a.push_back(vec2(p));
  return a;
}

Vec read_vec(const Json& j, const char* what) {
  if (!j.is_array() || j.empty()) throw Error(ErrorKind::Configuration, std::string(what) + " must be a non-empty array");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw Error(ErrorKind::Configuration, std::string(what) + " must hold numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

Vec2 read_vec2(const Json& j, const char* what) {
  const Vec v = read_vec(j, what);
  if (v.size() != 2) throw Error(ErrorKind::Configuration, std::string(what) + " must have two entries");
  return v;
}

const Json& field(const Json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw Error(ErrorKind::Configuration, std::string("missing field '") + key + "'");
  return j.at(key);
}

double number(const Json& j, const char* key) {
  const Json& v = field(j, key);
  if (!v.is_number()) throw Error(ErrorKind::Configuration, std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

void dump_into(const Json& j, int indent, int depth, std::string& out) {
  const std::string pad = indent > 0 ? "\n" + std::string(static_cast<std::size_t>(indent * (depth + 1)), ' ') : "";
  const std::string close = indent > 0 ? "\n" + std::string(static_cast<std::size_t>(indent * depth), ' ') : "";
  const char* sep = indent > 0 ? ": " : ":";
  switch (j.type()) {
    case Json::value_t::number_float: {
      std::string s = format_number(j.get<double>());
      if (!std::isfinite(j.get<double>())) s = "null";
      else if (s.find_first_of(".en") == std::string::npos) s += ".0";
      out += s;
      break;
    }
    case Json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        break;
      }
      // Short numeric rows stay on one line.
      bool flat = j.size() <= 4 && std::all_of(j.begin(), j.end(), [](const Json& e) { return e.is_number(); });
      out += "[";
      bool first = true;
      for (const auto& e : j) {
        out += first ? "" : ",";
        out += flat ? (first ? "" : " ") : pad;
        dump_into(e, indent, depth + 1, out);
        first = false;
      }
      out += flat ? "]" : close + "]";
      break;
    }
    case Json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        break;
      }
      out += "{";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        out += first ? "" : ",";
        out += pad + Json(it.key()).dump() + sep;
        dump_into(it.value(), indent, depth + 1, out);
        first = false;
      }
      out += close + "}";
      break;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

// ---------------------------------------------------------------------------

Json to_json(const Inclusion& inc) {
  Json params;
  if (const auto* b = std::get_if<Ball>(&inc.shape)) {
    params = {{"center", vec(b->center)}, {"radius", b->radius}};
  } else if (const auto* s = std::get_if<Simplex>(&inc.shape)) {
    Json edges = Json::array();
    for (Eigen::Index c = 0; c < s->matrix.cols(); ++c) edges.push_back(vec(s->matrix.col(c)));
    params = {{"base", vec(s->base)}, {"edges", edges}};
  } else {
    const auto& x = std::get<Box>(inc.shape);
    params = {{"center", vec(x.center)}, {"widths", vec(x.widths)}};
  }
  return {{"kind", inc.kind()}, {"params", params}, {"amplitude", inc.amplitude}};
}

Json to_json(const Domain& domain) {
  if (domain.is_disk()) return {{"kind", "disk"}, {"center", vec(domain.disk().center)}, {"radius", domain.disk().radius}};
  return {{"kind", "polygon"}, {"vertices", points(domain.polygon().vertices)}};
}

Json to_json(const OrderField& field) {
  Json j;
  j["d"] = field.dim;
  j["domain"] = to_json(field.domain);
  if (const auto* c = std::get_if<double>(&field.background)) {
    j["background"] = *c;
  } else {
    const auto& g = std::get<GridBackground>(field.background);
    Json rows = Json::array();
    for (Eigen::Index i = 0; i < g.values.rows(); ++i) rows.push_back(vec(g.values.row(i).transpose()));
    j["background"] = {{"kind", "grid"}, {"lower", vec2(g.lower)}, {"upper", vec2(g.upper)}, {"values", rows}};
  }
  j["inclusions"] = Json::array();
  for (const auto& inc : field.inclusions) j["inclusions"].push_back(to_json(inc));
  return j;
}

Inclusion inclusion_from_json(const Json& j) {
  const Json& kind = field(j, "kind");
  const Json& p = field(j, "params");
  const double amp = number(j, "amplitude");
  if (kind == "ball") return make_ball(read_vec(field(p, "center"), "center"), number(p, "radius"), amp);
  if (kind == "box") return make_box(read_vec(field(p, "center"), "center"), read_vec(field(p, "widths"), "widths"), amp);
  if (kind == "simplex") {
    if (p.contains("vertices")) {
      std::vector<Vec> vs;
      for (const auto& v : field(p, "vertices")) vs.push_back(read_vec(v, "vertex"));
      return make_simplex_from_vertices(vs, amp);
    }
    const Vec base = read_vec(field(p, "base"), "base");
    const Json& edges = field(p, "edges");
    if (!edges.is_array()) throw Error(ErrorKind::Configuration, "edges must be an array");
    Mat m(base.size(), static_cast<Eigen::Index>(edges.size()));
    for (std::size_t c = 0; c < edges.size(); ++c) {
      const Vec e = read_vec(edges[c], "edge");
      if (e.size() != base.size()) throw Error(ErrorKind::Configuration, "edge length differs from base");
      m.col(static_cast<Eigen::Index>(c)) = e;
    }
    return make_simplex(base, m, amp);
  }
  throw Error(ErrorKind::Configuration, "unknown inclusion kind " + kind.dump());
}

Domain domain_from_json(const Json& j) {
  const Json& kind = field(j, "kind");
  if (kind == "disk") return Domain(DiskDomain{read_vec(field(j, "center"), "center"), number(j, "radius")});
  if (kind == "polygon") {
    PolygonDomain poly;
    for (const auto& v : field(j, "vertices")) poly.vertices.push_back(read_vec2(v, "vertex"));
    return Domain(poly);
  }
  throw Error(ErrorKind::Configuration, "unknown domain kind " + kind.dump());
}

OrderField order_field_from_json(const Json& j) {
  OrderField f;
  if (!j.is_object()) throw Error(ErrorKind::Configuration, "order field must be an object");
  f.dim = j.contains("d") ? j.at("d").get<int>() : 2;
  f.domain = j.contains("domain") ? domain_from_json(j.at("domain")) : Domain::unit_disk(f.dim);
  if (j.contains("background")) {
    const Json& b = j.at("background");
    if (b.is_number()) {
      f.background = b.get<double>();
    } else {
      GridBackground g;
      g.lower = read_vec2(field(b, "lower"), "lower");
      g.upper = read_vec2(field(b, "upper"), "upper");
      const Json& rows = field(b, "values");
      if (!rows.is_array() || rows.empty()) throw Error(ErrorKind::Configuration, "grid values must be a non-empty array");
      g.values.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows[0].size()));
      for (std::size_t i = 0; i < rows.size(); ++i) {
        const Vec r = read_vec(rows[i], "grid row");
        if (r.size() != g.values.cols()) throw Error(ErrorKind::Configuration, "ragged grid values");
        g.values.row(static_cast<Eigen::Index>(i)) = r.transpose();
      }
      f.background = g;
    }
  }
  if (j.contains("inclusions"))
    for (const auto& inc : j.at("inclusions")) f.inclusions.push_back(inclusion_from_json(inc));
  f.validate();
  return f;
}

Json to_json(const RecoveryReport& report) {
  Json j;
  j["kind"] = report.kind;
  j["inclusions"] = Json::array();
  for (const auto& inc : report.inclusions) j["inclusions"].push_back(to_json(inc));
  j["residual_norm"] = report.residual_norm;
  j["relative_residual"] = report.relative_residual;
  j["min_singular_value"] = report.min_singular_value;
  j["identifiable"] = report.identifiable;
  j["complete"] = report.complete;
  j["iterations"] = report.iterations;
  j["stages"] = Json::array();
  for (const auto& st : report.stages) {
    j["stages"].push_back({{"omega_tilde", vec(st.omega_tilde)},
                           {"turn", vec(st.turn)},
                           {"theta", st.theta},
                           {"projections", vec(st.projections)},
                           {"offsets", vec(st.offsets)},
                           {"radii", vec(st.radii)},
                           {"amplitudes", vec(st.amplitudes)},
                           {"relative_residual", st.relative_residual},
                           {"reached_floor", st.reached_floor},
                           {"retries", st.retries}});
  }
  j["notes"] = report.notes;
  return j;
}

Json to_json(const AssumptionReport& report) {
  Json j;
  j["items"] = Json::array();
  for (const auto& it : report.items)
    j["items"].push_back(
        {{"name", it.name}, {"status", to_string(it.status)}, {"detail", it.detail}, {"witnesses", it.witnesses}});
  j["pieces"] = Json::array();
  for (const auto& p : report.pieces) j["pieces"].push_back({{"polygon", points(p.polygon)}, {"value", p.value}});
  j["triangles"] = Json::array();
  for (const auto& [t, v] : report.triangles)
    j["triangles"].push_back({{"vertices", points({t[0], t[1], t[2]})}, {"value", v}});
  j["hull"] = points(report.hull);
  j["note"] = report.note;
  return j;
}

std::string dump(const Json& j, int indent) {
  std::string out;
  dump_into(j, indent, 0, out);
  out += "\n";
  return out;
}

// ---------------------------------------------------------------------------

std::string format_number(double x) {
  if (std::isnan(x)) return "nan";
  if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

CsvTable::CsvTable(std::vector<std::string> header) : columns_(header.size()) {
  row(header);
  rows_ = 0;
}

CsvTable& CsvTable::row(const std::vector<double>& values) {
  std::vector<std::string> cells;
  cells.reserve(values.size());
  for (double v : values) cells.push_back(format_number(v));
  return row(cells);
}

CsvTable& CsvTable::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw Error(ErrorKind::Contract, "CSV row has the wrong number of cells");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    text_ += cells[i];
  }
  text_ += '\n';
  ++rows_;
  return *this;
}

void write_file_atomic(const std::string& path, const std::string& content) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error(ErrorKind::Configuration, "cannot write " + tmp.string());
    os << content;
    if (!os.flush()) throw Error(ErrorKind::Configuration, "write failed for " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace vorder
