#include "biotstokes/scenario.hpp"

#include <algorithm>
#include <cctype>
#include <climits>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <utility>

#include <json.hpp>

#include "biotstokes/expr.hpp"
#include "biotstokes/movemesh.hpp"
#include "biotstokes/vtk.hpp"

namespace bstok {
namespace {

// ============================================================================
// Small parsing helpers
// ============================================================================

std::string trim(const std::string& s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

bool parse_double(const std::string& s, double& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  out = std::strtod(t.c_str(), &end);
  return end == t.c_str() + t.size() && std::isfinite(out);
}

bool parse_int(const std::string& s, int& out) {
  const std::string t = trim(s);
  if (t.empty()) return false;
  char* end = nullptr;
  const long v = std::strtol(t.c_str(), &end, 10);
  if (end != t.c_str() + t.size()) return false;
  if (v < INT_MIN || v > INT_MAX) return false;
  out = static_cast<int>(v);
  return true;
}

bool parse_u64(const std::string& s, std::uint64_t& out) {
  const std::string t = trim(s);
  if (t.empty() || t[0] == '-') return false;
  char* end = nullptr;
  out = std::strtoull(t.c_str(), &end, 10);
  return end == t.c_str() + t.size();
}

bool parse_bool(const std::string& s, bool& out) {
  const std::string t = trim(s);
  if (t == "true" || t == "on" || t == "yes" || t == "1") {
    out = true;
    return true;
  }
  if (t == "false" || t == "off" || t == "no" || t == "0") {
    out = false;
    return true;
  }
  return false;
}

// "a, b", optionally wrapped in parentheses
bool parse_number_pair(const std::string& s, double& a, double& b) {
  std::string t = trim(s);
  if (t.size() >= 2 && t.front() == '(' && t.back() == ')')
    t = trim(t.substr(1, t.size() - 2));
  const size_t comma = t.find(',');
  if (comma == std::string::npos) return false;
  return parse_double(t.substr(0, comma), a) && parse_double(t.substr(comma + 1), b);
}

// ============================================================================
// Boundary condition compilation
// ============================================================================

struct CompiledBcs {
  BcSpec spec;
  FunctionalExtras extras;
};

std::string bc_context(const BcLine& bc) {
  return "bc '" + std::to_string(bc.marker) + " = " + bc.field + " : " +
         bc.style + " : " + bc.value + "'";
}

Expr scalar_expr(const BcLine& bc) {
  try {
    return Expr::parse(bc.value);
  } catch (const ExprError& e) {
    throw ConfigError(bc_context(bc) + ": " + e.what());
  }
}

std::array<Expr, 2> vector_expr(const BcLine& bc) {
  try {
    return parse_expr_pair(bc.value);
  } catch (const ExprError& e) {
    throw ConfigError(bc_context(bc) + ": " + e.what());
  }
}

VectorFn vector_fn(std::array<Expr, 2> e) {
  return [ex = std::move(e[0]), ey = std::move(e[1])](Vec2 x, double t) {
    return Vec2{ex(x, t), ey(x, t)};
  };
}

// x-component function for the single-component styles (the other component
// stays unconstrained through the mask)
VectorFn component_fn(Expr e, int component) {
  return [e = std::move(e), component](Vec2 x, double t) {
    const double v = e(x, t);
    return component == 0 ? Vec2{v, 0.0} : Vec2{0.0, v};
  };
}

// "nitsche" or "nitsche(penalty)"
double nitsche_penalty(const BcLine& bc) {
  if (bc.style == "nitsche") return 1.0;
  const std::string inner = bc.style.substr(8, bc.style.size() - 9);
  double p = 0.0;
  if (!parse_double(inner, p) || !(p > 0.0))
    throw ConfigError(bc_context(bc) + ": penalty must be a positive number");
  return p;
}

bool is_nitsche_style(const std::string& style) {
  return style == "nitsche" ||
         (style.size() > 9 && style.compare(0, 8, "nitsche(") == 0 &&
          style.back() == ')');
}

// Grammar, expression and duplicate checks; no mesh involved, so the parser
// can reuse this to reject bad lines early.
void apply_bc_line(const BcLine& bc, CompiledBcs& out) {
  if (bc.field == "u") {
    if (bc.style == "dirichlet") {
      out.spec.velocity.push_back({bc.marker, {true, true}, vector_fn(vector_expr(bc))});
    } else if (bc.style == "dirichlet_x" || bc.style == "axis") {
      out.spec.velocity.push_back({bc.marker, {true, false}, component_fn(scalar_expr(bc), 0)});
    } else if (bc.style == "dirichlet_y") {
      out.spec.velocity.push_back({bc.marker, {false, true}, component_fn(scalar_expr(bc), 1)});
    } else if (is_nitsche_style(bc.style)) {
      out.spec.nitsche_velocity.push_back({bc.marker, vector_fn(vector_expr(bc)), nitsche_penalty(bc)});
    } else if (bc.style == "pressure_inlet") {
      if (out.extras.fluid_traction.count(bc.marker))
        throw ConfigError(bc_context(bc) + ": marker already carries a fluid traction");
      out.extras.fluid_traction[bc.marker] = [p = scalar_expr(bc)](Vec2 x, double t, Vec2 n) {
        return (-p(x, t)) * n;
      };
    } else if (bc.style == "stress") {
      if (out.extras.fluid_traction.count(bc.marker))
        throw ConfigError(bc_context(bc) + ": marker already carries a fluid traction");
      auto e = vector_expr(bc);
      out.extras.fluid_traction[bc.marker] =
          [ex = std::move(e[0]), ey = std::move(e[1])](Vec2 x, double t, Vec2) {
            return Vec2{ex(x, t), ey(x, t)};
          };
    } else {
      throw ConfigError(bc_context(bc) + ": unknown style '" + bc.style + "' for field u");
    }
  } else if (bc.field == "d") {
    if (bc.style == "dirichlet") {
      out.spec.displacement.push_back({bc.marker, {true, true}, vector_fn(vector_expr(bc))});
    } else if (bc.style == "dirichlet_x" || bc.style == "axis") {
      out.spec.displacement.push_back({bc.marker, {true, false}, component_fn(scalar_expr(bc), 0)});
    } else if (bc.style == "dirichlet_y") {
      out.spec.displacement.push_back({bc.marker, {false, true}, component_fn(scalar_expr(bc), 1)});
    } else if (bc.style == "traction") {
      if (out.extras.porous_traction.count(bc.marker))
        throw ConfigError(bc_context(bc) + ": marker already carries a poroelastic traction");
      auto e = vector_expr(bc);
      out.extras.porous_traction[bc.marker] =
          [ex = std::move(e[0]), ey = std::move(e[1])](Vec2 x, double t, Vec2) {
            return Vec2{ex(x, t), ey(x, t)};
          };
    } else {
      throw ConfigError(bc_context(bc) + ": unknown style '" + bc.style + "' for field d");
    }
  } else if (bc.field == "p_p") {
    if (bc.style == "dirichlet") {
      out.spec.porous_pressure.push_back({bc.marker, scalar_expr(bc).fn()});
    } else if (bc.style == "flux") {
      // the config gives the outward Darcy flux q.n; the functional wants the
      // natural datum (kappa/mu_f)(grad p_P - rho_f g).n = -q.n
      if (out.extras.porous_flux.count(bc.marker))
        throw ConfigError(bc_context(bc) + ": marker already carries a Darcy flux");
      out.extras.porous_flux[bc.marker] = [q = scalar_expr(bc)](Vec2 x, double t, Vec2) {
        return -q(x, t);
      };
    } else {
      throw ConfigError(bc_context(bc) + ": unknown style '" + bc.style + "' for field p_p");
    }
  } else {
    throw ConfigError(bc_context(bc) + ": unknown field '" + bc.field +
                      "' (expected u, d or p_p)");
  }
}

bool marker_on_side(const Mesh& mesh, int marker, int side) {
  for (const auto& f : mesh.boundary)
    if (f.marker == marker && mesh.cell_tag[static_cast<size_t>(f.cell)] == side)
      return true;
  return false;
}

CompiledBcs compile_bcs(const std::vector<BcLine>& lines, const Mesh& mesh) {
  CompiledBcs out;
  for (const auto& bc : lines) {
    const int side = bc.field == "u" ? subdomain::fluid : subdomain::porous;
    if (!marker_on_side(mesh, bc.marker, side))
      throw ConfigError(bc_context(bc) + ": marker " + std::to_string(bc.marker) +
                        " has no boundary facets on the " +
                        (side == subdomain::fluid ? "fluid" : "porous") + " side");
    apply_bc_line(bc, out);
  }
  return out;
}

// ============================================================================
// Config parsing
// ============================================================================

struct ParseCtx {
  const std::string* source;
  int line = 0;

  [[noreturn]] void fail(const std::string& msg) const {
    throw ConfigError(*source + ":" + std::to_string(line) + ": " + msg);
  }
};

double need_double(const ParseCtx& c, const std::string& key, const std::string& v) {
  double out = 0.0;
  if (!parse_double(v, out)) c.fail(key + " expects a number, got '" + v + "'");
  return out;
}

int need_int(const ParseCtx& c, const std::string& key, const std::string& v) {
  int out = 0;
  if (!parse_int(v, out)) c.fail(key + " expects an integer, got '" + v + "'");
  return out;
}

bool need_bool(const ParseCtx& c, const std::string& key, const std::string& v) {
  bool out = false;
  if (!parse_bool(v, out)) c.fail(key + " expects true or false, got '" + v + "'");
  return out;
}

Interval need_interval(const ParseCtx& c, const std::string& key, const std::string& v) {
  double a = 0.0, b = 0.0;
  if (!parse_number_pair(v, a, b)) c.fail(key + " expects 'lo, hi', got '" + v + "'");
  if (!(b > a)) c.fail(key + " needs hi > lo");
  return {a, b};
}

void need_expression(const ParseCtx& c, const std::string& key, const std::string& v) {
  try {
    Expr::parse(v);
  } catch (const ExprError& e) {
    c.fail(key + ": " + e.what());
  }
}

void scenario_key(const ParseCtx& c, ScenarioConfig& cfg, const std::string& key,
                  const std::string& v) {
  if (key == "name") {
    if (v.empty()) c.fail("name must not be empty");
    cfg.name = v;
  } else if (key == "mode") {
    if (v == "cartesian") cfg.mode = GeomMode::cartesian;
    else if (v == "axisym") cfg.mode = GeomMode::axisym;
    else c.fail("mode must be cartesian or axisym, got '" + v + "'");
  } else if (key == "family") {
    if (v == "taylor_hood") cfg.family = ElementFamily::taylor_hood;
    else if (v == "mini") cfg.family = ElementFamily::mini;
    else c.fail("family must be taylor_hood or mini, got '" + v + "'");
  } else if (key == "porous_pressure") {
    if (v == "p1") cfg.porous_pressure = ElementKind::p1;
    else if (v == "p2") cfg.porous_pressure = ElementKind::p2;
    else c.fail("porous_pressure must be p1 or p2, got '" + v + "'");
  } else if (key == "transient") {
    cfg.transient = need_bool(c, key, v);
  } else if (key == "mesh_motion") {
    if (v == "off") cfg.motion = MeshMotion::off;
    else if (v == "trace") cfg.motion = MeshMotion::trace;
    else if (v == "harmonic") cfg.motion = MeshMotion::harmonic;
    else c.fail("mesh_motion must be off, trace or harmonic, got '" + v + "'");
  } else {
    c.fail("unknown key '" + key + "' in [scenario]");
  }
}

void mesh_key(const ParseCtx& c, MeshSpec& m, const std::string& key,
              const std::string& v) {
  if (key == "file") m.file = v;
  else if (key == "x") m.x = need_interval(c, key, v);
  else if (key == "y_fluid") m.y_fluid = need_interval(c, key, v);
  else if (key == "y_porous") m.y_porous = need_interval(c, key, v);
  else if (key == "nx") m.nx = need_int(c, key, v);
  else if (key == "ny") m.ny = need_int(c, key, v);
  else if (key == "axis_at_x_lo") m.axis_at_x_lo = need_bool(c, key, v);
  else if (key == "outlet_x_hi") m.outlet_x_hi = need_double(c, key, v);
  else c.fail("unknown key '" + key + "' in [mesh]");
}

void materials_key(const ParseCtx& c, ScenarioConfig& cfg, const std::string& key,
                   const std::string& v) {
  MaterialParams& p = cfg.materials;
  if (key == "lambda") p.lambda = need_double(c, key, v);
  else if (key == "mu_s") p.mu_s = need_double(c, key, v);
  else if (key == "mu_f") p.mu_f = need_double(c, key, v);
  else if (key == "alpha") p.alpha = need_double(c, key, v);
  else if (key == "gamma") p.gamma = need_double(c, key, v);
  else if (key == "c0") p.c0 = need_double(c, key, v);
  else if (key == "rho_f") p.rho_f = need_double(c, key, v);
  else if (key == "rho_s") p.rho_s = need_double(c, key, v);
  else if (key == "g") {
    double gx = 0.0, gy = 0.0;
    if (!parse_number_pair(v, gx, gy)) c.fail("g expects 'gx, gy', got '" + v + "'");
    p.g = {gx, gy};
  } else if (key == "lambda_cells_csv") {
    cfg.lambda_cells_csv = v;
  } else {
    c.fail("unknown key '" + key + "' in [materials]");
  }
}

void kappa_key(const ParseCtx& c, KappaSpec& k, const std::string& key,
               const std::string& v) {
  if (key == "kind") {
    try {
      k.kind = kappa_kind_from(v);
    } catch (const FieldError& e) {
      c.fail(e.what());
    }
  } else if (key == "value") {
    k.value = need_double(c, key, v);
  } else if (key == "max") {
    k.kappa_max = need_double(c, key, v);
  } else if (key == "min") {
    k.kappa_min = need_double(c, key, v);
  } else if (key == "min_marker") {
    k.min_marker = need_int(c, key, v);
  } else if (key == "seed") {
    if (!parse_u64(v, k.seed)) c.fail("seed expects a nonnegative integer");
  } else if (key == "target_mean") {
    k.target_mean = need_double(c, key, v);
  } else if (key == "spots") {
    k.spots = need_int(c, key, v);
  } else if (key == "spot_radius") {
    k.spot_radius = need_double(c, key, v);
  } else if (key == "csv") {
    k.csv_path = v;
  } else {
    c.fail("unknown key '" + key + "' in [kappa]");
  }
}

void output_key(const ParseCtx& c, OutputSpec& o, const std::string& key,
                const std::string& v) {
  if (key == "every") {
    o.every = need_int(c, key, v);
    if (o.every < 0) c.fail("every must be nonnegative");
  } else if (key == "fields") {
    o.fields = need_bool(c, key, v);
  } else if (key == "series") {
    o.series = need_bool(c, key, v);
  } else if (key == "summary") {
    o.summary = need_bool(c, key, v);
  } else if (key == "matrix_market") {
    o.matrix_market = need_bool(c, key, v);
  } else if (key == "prefix") {
    if (v.empty() || v.find('/') != std::string::npos || v.find('\\') != std::string::npos)
      c.fail("prefix must be a plain file name stem");
    o.prefix = v;
  } else if (key == "inlet_marker") {
    o.inlet_marker = need_int(c, key, v);
  } else if (key == "outlet_marker") {
    o.outlet_marker = need_int(c, key, v);
  } else {
    c.fail("unknown key '" + key + "' in [output]");
  }
}

void bc_key(const ParseCtx& c, ScenarioConfig& cfg, const std::string& key,
            const std::string& v) {
  BcLine bc;
  if (!parse_int(key, bc.marker))
    c.fail("[bc] keys are integer markers, got '" + key + "'");
  const size_t c1 = v.find(':');
  const size_t c2 = c1 == std::string::npos ? std::string::npos : v.find(':', c1 + 1);
  if (c1 == std::string::npos || c2 == std::string::npos ||
      v.find(':', c2 + 1) != std::string::npos)
    c.fail("[bc] values look like 'field : style : value', got '" + v + "'");
  bc.field = trim(v.substr(0, c1));
  bc.style = trim(v.substr(c1 + 1, c2 - c1 - 1));
  bc.value = trim(v.substr(c2 + 1));
  try {
    CompiledBcs scratch;
    apply_bc_line(bc, scratch);
  } catch (const ConfigError& e) {
    c.fail(e.what());
  }
  cfg.bcs.push_back(std::move(bc));
}

int step_count(const ScenarioConfig& cfg) {
  if (!(cfg.dt > 0.0)) throw ConfigError("dt must be positive");
  if (cfg.t_final < cfg.dt * (1.0 - 1e-9))
    throw ConfigError("t_final must be at least dt");
  const double ratio = cfg.t_final / cfg.dt;
  const long long n = std::llround(ratio);
  if (n < 1 || std::abs(static_cast<double>(n) - ratio) > 1e-6 * ratio)
    throw ConfigError("t_final must be an integer multiple of dt");
  return static_cast<int>(n);
}

void validate_config(const ScenarioConfig& cfg) {
  (void)step_count(cfg);
  if (cfg.mesh.file.empty()) {
    if (cfg.mesh.nx < 1 || cfg.mesh.ny < 1)
      throw ConfigError("mesh nx and ny must be at least 1");
    if (std::abs(cfg.mesh.y_porous.hi - cfg.mesh.y_fluid.lo) >
        1e-12 * std::max(1.0, std::abs(cfg.mesh.y_fluid.lo)))
      throw ConfigError("y_porous must end where y_fluid begins");
  }
  if (cfg.family == ElementFamily::mini && cfg.porous_pressure &&
      *cfg.porous_pressure == ElementKind::p2)
    throw ConfigError("mini family pairs with a P1 porous pressure");
}

}  // namespace

ScenarioConfig parse_config(std::istream& in, const std::string& source_name) {
  ScenarioConfig cfg;
  ParseCtx ctx{&source_name, 0};
  std::string section;
  std::string line;
  while (std::getline(in, line)) {
    ++ctx.line;
    const size_t comment = line.find_first_of("#;");
    if (comment != std::string::npos) line.erase(comment);
    line = trim(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') ctx.fail("unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "scenario" && section != "mesh" && section != "materials" &&
          section != "kappa" && section != "time" && section != "bc" &&
          section != "initial" && section != "output")
        ctx.fail("unknown section [" + section + "]");
      continue;
    }

    const size_t eq = line.find('=');
    if (eq == std::string::npos) ctx.fail("expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) ctx.fail("missing key before '='");
    if (section.empty()) ctx.fail("'" + key + "' appears before any [section]");

    if (section == "scenario") {
      scenario_key(ctx, cfg, key, value);
    } else if (section == "mesh") {
      mesh_key(ctx, cfg.mesh, key, value);
    } else if (section == "materials") {
      materials_key(ctx, cfg, key, value);
    } else if (section == "kappa") {
      kappa_key(ctx, cfg.kappa_spec, key, value);
    } else if (section == "time") {
      if (key == "dt") cfg.dt = need_double(ctx, key, value);
      else if (key == "t_final") cfg.t_final = need_double(ctx, key, value);
      else ctx.fail("unknown key '" + key + "' in [time]");
    } else if (section == "bc") {
      bc_key(ctx, cfg, key, value);
    } else if (section == "initial") {
      if (key == "p_p") {
        need_expression(ctx, key, value);
        cfg.initial_p_p = value;
      } else {
        ctx.fail("unknown key '" + key + "' in [initial]");
      }
    } else {
      output_key(ctx, cfg.output, key, value);
    }
  }
  validate_config(cfg);
  return cfg;
}

ScenarioConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in, path);
}

// ============================================================================
// Field sampling and boundary diagnostics
// ============================================================================

namespace {

BasisEval basis_in_cell(const Space& s, int global_cell, Vec2 x, bool gradients) {
  const auto& cv = s.mesh->cells[static_cast<size_t>(global_cell)];
  const AffineMap map = affine_map(s.mesh->vertices[static_cast<size_t>(cv[0])],
                                   s.mesh->vertices[static_cast<size_t>(cv[1])],
                                   s.mesh->vertices[static_cast<size_t>(cv[2])]);
  BasisEval e = eval_basis(s.kind, map.pull_back(x));
  if (gradients) e = push_gradients(map, e);
  return e;
}

double sample_scalar(const Space& s, const std::vector<double>& c, int global_cell,
                     Vec2 x) {
  const int lc = s.cell_local[static_cast<size_t>(global_cell)];
  const BasisEval e = basis_in_cell(s, global_cell, x, false);
  const auto& nodes = s.cell_nodes[static_cast<size_t>(lc)];
  double v = 0.0;
  for (int b = 0; b < e.n; ++b)
    v += c[static_cast<size_t>(s.dof(nodes[static_cast<size_t>(b)], 0))] * e.value[b];
  return v;
}

Vec2 sample_vector(const Space& s, const std::vector<double>& c, int global_cell,
                   Vec2 x) {
  const int lc = s.cell_local[static_cast<size_t>(global_cell)];
  const BasisEval e = basis_in_cell(s, global_cell, x, false);
  const auto& nodes = s.cell_nodes[static_cast<size_t>(lc)];
  Vec2 v{};
  for (int b = 0; b < e.n; ++b) {
    const int n = nodes[static_cast<size_t>(b)];
    v.x += c[static_cast<size_t>(s.dof(n, 0))] * e.value[b];
    v.y += c[static_cast<size_t>(s.dof(n, 1))] * e.value[b];
  }
  return v;
}

Vec2 sample_scalar_gradient(const Space& s, const std::vector<double>& c,
                            int global_cell, Vec2 x) {
  const int lc = s.cell_local[static_cast<size_t>(global_cell)];
  const BasisEval e = basis_in_cell(s, global_cell, x, true);
  const auto& nodes = s.cell_nodes[static_cast<size_t>(lc)];
  Vec2 g{};
  for (int b = 0; b < e.n; ++b) {
    const double cb =
        c[static_cast<size_t>(s.dof(nodes[static_cast<size_t>(b)], 0))];
    g = g + cb * e.grad[b];
  }
  return g;
}

struct Problem {
  std::unique_ptr<Mesh> mesh;
  ProblemSpaces spaces;
  MaterialParams params;
  BcSpec bcs;
  FunctionalExtras extras;
  std::unique_ptr<TimeStepper> stepper;
};

std::unique_ptr<Problem> make_problem(std::unique_ptr<Mesh> mesh,
                                      const ScenarioConfig& cfg,
                                      const PermeabilityField& kappa,
                                      const std::vector<double>& lambda_cells) {
  auto p = std::make_unique<Problem>();
  p->mesh = std::move(mesh);
  try {
    p->spaces = cfg.porous_pressure
                    ? build_problem_spaces(*p->mesh, cfg.family, *cfg.porous_pressure)
                    : build_problem_spaces(*p->mesh, cfg.family);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("spaces: ") + e.what());
  }
  p->params = cfg.materials;
  p->params.kappa = kappa.values;
  p->params.lambda_cells = lambda_cells;
  try {
    p->params.validate();
  } catch (const FormError& e) {
    throw ConfigError(std::string("materials: ") + e.what());
  }
  CompiledBcs cb = compile_bcs(cfg.bcs, *p->mesh);
  p->bcs = std::move(cb.spec);
  p->extras = std::move(cb.extras);
  p->stepper = std::make_unique<TimeStepper>(p->spaces, p->params, p->bcs,
                                             p->extras, cfg.mode);
  return p;
}

int resolve_outlet_marker(const Mesh& mesh, const OutputSpec& out) {
  if (out.outlet_marker) return *out.outlet_marker;
  for (const auto& f : mesh.boundary)
    if (f.marker == marker::outflow) return marker::outflow;
  return marker::porous_pressure;
}

struct Diagnostics {
  double interface_pf_mean = 0.0;
  double outlet_pp_mean = 0.0;
  double inlet_flux = 0.0;
  double interface_flux = 0.0;
  double outlet_flux = 0.0;
  double max_interface_d = 0.0;
};

Diagnostics measure(const Problem& p, const SolutionState& s,
                    const ScenarioConfig& cfg, int outlet_marker) {
  const Mesh& mesh = *p.mesh;
  const bool axisym = cfg.mode == GeomMode::axisym;
  const QuadRule rule = quadrature(QuadDomain::edge, 4);
  Diagnostics d;

  double interface_length = 0.0, interface_pf = 0.0;
  for (const auto& f : mesh.interface) {
    const FacetFrame fr = interface_frame(mesh, f);
    const Vec2 a = mesh.vertices[static_cast<size_t>(f.v0)];
    const Vec2 b = mesh.vertices[static_cast<size_t>(f.v1)];
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const double sq = rule.points[q].x;
      const Vec2 x = (1.0 - sq) * a + sq * b;
      const double arc = rule.weights[q] * fr.length;
      const double w = arc * (axisym ? x.x : 1.0);
      interface_pf += arc * sample_scalar(p.spaces.q_f, s.p_f, f.fluid_cell, x);
      interface_length += arc;
      d.interface_flux += w * dot(sample_vector(p.spaces.v, s.u, f.fluid_cell, x), fr.n);
    }
  }
  if (interface_length > 0.0) d.interface_pf_mean = interface_pf / interface_length;

  double outlet_length = 0.0, outlet_pp = 0.0;
  for (const auto& f : mesh.boundary) {
    const bool on_porous =
        mesh.cell_tag[static_cast<size_t>(f.cell)] == subdomain::porous;
    const bool inlet = f.marker == cfg.output.inlet_marker && !on_porous;
    const bool outlet = f.marker == outlet_marker && on_porous;
    if (!inlet && !outlet) continue;
    const FacetFrame fr = boundary_frame(mesh, f);
    const Vec2 a = mesh.vertices[static_cast<size_t>(f.v0)];
    const Vec2 b = mesh.vertices[static_cast<size_t>(f.v1)];
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const double sq = rule.points[q].x;
      const Vec2 x = (1.0 - sq) * a + sq * b;
      const double arc = rule.weights[q] * fr.length;
      const double w = arc * (axisym ? x.x : 1.0);
      if (inlet) {
        d.inlet_flux -= w * dot(sample_vector(p.spaces.v, s.u, f.cell, x), fr.n);
      } else {
        outlet_pp += arc * sample_scalar(p.spaces.q_p, s.p_p, f.cell, x);
        outlet_length += arc;
        const double mob = p.params.kappa_on(f.cell) / p.params.mu_f;
        const Vec2 grad = sample_scalar_gradient(p.spaces.q_p, s.p_p, f.cell, x);
        const Vec2 darcy = -mob * (grad - p.params.rho_f * p.params.g);
        d.outlet_flux += w * dot(darcy, fr.n);
      }
    }
  }
  if (outlet_length > 0.0) d.outlet_pp_mean = outlet_pp / outlet_length;

  const Space& w = p.spaces.w;
  for (const auto& f : mesh.interface) {
    int nodes[3] = {w.vertex_node[static_cast<size_t>(f.v0)],
                    w.vertex_node[static_cast<size_t>(f.v1)], -1};
    if (w.kind == ElementKind::p2) {
      const auto it = w.edge_node.find(packed_edge(f.v0, f.v1));
      if (it != w.edge_node.end()) nodes[2] = it->second;
    }
    for (int n : nodes) {
      if (n < 0) continue;
      const Vec2 dv{s.d[static_cast<size_t>(w.dof(n, 0))],
                    s.d[static_cast<size_t>(w.dof(n, 1))]};
      d.max_interface_d = std::max(d.max_interface_d, norm(dv));
    }
  }
  return d;
}

void write_snapshot(const Problem& p, const SolutionState& s,
                    const PermeabilityField& kappa, const std::string& path) {
  VtkSnapshot snap;
  snap.point_vectors.emplace_back("velocity", vertex_vector(p.spaces.v, s.u));
  snap.point_vectors.emplace_back("displacement", vertex_vector(p.spaces.w, s.d));
  snap.point_scalars.emplace_back("fluid_pressure", vertex_scalar(p.spaces.q_f, s.p_f));
  snap.point_scalars.emplace_back("porous_pressure", vertex_scalar(p.spaces.q_p, s.p_p));
  snap.point_scalars.emplace_back("total_pressure", vertex_scalar(p.spaces.z, s.phi));
  snap.cell_scalars.emplace_back("kappa", kappa.values);
  std::vector<double> tags(p.mesh->cell_tag.begin(), p.mesh->cell_tag.end());
  snap.cell_scalars.emplace_back("subdomain", std::move(tags));
  write_vtk_file(*p.mesh, snap, path);
}

std::vector<double> read_lambda_cells(const std::string& path, const Mesh& mesh,
                                      double fluid_fill) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open lambda_cells_csv " + path);
  std::vector<double> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const size_t comment = line.find('#');
    if (comment != std::string::npos) line.erase(comment);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    double v = 0.0;
    if (!(ls >> v)) continue;
    if (!(v > 0.0))
      throw ConfigError(path + ":" + std::to_string(lineno) +
                        ": lambda values must be positive");
    rows.push_back(v);
  }
  size_t porous = 0;
  for (int tag : mesh.cell_tag)
    if (tag == subdomain::porous) ++porous;
  if (rows.size() != porous)
    throw ConfigError(path + ": expected one row per porous cell (" +
                      std::to_string(porous) + "), got " +
                      std::to_string(rows.size()));
  std::vector<double> out(static_cast<size_t>(mesh.num_cells()), fluid_fill);
  size_t next = 0;
  for (int c = 0; c < mesh.num_cells(); ++c)
    if (mesh.cell_tag[static_cast<size_t>(c)] == subdomain::porous)
      out[static_cast<size_t>(c)] = rows[next++];
  return out;
}

void require_finite(double v, const char* what) {
  if (!std::isfinite(v))
    throw ScenarioError(std::string("non-finite ") + what + " in scenario summary");
}

}  // namespace

// ============================================================================
// Scenario execution
// ============================================================================

ScenarioSummary run_scenario(const ScenarioConfig& config,
                             const std::string& out_dir) {
  validate_config(config);
  const int n_steps = step_count(config);

  Mesh reference;
  try {
    if (config.mesh.file.empty()) {
      TwoLayerOptions opt;
      opt.axis_at_x_lo = config.mesh.axis_at_x_lo;
      opt.outlet_x_hi = config.mesh.outlet_x_hi;
      reference = generate_two_layer_rect(config.mesh.x, config.mesh.y_fluid,
                                          config.mesh.y_porous, config.mesh.nx,
                                          config.mesh.ny, opt);
    } else {
      reference = read_mesh_file(config.mesh.file);
    }
  } catch (const MeshError& e) {
    throw ConfigError(std::string("mesh: ") + e.what());
  }

  // material fields live on the reference mesh and ride along under motion;
  // regenerating them per step would resample randomness and shift gradients
  PermeabilityField kappa;
  try {
    kappa = permeability_field(reference, config.kappa_spec);
  } catch (const FieldError& e) {
    throw ConfigError(std::string("kappa: ") + e.what());
  }
  std::vector<double> lambda_cells;
  if (!config.lambda_cells_csv.empty())
    lambda_cells = read_lambda_cells(config.lambda_cells_csv, reference,
                                     config.materials.lambda);

  auto problem =
      make_problem(std::make_unique<Mesh>(reference), config, kappa, lambda_cells);

  SolutionState state;
  try {
    const Expr p0 = Expr::parse(config.initial_p_p);
    state = construct_initial_state(p0.fn(), problem->spaces, problem->params,
                                    problem->bcs, problem->extras, config.mode);
  } catch (const ExprError& e) {
    throw ConfigError(std::string("initial p_p: ") + e.what());
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ScenarioError(std::string("initial state: ") + e.what());
  }

  // displacement trace spaces on the reference mesh drive the motion; node
  // numbering is topological, so coefficients transfer between the copies
  std::unique_ptr<Space> motion_w, motion_v;
  if (config.motion != MeshMotion::off) {
    const ElementKind kind = problem->spaces.w.kind;
    motion_w = std::make_unique<Space>(
        build_space(reference, subdomain::porous, kind, 2));
    motion_v = std::make_unique<Space>(
        build_space(reference, subdomain::fluid, kind, 2));
  }

  const int outlet_marker = resolve_outlet_marker(reference, config.output);
  const bool writing = !out_dir.empty();
  namespace fs = std::filesystem;
  if (writing) fs::create_directories(fs::path(out_dir));
  const auto snapshot_path = [&](int step) {
    char suffix[16];
    std::snprintf(suffix, sizeof suffix, "_%04d.vtk", step);
    return (fs::path(out_dir) / (config.output.prefix + suffix)).string();
  };
  const auto file_path = [&](const char* tail) {
    return (fs::path(out_dir) / (config.output.prefix + tail)).string();
  };

  ScenarioSummary summary;
  summary.name = config.name;
  summary.steps = n_steps;
  summary.t_final = config.t_final;
  summary.kappa_mean = kappa.mean;

  const std::vector<std::string> header = {
      "step",           "t",
      "energy",         "elastic",
      "storage",        "total_pressure",
      "d_viscous",      "d_darcy",
      "d_bjs",          "inlet_flux",
      "interface_flux", "outlet_flux",
      "interface_pf",   "outlet_pp",
      "pressure_drop",  "max_interface_d",
      "min_quality",    "newton_iters"};
  std::vector<std::vector<double>> rows;
  Diagnostics last;

  const auto record = [&](int step, int newton_iters) {
    try {
      last = measure(*problem, state, config, outlet_marker);
      const EnergyReport er =
          energy(state, problem->spaces, problem->params, config.mode);
      if (!std::isfinite(er.energy()) || !std::isfinite(er.dissipation()))
        throw ScenarioError("solution energy became non-finite");
      const double quality = min_quality_near_interface(*problem->mesh);
      summary.max_interface_displacement =
          std::max(summary.max_interface_displacement, last.max_interface_d);
      summary.min_quality =
          step == 0 ? quality : std::min(summary.min_quality, quality);
      rows.push_back({static_cast<double>(step), state.t, er.energy(), er.elastic,
                      er.storage, er.total_pressure, er.d_viscous, er.d_darcy,
                      er.d_bjs, last.inlet_flux, last.interface_flux,
                      last.outlet_flux, last.interface_pf_mean, last.outlet_pp_mean,
                      last.interface_pf_mean - last.outlet_pp_mean,
                      last.max_interface_d, quality,
                      static_cast<double>(newton_iters)});
    } catch (const ScenarioError&) {
      throw;
    } catch (const std::exception& e) {
      throw ScenarioError("step " + std::to_string(step) +
                          " diagnostics: " + e.what());
    }
  };

  record(0, 0);
  if (writing && config.output.fields) write_snapshot(*problem, state, kappa, snapshot_path(0));

  double newton_sum = 0.0;
  for (int n = 1; n <= n_steps; ++n) {
    int iterations = 0;
    try {
      if (config.transient) {
        TimeStepper::NewtonResult r =
            problem->stepper->step_navier_stokes(state, config.dt);
        iterations = r.iterations;
        newton_sum += r.iterations;
        state = std::move(r.state);
      } else {
        state = problem->stepper->step(state, config.dt);
      }
    } catch (const std::exception& e) {
      throw ScenarioError("step " + std::to_string(n) + ": " + e.what());
    }

    if (config.motion != MeshMotion::off) {
      try {
        const ExtensionField ext =
            config.motion == MeshMotion::harmonic
                ? harmonic_extension(state.d, *motion_w, *motion_v)
                : trace_only_extension(state.d, *motion_w, *motion_v);
        auto moved =
            std::make_unique<Mesh>(move_mesh(reference, vertex_displacement(ext)));
        // build the replacement before dropping the old problem so a failure
        // leaves the current one usable for error reporting
        auto next = make_problem(std::move(moved), config, kappa, lambda_cells);
        problem = std::move(next);
      } catch (const ConfigError& e) {
        throw ScenarioError("step " + std::to_string(n) +
                            " mesh motion: " + e.what());
      } catch (const MoveMeshError& e) {
        throw ScenarioError("step " + std::to_string(n) +
                            " mesh motion: " + e.what());
      }
    }

    record(n, iterations);
    summary.inlet_volume += config.dt * last.inlet_flux;
    summary.outlet_volume += config.dt * last.outlet_flux;
    if (writing && config.output.fields &&
        ((config.output.every > 0 && n % config.output.every == 0) || n == n_steps))
      write_snapshot(*problem, state, kappa, snapshot_path(n));
  }

  summary.final_energy = energy(state, problem->spaces, problem->params, config.mode);
  summary.interface_pressure_drop = last.interface_pf_mean - last.outlet_pp_mean;
  summary.inlet_flux = last.inlet_flux;
  summary.interface_flux = last.interface_flux;
  summary.outlet_flux = last.outlet_flux;
  summary.newton_avg = config.transient ? newton_sum / n_steps : 0.0;
  require_finite(summary.final_energy.energy(), "energy");
  require_finite(summary.interface_pressure_drop, "pressure drop");
  require_finite(summary.max_interface_displacement, "interface displacement");
  require_finite(summary.min_quality, "mesh quality");
  require_finite(summary.inlet_flux, "inlet flux");
  require_finite(summary.interface_flux, "interface flux");
  require_finite(summary.outlet_flux, "outlet flux");

  if (writing) {
    if (config.output.series) write_series_csv_file(header, rows, file_path("_series.csv"));
    if (config.output.summary) {
      std::ofstream os(file_path("_summary.json"));
      if (!os) throw ScenarioError("cannot write " + file_path("_summary.json"));
      write_summary_json(summary, os);
    }
    if (config.output.matrix_market)
      save_matrix_market_file(problem->stepper->system_matrix(config.dt),
                              file_path("_matrix.mtx"));
  }
  return summary;
}

void write_summary_json(const ScenarioSummary& s, std::ostream& out) {
  nlohmann::json j;
  j["name"] = s.name;
  j["steps"] = s.steps;
  j["t_final"] = s.t_final;
  j["kappa_mean"] = s.kappa_mean;
  j["final_energy"] = {{"elastic", s.final_energy.elastic},
                       {"storage", s.final_energy.storage},
                       {"total_pressure", s.final_energy.total_pressure},
                       {"stored", s.final_energy.energy()},
                       {"d_viscous", s.final_energy.d_viscous},
                       {"d_darcy", s.final_energy.d_darcy},
                       {"d_bjs", s.final_energy.d_bjs},
                       {"dissipation", s.final_energy.dissipation()}};
  j["interface_pressure_drop"] = s.interface_pressure_drop;
  j["max_interface_displacement"] = s.max_interface_displacement;
  j["min_quality"] = s.min_quality;
  j["flux"] = {{"inlet", s.inlet_flux},
               {"interface", s.interface_flux},
               {"outlet", s.outlet_flux}};
  j["volume"] = {{"inlet", s.inlet_volume}, {"outlet", s.outlet_volume}};
  j["newton_avg"] = s.newton_avg;
  out << j.dump(2) << '\n';
}

}  // namespace bstok
