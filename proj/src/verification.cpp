#include "biotstokes/verification.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "biotstokes/fem.hpp"
#include "biotstokes/format.hpp"

namespace bstok {

namespace {
constexpr double pi = 3.141592653589793238462643383279502884;
}

// ============================================================================
// Manufactured case
// ============================================================================

MaterialParams ManufacturedCase::params_for(const Mesh& mesh) const {
  MaterialParams p = params;
  p.set_uniform_kappa(mesh, kappa);
  return p;
}

MaterialParams benchmark_params() {
  MaterialParams p;
  p.lambda = 1000.0;
  p.mu_s = 1.0;
  p.mu_f = 0.1;
  p.alpha = 1.0;
  p.gamma = 1.0;
  p.c0 = 0.01;
  p.rho_f = 1.0;
  p.rho_s = 1.2;
  p.g = {0.0, 0.0};
  return p;
}

ManufacturedCase manufactured_case(const MaterialParams& base, double kappa,
                                   bool transient) {
  if (!(kappa > 0.0)) throw FormError("manufactured kappa must be positive");
  ManufacturedCase c;
  c.params = base;
  c.params.kappa.clear();
  c.kappa = kappa;
  c.transient = transient;

  const double mu_f = base.mu_f;
  const double mu_s = base.mu_s;
  const double alpha = base.alpha;
  const double rho_f = base.rho_f;
  const double c0 = base.c0;
  const double mob = kappa / mu_f;
  const double bjs = base.gamma * mu_f / std::sqrt(kappa);

  c.u = [](Vec2 x, double t) {
    const double s = std::sin(t);
    return Vec2{-s * std::cos(pi * x.x) * std::sin(pi * x.y),
                s * std::sin(pi * x.x) * std::cos(pi * x.y)};
  };
  c.grad_u = [](Vec2 x, double t) -> std::array<Vec2, 2> {
    const double s = std::sin(t);
    const double sx = std::sin(pi * x.x), cx = std::cos(pi * x.x);
    const double sy = std::sin(pi * x.y), cy = std::cos(pi * x.y);
    return {Vec2{pi * s * sx * sy, -pi * s * cx * cy},
            Vec2{pi * s * cx * cy, -pi * s * sx * sy}};
  };
  c.p_f = [](Vec2 x, double t) {
    return std::sin(t) * std::cos(pi * x.x) * std::cos(pi * x.y);
  };

  // d is the curl of cos(t) sin(pi x y), so div d vanishes identically
  c.d = [](Vec2 x, double t) {
    const double cp = std::cos(pi * x.x * x.y);
    return std::cos(t) * Vec2{pi * x.x * cp, -pi * x.y * cp};
  };
  c.dt_d = [](Vec2 x, double t) {
    const double cp = std::cos(pi * x.x * x.y);
    return -std::sin(t) * Vec2{pi * x.x * cp, -pi * x.y * cp};
  };
  c.grad_d = [](Vec2 x, double t) -> std::array<Vec2, 2> {
    const double ct = std::cos(t);
    const double cp = std::cos(pi * x.x * x.y), sp = std::sin(pi * x.x * x.y);
    const double diag = ct * pi * (cp - pi * x.x * x.y * sp);
    return {Vec2{diag, -ct * pi * pi * x.x * x.x * sp},
            Vec2{ct * pi * pi * x.y * x.y * sp, -diag}};
  };

  c.p_p = [](Vec2 x, double t) {
    return std::cos(t) * std::sin(pi * x.x) * std::sin(pi * x.y);
  };
  c.grad_p_p = [](Vec2 x, double t) {
    const double ct = std::cos(t);
    return Vec2{pi * ct * std::cos(pi * x.x) * std::sin(pi * x.y),
                pi * ct * std::sin(pi * x.x) * std::cos(pi * x.y)};
  };
  c.phi = [alpha, p_p = c.p_p](Vec2 x, double t) { return alpha * p_p(x, t); };

  c.sigma_f = [mu_f, grad_u = c.grad_u, p_f = c.p_f](
                  Vec2 x, double t) -> std::array<Vec2, 2> {
    const auto g = grad_u(x, t);
    const double q = p_f(x, t);
    const double e12 = 0.5 * (g[0].y + g[1].x);
    return {Vec2{2.0 * mu_f * g[0].x - q, 2.0 * mu_f * e12},
            Vec2{2.0 * mu_f * e12, 2.0 * mu_f * g[1].y - q}};
  };
  c.sigma_p = [mu_s, grad_d = c.grad_d, phi = c.phi](
                  Vec2 x, double t) -> std::array<Vec2, 2> {
    const auto g = grad_d(x, t);
    const double f = phi(x, t);
    const double e12 = 0.5 * (g[0].y + g[1].x);
    return {Vec2{2.0 * mu_s * g[0].x - f, 2.0 * mu_s * e12},
            Vec2{2.0 * mu_s * e12, 2.0 * mu_s * g[1].y - f}};
  };

  // -mu_f lap(u) + grad p_F, plus acceleration and convection when transient
  c.f_fluid = [mu_f, rho_f, transient, u = c.u](Vec2 x, double t) {
    const double s = std::sin(t);
    const double sx = std::sin(pi * x.x), cx = std::cos(pi * x.x);
    const double sy = std::sin(pi * x.y), cy = std::cos(pi * x.y);
    Vec2 f = 2.0 * mu_f * pi * pi * u(x, t) +
             Vec2{-pi * s * sx * cy, -pi * s * cx * sy};
    if (transient) {
      const double ct = std::cos(t);
      f = f + rho_f * ct * Vec2{-cx * sy, sx * cy};
      f = f + (-rho_f * pi * s * s) * Vec2{sx * cx, sy * cy};
    }
    return f;
  };

  // -mu_s lap(d) + alpha grad p_P (phi = alpha p_P because div d = 0)
  c.f_porous = [mu_s, alpha](Vec2 x, double t) {
    const double ct = std::cos(t);
    const double cp = std::cos(pi * x.x * x.y), sp = std::sin(pi * x.x * x.y);
    const double sx = std::sin(pi * x.x), cx = std::cos(pi * x.x);
    const double sy = std::sin(pi * x.y), cy = std::cos(pi * x.y);
    const double r2 = x.x * x.x + x.y * x.y;
    return Vec2{2.0 * mu_s * ct * pi * pi * (x.y * sp + 0.5 * pi * x.x * r2 * cp) +
                    alpha * pi * ct * cx * sy,
                -2.0 * mu_s * ct * pi * pi * (x.x * sp + 0.5 * pi * x.y * r2 * cp) +
                    alpha * pi * ct * sx * cy};
  };

  // c0 dt(p_P) - div(mob grad p_P); the alpha div(dt d) term is zero
  c.s_mass = [c0, mob](Vec2 x, double t) {
    const double sxsy = std::sin(pi * x.x) * std::sin(pi * x.y);
    return -c0 * std::sin(t) * sxsy + 2.0 * pi * pi * mob * std::cos(t) * sxsy;
  };

  // interface defects of the exact fields
  c.m1 = [mob, u = c.u, dt_d = c.dt_d, gp = c.grad_p_p](Vec2 x, double t,
                                                        Vec2 n, Vec2 tv) {
    (void)tv;
    return dot(u(x, t) - dt_d(x, t) + mob * gp(x, t), n);
  };
  c.m2 = [sf = c.sigma_f, sp = c.sigma_p](Vec2 x, double t, Vec2 n, Vec2 tv) {
    (void)tv;
    const auto a = sf(x, t);
    const auto b = sp(x, t);
    return Vec2{dot(a[0], n) - dot(b[0], n), dot(a[1], n) - dot(b[1], n)};
  };
  c.m3 = [sf = c.sigma_f, p_p = c.p_p](Vec2 x, double t, Vec2 n, Vec2 tv) {
    (void)tv;
    const auto a = sf(x, t);
    return dot(n, Vec2{dot(a[0], n), dot(a[1], n)}) + p_p(x, t);
  };
  c.m4 = [sf = c.sigma_f, bjs, u = c.u, dt_d = c.dt_d](Vec2 x, double t,
                                                       Vec2 n, Vec2 tv) {
    const auto a = sf(x, t);
    return dot(tv, Vec2{dot(a[0], n), dot(a[1], n)}) +
           bjs * dot(u(x, t) - dt_d(x, t), tv);
  };
  return c;
}

BcSpec manufactured_bcs(const ManufacturedCase& c) {
  BcSpec b;
  b.velocity.push_back({marker::fluid_velocity, {true, true}, c.u});
  b.displacement.push_back({marker::porous_clamp, {true, true}, c.d});
  b.porous_pressure.push_back({marker::porous_pressure, c.p_p});
  return b;
}

FunctionalExtras manufactured_extras(const ManufacturedCase& c) {
  const double mob = c.kappa / c.params.mu_f;
  FunctionalExtras e;
  e.fluid_source = c.f_fluid;
  e.porous_source = c.f_porous;
  e.mass_source = c.s_mass;
  e.m1 = c.m1;
  e.m2 = c.m2;
  e.m3 = c.m3;
  e.m4 = c.m4;
  e.fluid_traction[marker::fluid_stress] = [sf = c.sigma_f](Vec2 x, double t,
                                                            Vec2 n) {
    const auto a = sf(x, t);
    return Vec2{dot(a[0], n), dot(a[1], n)};
  };
  e.porous_traction[marker::porous_pressure] = [sp = c.sigma_p](Vec2 x,
                                                                double t,
                                                                Vec2 n) {
    const auto a = sp(x, t);
    return Vec2{dot(a[0], n), dot(a[1], n)};
  };
  e.porous_flux[marker::porous_clamp] = [mob, gp = c.grad_p_p](Vec2 x,
                                                               double t,
                                                               Vec2 n) {
    return mob * dot(gp(x, t), n);
  };
  return e;
}

// ============================================================================
// Error norms
// ============================================================================

namespace {

struct FieldAt {
  Vec2 value{0.0, 0.0};
  std::array<Vec2, 2> grad{};
};

FieldAt eval_at(const Space& space, const std::vector<double>& coeffs,
                int local_cell, const BasisEval& basis) {
  FieldAt out;
  const auto& nodes = space.cell_nodes[static_cast<size_t>(local_cell)];
  for (int a = 0; a < basis.n; ++a) {
    for (int comp = 0; comp < space.components; ++comp) {
      const double v = coeffs[static_cast<size_t>(space.dof(nodes[a], comp))];
      if (comp == 0) {
        out.value.x += v * basis.value[a];
        out.grad[0] = out.grad[0] + v * basis.grad[a];
      } else {
        out.value.y += v * basis.value[a];
        out.grad[1] = out.grad[1] + v * basis.grad[a];
      }
    }
  }
  return out;
}

// squared H1 (or L2 when no gradient closure is given) distance to exact
double error_sq(const Space& space, const std::vector<double>& coeffs,
                double t, const VectorFn* exact_v, const TensorFn* exact_g,
                const ScalarFn* exact_s, const VectorFn* exact_gs) {
  const Mesh& mesh = *space.mesh;
  const QuadRule rule = quadrature(QuadDomain::triangle, 6);
  double acc = 0.0;
  for (size_t lc = 0; lc < space.cells.size(); ++lc) {
    const auto& cv = mesh.cells[static_cast<size_t>(space.cells[lc])];
    const AffineMap map = affine_map(mesh.vertices[cv[0]], mesh.vertices[cv[1]],
                                     mesh.vertices[cv[2]]);
    for (size_t q = 0; q < rule.points.size(); ++q) {
      const BasisEval basis = push_gradients(map, eval_basis(space.kind, rule.points[q]));
      const Vec2 x = map.apply(rule.points[q]);
      const double w = rule.weights[q] * std::abs(map.det);
      const FieldAt f = eval_at(space, coeffs, static_cast<int>(lc), basis);
      if (exact_v) {
        const Vec2 dv = f.value - (*exact_v)(x, t);
        acc += dot(dv, dv) * w;
        if (exact_g) {
          const auto ge = (*exact_g)(x, t);
          const Vec2 d0 = f.grad[0] - ge[0];
          const Vec2 d1 = f.grad[1] - ge[1];
          acc += (dot(d0, d0) + dot(d1, d1)) * w;
        }
      } else {
        const double ds = f.value.x - (*exact_s)(x, t);
        acc += ds * ds * w;
        if (exact_gs) {
          const Vec2 dg = f.grad[0] - (*exact_gs)(x, t);
          acc += dot(dg, dg) * w;
        }
      }
    }
  }
  return acc;
}

}  // namespace

FieldErrors error_norms(const SolutionState& state, const ManufacturedCase& c,
                        const ProblemSpaces& spaces, double t) {
  FieldErrors e;
  e.e_u = std::sqrt(
      error_sq(spaces.v, state.u, t, &c.u, &c.grad_u, nullptr, nullptr));
  e.e_p_f = std::sqrt(
      error_sq(spaces.q_f, state.p_f, t, nullptr, nullptr, &c.p_f, nullptr));
  e.e_d = std::sqrt(
      error_sq(spaces.w, state.d, t, &c.d, &c.grad_d, nullptr, nullptr));
  e.e_p_p = std::sqrt(error_sq(spaces.q_p, state.p_p, t, nullptr, nullptr,
                               &c.p_p, &c.grad_p_p));
  e.e_phi = std::sqrt(
      error_sq(spaces.z, state.phi, t, nullptr, nullptr, &c.phi, nullptr));
  return e;
}

// ============================================================================
// Rate tables
// ============================================================================

void compute_rates(RateTable& table) {
  for (size_t i = 0; i < table.rows.size(); ++i) {
    for (int k = 0; k < 5; ++k) {
      if (i == 0) {
        table.rows[i].rate[k] = std::nan("");
      } else {
        table.rows[i].rate[k] =
            std::log2(table.rows[i - 1].e[static_cast<size_t>(k)] /
                      table.rows[i].e[static_cast<size_t>(k)]);
      }
    }
  }
}

std::string RateTable::csv() const {
  std::ostringstream out;
  out << "dof,h,e_u,rate_u,e_pF,rate_pF,e_d,rate_d,e_pP,rate_pP,e_phi,"
         "rate_phi\n";
  for (const RateRow& r : rows) {
    out << r.dof << ',' << fmt_double(r.h);
    for (int k = 0; k < 5; ++k) {
      out << ',' << fmt_double(r.e[static_cast<size_t>(k)]) << ',';
      if (!std::isnan(r.rate[static_cast<size_t>(k)]))
        out << fmt_double(r.rate[static_cast<size_t>(k)]);
    }
    out << '\n';
  }
  return out.str();
}

// ============================================================================
// Studies
// ============================================================================

Mesh benchmark_mesh(int level) {
  if (level < 1) throw SystemError("refinement level must be at least 1");
  const int nx = 2 << (level - 1);
  return generate_two_layer_rect({-1.0, 1.0}, {0.0, 2.0}, {-2.0, 0.0}, nx, nx,
                                 {});
}

namespace {

ProblemSpaces spaces_for(const Mesh& mesh, const StudyOptions& opt) {
  if (opt.porous_pressure_kind)
    return build_problem_spaces(mesh, opt.family, *opt.porous_pressure_kind);
  return build_problem_spaces(mesh, opt.family);
}

struct RunResult {
  FieldErrors errors;
  int dof = 0;
  double h = 0.0;
  double newton_avg = 0.0;
};

// runs the manufactured problem on one mesh for a fixed number of steps and
// measures the final-time errors
RunResult run_level(const Mesh& mesh, const ManufacturedCase& c,
                    const StudyOptions& opt) {
  const ProblemSpaces spaces = spaces_for(mesh, opt);
  const MaterialParams params = c.params_for(mesh);
  const BcSpec bcs = manufactured_bcs(c);
  const FunctionalExtras extras = manufactured_extras(c);

  SolutionState state =
      construct_initial_state(c.p_p, spaces, params, bcs, extras);
  TimeStepper stepper(spaces, params, bcs, extras);
  long newton_total = 0;
  for (int n = 0; n < opt.steps; ++n) {
    if (opt.transient) {
      auto r = stepper.step_navier_stokes(state, opt.dt);
      newton_total += r.iterations;
      state = std::move(r.state);
    } else {
      state = stepper.step(state, opt.dt);
    }
  }

  RunResult out;
  out.errors = error_norms(state, c, spaces, state.t);
  out.dof = spaces.layout.total();
  out.h = mesh.max_diameter();
  out.newton_avg =
      opt.steps > 0 ? static_cast<double>(newton_total) / opt.steps : 0.0;
  return out;
}

}  // namespace

RateTable spatial_study(const StudyOptions& opt) {
  MaterialParams base = benchmark_params();
  base.lambda = opt.lambda;
  const ManufacturedCase c =
      manufactured_case(base, benchmark_kappa, opt.transient);

  RateTable table;
  for (int level = 1; level <= opt.levels; ++level) {
    const Mesh mesh = benchmark_mesh(level);
    const RunResult r = run_level(mesh, c, opt);
    RateRow row;
    row.dof = r.dof;
    row.h = r.h;
    row.e = r.errors.as_array();
    table.rows.push_back(row);
    if (opt.transient) table.newton_avg.push_back(r.newton_avg);
    compute_rates(table);
    if (opt.on_row) opt.on_row(table.rows.back());
  }
  return table;
}

RateTable temporal_study(const std::vector<double>& dts, int level,
                         double t_final, const StudyOptions& opt) {
  if (dts.empty()) throw SystemError("temporal study needs step sizes");
  MaterialParams base = benchmark_params();
  base.lambda = opt.lambda;
  const ManufacturedCase c =
      manufactured_case(base, benchmark_kappa, opt.transient);

  const Mesh mesh = benchmark_mesh(level);
  const ProblemSpaces spaces = spaces_for(mesh, opt);
  const MaterialParams params = c.params_for(mesh);
  const BcSpec bcs = manufactured_bcs(c);
  const FunctionalExtras extras = manufactured_extras(c);

  RateTable table;
  for (double dt : dts) {
    const int steps = static_cast<int>(std::lround(t_final / dt));
    if (steps < 1 || std::abs(steps * dt - t_final) > 1e-9 * t_final)
      throw SystemError("step size " + fmt_double(dt) +
                        " does not divide the final time");

    SolutionState state =
        construct_initial_state(c.p_p, spaces, params, bcs, extras);
    TimeStepper stepper(spaces, params, bcs, extras);
    std::array<double, 5> acc{};
    double newton_total = 0.0;
    for (int n = 0; n < steps; ++n) {
      if (opt.transient) {
        auto r = stepper.step_navier_stokes(state, dt);
        newton_total += r.iterations;
        state = std::move(r.state);
      } else {
        state = stepper.step(state, dt);
      }
      const FieldErrors e = error_norms(state, c, spaces, state.t);
      const auto ea = e.as_array();
      for (int k = 0; k < 5; ++k)
        acc[static_cast<size_t>(k)] +=
            dt * ea[static_cast<size_t>(k)] * ea[static_cast<size_t>(k)];
    }

    RateRow row;
    row.dof = spaces.layout.total();
    row.h = dt;
    for (int k = 0; k < 5; ++k)
      row.e[static_cast<size_t>(k)] = std::sqrt(acc[static_cast<size_t>(k)]);
    table.rows.push_back(row);
    if (opt.transient) table.newton_avg.push_back(newton_total / steps);
    compute_rates(table);
    if (opt.on_row) opt.on_row(table.rows.back());
  }
  return table;
}

std::vector<LambdaRow> lambda_robustness(const std::vector<double>& lambdas,
                                         int level, const StudyOptions& opt) {
  std::vector<LambdaRow> out;
  const Mesh mesh = benchmark_mesh(level);
  for (double lambda : lambdas) {
    MaterialParams base = benchmark_params();
    base.lambda = lambda;
    const ManufacturedCase c =
        manufactured_case(base, benchmark_kappa, opt.transient);
    LambdaRow row;
    row.lambda = lambda;
    row.errors = run_level(mesh, c, opt).errors;
    out.push_back(row);
  }
  return out;
}

}  // namespace bstok
