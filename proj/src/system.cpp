#include "biotstokes/system.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "biotstokes/fem.hpp"
#include "biotstokes/format.hpp"

namespace bstok {

// ============================================================================
// Discrete spaces
// ============================================================================

const Space& ProblemSpaces::space(Field f) const {
  switch (f) {
    case Field::u:
      return v;
    case Field::p_f:
      return q_f;
    case Field::d:
      return w;
    case Field::p_p:
      return q_p;
    case Field::phi:
      return z;
  }
  throw SystemError("unknown field");
}

ProblemSpaces build_problem_spaces(const Mesh& mesh, ElementFamily family) {
  return build_problem_spaces(mesh, family,
                              family == ElementFamily::taylor_hood
                                  ? ElementKind::p2
                                  : ElementKind::p1);
}

ProblemSpaces build_problem_spaces(const Mesh& mesh, ElementFamily family,
                                   ElementKind porous_pressure_kind) {
  if (porous_pressure_kind == ElementKind::p1_bubble)
    throw SystemError("porous pressure space must be p1 or p2");
  const ElementKind vec_kind = family == ElementFamily::taylor_hood
                                   ? ElementKind::p2
                                   : ElementKind::p1_bubble;
  ProblemSpaces s;
  s.mesh = &mesh;
  s.family = family;
  s.v = build_space(mesh, subdomain::fluid, vec_kind, 2);
  s.q_f = build_space(mesh, subdomain::fluid, ElementKind::p1, 1);
  s.w = build_space(mesh, subdomain::porous, vec_kind, 2);
  s.q_p = build_space(mesh, subdomain::porous, porous_pressure_kind, 1);
  s.z = build_space(mesh, subdomain::porous, ElementKind::p1, 1);
  s.layout = BlockLayout::from_sizes({s.v.n_dofs(), s.q_f.n_dofs(),
                                      s.w.n_dofs(), s.q_p.n_dofs(),
                                      s.z.n_dofs()});
  return s;
}

// ============================================================================
// Local helpers
// ============================================================================

namespace {

double norm2(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

double norm_inf(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s = std::max(s, std::abs(v));
  return s;
}

bool any_nan(const std::vector<double>& x) {
  for (double v : x)
    if (!std::isfinite(v)) return true;
  return false;
}

std::vector<double> slice(const std::vector<double>& x, const BlockLayout& l,
                          Field f) {
  const int off = l.offset(f);
  const int n = l.size(f);
  return std::vector<double>(x.begin() + off, x.begin() + off + n);
}

void add_into(std::vector<double>& x, int offset,
              const std::vector<double>& part, double scale = 1.0) {
  for (size_t i = 0; i < part.size(); ++i)
    x[static_cast<size_t>(offset) + i] += scale * part[i];
}

void scatter(std::vector<Triplet>& out, const SparseMatrix& m, int row_off,
             int col_off, double scale) {
  for (int r = 0; r < m.rows; ++r)
    for (int k = m.row_offsets[r]; k < m.row_offsets[r + 1]; ++k)
      out.push_back(
          {r + row_off, m.col_indices[k] + col_off, scale * m.values[k]});
}

void scatter_transpose(std::vector<Triplet>& out, const SparseMatrix& m,
                       int row_off, int col_off, double scale) {
  for (int r = 0; r < m.rows; ++r)
    for (int k = m.row_offsets[r]; k < m.row_offsets[r + 1]; ++k)
      out.push_back(
          {m.col_indices[k] + row_off, r + col_off, scale * m.values[k]});
}

// embeds a square field block into the monolithic index space
SparseMatrix embed(const SparseMatrix& m, int offset, int total) {
  std::vector<Triplet> t;
  t.reserve(static_cast<size_t>(m.nnz()));
  scatter(t, m, offset, offset, 1.0);
  return SparseMatrix::from_triplets(total, total, std::move(t));
}

void check_sizes(const SolutionState& state, const ProblemSpaces& s) {
  const bool ok = static_cast<int>(state.u.size()) == s.v.n_dofs() &&
                  static_cast<int>(state.p_f.size()) == s.q_f.n_dofs() &&
                  static_cast<int>(state.d.size()) == s.w.n_dofs() &&
                  static_cast<int>(state.p_p.size()) == s.q_p.n_dofs() &&
                  static_cast<int>(state.phi.size()) == s.z.n_dofs();
  if (!ok)
    throw SystemError("solution state does not match the discrete spaces");
}

}  // namespace

// ============================================================================
// Time stepper implementation
// ============================================================================

struct TimeStepper::Impl {
  const ProblemSpaces* spaces = nullptr;
  MaterialParams params;
  BcSpec bcs;
  FunctionalExtras extras;
  GeomMode mode = GeomMode::cartesian;

  // canonical operator matrices; rows are tests, columns are trials, all
  // with the signs of the form catalog (transposes and 1/dt factors are
  // applied when the block matrix is composed)
  bool matrices_ready = false;
  SparseMatrix a2f;  // includes the Nitsche matrices of all weak inlets
  SparseMatrix b1f, b2sig, b3sig, b4sig;
  SparseMatrix a1p, a2sig, a3p, a4p, a5p, b1p, b2p;
  bool a1f_ready = false;
  SparseMatrix a1f;  // assembled on demand for transient steps

  // factorized quasi-static operator, reused while dt is unchanged
  double cached_dt = 0.0;
  std::unique_ptr<Factorization> factorization;
  DirichletOp dirichlet;

  // transient base matrix (quasi-static blocks plus rho_f/dt fluid mass),
  // cached separately under the same dt key
  double cached_ns_dt = 0.0;
  std::unique_ptr<SparseMatrix> ns_base;

  void ensure_matrices() {
    if (matrices_ready) return;
    const ProblemSpaces& s = *spaces;
    if (s.mesh->interface.empty())
      throw SystemError("the coupled stepper needs a fluid-porous interface");
    a2f = assemble(FormId::a2f, s.v, s.v, params, mode);
    for (const NitscheVelocityBc& bc : bcs.nitsche_velocity) {
      auto [m, vec] = assemble_nitsche_velocity(s.v, bc.marker, bc.value,
                                                bc.penalty, params, 0.0, mode);
      a2f = add(a2f, m);
    }
    b1f = assemble(FormId::b1f, s.v, s.q_f, params, mode);
    b2sig = assemble(FormId::b2sig, s.v, s.q_p, params, mode);
    b3sig = assemble(FormId::b3sig, s.v, s.w, params, mode);
    b4sig = assemble(FormId::b4sig, s.w, s.q_p, params, mode);
    a1p = assemble(FormId::a1p, s.w, s.w, params, mode);
    a2sig = assemble(FormId::a2sig, s.w, s.w, params, mode);
    a3p = assemble(FormId::a3p, s.q_p, s.q_p, params, mode);
    a4p = assemble(FormId::a4p, s.q_p, s.q_p, params, mode);
    a5p = assemble(FormId::a5p, s.z, s.z, params, mode);
    b1p = assemble(FormId::b1p, s.w, s.z, params, mode);
    b2p = assemble(FormId::b2p, s.q_p, s.z, params, mode);
    matrices_ready = true;
  }

  void ensure_mass() {
    if (a1f_ready) return;
    a1f = assemble(FormId::a1f, spaces->v, spaces->v, params, mode);
    a1f_ready = true;
  }

  // monolithic matrix of the backward Euler scheme for one step size
  SparseMatrix compose(double dt, bool with_fluid_mass) {
    ensure_matrices();
    const BlockLayout& l = spaces->layout;
    const int ou = l.offset(Field::u), of = l.offset(Field::p_f);
    const int od = l.offset(Field::d), op = l.offset(Field::p_p);
    const int oz = l.offset(Field::phi);
    const double idt = 1.0 / dt;

    std::vector<Triplet> t;
    // fluid momentum row
    scatter(t, a2f, ou, ou, 1.0);
    if (with_fluid_mass) {
      ensure_mass();
      scatter(t, a1f, ou, ou, idt);
    }
    scatter_transpose(t, b1f, ou, of, 1.0);
    scatter_transpose(t, b3sig, ou, od, idt);
    scatter_transpose(t, b2sig, ou, op, 1.0);
    // fluid mass row
    scatter(t, b1f, of, ou, -1.0);
    // elasticity row
    scatter(t, b3sig, od, ou, 1.0);
    scatter(t, a1p, od, od, 1.0);
    scatter(t, a2sig, od, od, idt);
    scatter_transpose(t, b4sig, od, op, 1.0);
    scatter_transpose(t, b1p, od, oz, 1.0);
    // porous mass row
    scatter(t, b2sig, op, ou, -1.0);
    scatter(t, b4sig, op, od, -idt);
    scatter(t, a3p, op, op, idt);
    scatter(t, a4p, op, op, 1.0);
    scatter_transpose(t, b2p, op, oz, -idt);
    // total pressure row
    scatter(t, b1p, oz, od, -1.0);
    scatter(t, b2p, oz, op, -1.0);
    scatter(t, a5p, oz, oz, 1.0);
    return SparseMatrix::from_triplets(l.total(), l.total(), std::move(t));
  }

  // essential values over the monolithic index space, sampled at time t
  DofSet collect_dirichlet(double t) const {
    const ProblemSpaces& s = *spaces;
    DofSet all;
    for (const VectorDirichletBc& bc : bcs.velocity)
      all = merge(all, offset_dofs(dirichlet_dofs(s.v, bc.marker, bc.mask,
                                                  bc.value, t),
                                   s.layout.offset(Field::u)));
    for (const VectorDirichletBc& bc : bcs.displacement)
      all = merge(all, offset_dofs(dirichlet_dofs(s.w, bc.marker, bc.mask,
                                                  bc.value, t),
                                   s.layout.offset(Field::d)));
    for (const ScalarDirichletBc& bc : bcs.porous_pressure)
      all = merge(all, offset_dofs(dirichlet_dofs(s.q_p, bc.marker, bc.value, t),
                                   s.layout.offset(Field::p_p)));
    return all;
  }

  void ensure_operator(double dt) {
    if (factorization && cached_dt == dt) return;
    SparseMatrix k = compose(dt, false);
    const DofSet constraints = collect_dirichlet(0.0);
    dirichlet = eliminate_dirichlet(k, constraints.dofs);
    factorization = std::make_unique<Factorization>(std::move(k));
    cached_dt = dt;
  }

  const SparseMatrix& ensure_ns_base(double dt) {
    if (ns_base && cached_ns_dt == dt) return *ns_base;
    ns_base = std::make_unique<SparseMatrix>(compose(dt, true));
    cached_ns_dt = dt;
    return *ns_base;
  }

  // right-hand side of the backward Euler step ending at t_n: loads at t_n
  // plus the time-difference terms carried over from the given state
  std::vector<double> assemble_rhs(const SolutionState& state, double t_n,
                                   double dt, bool with_fluid_mass) {
    ensure_matrices();
    const ProblemSpaces& s = *spaces;
    const BlockLayout& l = s.layout;
    const double idt = 1.0 / dt;

    std::vector<double> rhs(static_cast<size_t>(l.total()), 0.0);

    std::vector<double> fv =
        assemble_functional(FunctionalId::ff, s.v, params, t_n, extras, mode);
    for (const NitscheVelocityBc& bc : bcs.nitsche_velocity) {
      auto [m, vec] = assemble_nitsche_velocity(s.v, bc.marker, bc.value,
                                                bc.penalty, params, t_n, mode);
      for (size_t i = 0; i < vec.size(); ++i) fv[i] += vec[i];
    }
    add_into(rhs, l.offset(Field::u), fv);
    add_into(rhs, l.offset(Field::u), b3sig.apply_transpose(state.d), idt);
    if (with_fluid_mass) {
      ensure_mass();
      add_into(rhs, l.offset(Field::u), a1f.apply(state.u), idt);
    }

    add_into(rhs, l.offset(Field::d),
             assemble_functional(FunctionalId::fp, s.w, params, t_n, extras,
                                 mode));
    add_into(rhs, l.offset(Field::d), a2sig.apply(state.d), idt);

    add_into(rhs, l.offset(Field::p_p),
             assemble_functional(FunctionalId::g, s.q_p, params, t_n, extras,
                                 mode));
    add_into(rhs, l.offset(Field::p_p), b4sig.apply(state.d), -idt);
    add_into(rhs, l.offset(Field::p_p), a3p.apply(state.p_p), idt);
    add_into(rhs, l.offset(Field::p_p), b2p.apply_transpose(state.phi), -idt);

    // fluid mass and total pressure rows stay homogeneous
    return rhs;
  }

  // splits the monolithic solution, validates the discrete identities, and
  // shifts the state forward one level
  SolutionState finalize(const SolutionState& state,
                         const std::vector<double>& x, double t_n, double dt) {
    const BlockLayout& l = spaces->layout;
    if (any_nan(x))
      throw SolverFailure("solve produced a non-finite solution");

    SolutionState out;
    out.t = t_n;
    out.dt_last = dt;
    out.u = slice(x, l, Field::u);
    out.p_f = slice(x, l, Field::p_f);
    out.d = slice(x, l, Field::d);
    out.p_p = slice(x, l, Field::p_p);
    out.phi = slice(x, l, Field::phi);
    out.d_prev = state.d;
    out.p_p_prev = state.p_p;
    out.phi_prev = state.phi;

    // the fluid mass row has no forcing, so the discrete divergence of the
    // new velocity must vanish
    const double div_res = norm_inf(b1f.apply(out.u));
    if (div_res > 1e-9)
      throw SystemError("discrete divergence residual " + fmt_double(div_res) +
                        " exceeds 1e-9");
    // total pressure row: A5P phi = B1P d + B2P p_P
    std::vector<double> phi_res = a5p.apply(out.phi);
    {
      const std::vector<double> t1 = b1p.apply(out.d);
      const std::vector<double> t2 = b2p.apply(out.p_p);
      for (size_t i = 0; i < phi_res.size(); ++i) phi_res[i] -= t1[i] + t2[i];
    }
    const double tp_res = norm_inf(phi_res);
    if (tp_res > 1e-9)
      throw SystemError("total pressure identity residual " +
                        fmt_double(tp_res) + " exceeds 1e-9");
    return out;
  }
};

TimeStepper::TimeStepper(const ProblemSpaces& spaces, MaterialParams params,
                         BcSpec bcs, FunctionalExtras extras, GeomMode mode)
    : impl_(std::make_unique<Impl>()) {
  params.validate();
  impl_->spaces = &spaces;
  impl_->params = std::move(params);
  impl_->bcs = std::move(bcs);
  impl_->extras = std::move(extras);
  impl_->mode = mode;
}

TimeStepper::~TimeStepper() = default;
TimeStepper::TimeStepper(TimeStepper&&) noexcept = default;
TimeStepper& TimeStepper::operator=(TimeStepper&&) noexcept = default;

const ProblemSpaces& TimeStepper::spaces() const { return *impl_->spaces; }

const SparseMatrix& TimeStepper::system_matrix(double dt) {
  if (!(dt > 0.0)) throw SystemError("step size must be positive");
  impl_->ensure_operator(dt);
  return impl_->factorization->matrix();
}

SolutionState TimeStepper::step(const SolutionState& state, double dt) {
  if (!(dt > 0.0)) throw SystemError("step size must be positive");
  check_sizes(state, *impl_->spaces);
  impl_->ensure_operator(dt);

  const double t_n = state.t + dt;
  std::vector<double> rhs = impl_->assemble_rhs(state, t_n, dt, false);
  const DofSet constraints = impl_->collect_dirichlet(t_n);
  if (constraints.dofs != impl_->dirichlet.dofs)
    throw SystemError("constrained DOF set changed between steps");
  if (!constraints.dofs.empty())
    impl_->dirichlet.correct_rhs(rhs, constraints.values);

  const std::vector<double> x = impl_->factorization->solve(rhs);
  return impl_->finalize(state, x, t_n, dt);
}

TimeStepper::NewtonResult TimeStepper::step_navier_stokes(
    const SolutionState& state, double dt, double tol, int max_iterations) {
  if (!(dt > 0.0)) throw SystemError("step size must be positive");
  if (max_iterations < 1) throw SystemError("need at least one iteration");
  check_sizes(state, *impl_->spaces);

  const ProblemSpaces& s = *impl_->spaces;
  const BlockLayout& l = s.layout;
  const int total = l.total();
  const int ou = l.offset(Field::u);
  const SparseMatrix& base = impl_->ensure_ns_base(dt);

  const double t_n = state.t + dt;
  std::vector<double> rhs = impl_->assemble_rhs(state, t_n, dt, true);
  const DofSet constraints = impl_->collect_dirichlet(t_n);

  // start from the previous level with fresh essential values, so Newton
  // corrections are homogeneous on the constrained DOFs
  std::vector<double> x(static_cast<size_t>(total), 0.0);
  add_into(x, l.offset(Field::u), state.u);
  add_into(x, l.offset(Field::p_f), state.p_f);
  add_into(x, l.offset(Field::d), state.d);
  add_into(x, l.offset(Field::p_p), state.p_p);
  add_into(x, l.offset(Field::phi), state.phi);
  for (size_t i = 0; i < constraints.dofs.size(); ++i)
    x[static_cast<size_t>(constraints.dofs[i])] = constraints.values[i];

  const auto eval = [&](const std::vector<double>& xv) {
    ConvectivePair cp = assemble_convective(slice(xv, l, Field::u), s.v,
                                            impl_->params.rho_f, impl_->mode);
    SparseMatrix k = add(base, embed(cp.c, ou, total));
    std::vector<double> r = k.apply(xv);
    for (int i = 0; i < total; ++i) r[static_cast<size_t>(i)] -= rhs[i];
    for (int dof : constraints.dofs) r[static_cast<size_t>(dof)] = 0.0;
    return std::make_tuple(std::move(cp), std::move(k), std::move(r));
  };

  NewtonResult result;
  auto [cp, k, r] = eval(x);
  for (int it = 0; it < max_iterations; ++it) {
    SparseMatrix jac = add(k, embed(cp.jacobian_extra, ou, total));
    eliminate_dirichlet(jac, constraints.dofs);
    std::vector<double> neg_r(r.size());
    for (size_t i = 0; i < r.size(); ++i) neg_r[i] = -r[i];
    const std::vector<double> delta = solve_direct(jac, neg_r);
    for (size_t i = 0; i < x.size(); ++i) x[i] += delta[i];
    ++result.iterations;

    std::tie(cp, k, r) = eval(x);
    const double rnorm = norm2(r);
    result.residuals.push_back(rnorm);
    if (!std::isfinite(rnorm))
      throw SolverFailure("Newton iteration produced a non-finite residual");
    if (rnorm <= tol) {
      result.state = impl_->finalize(state, x, t_n, dt);
      return result;
    }
  }
  throw SolverFailure("Newton did not converge in " +
                      std::to_string(max_iterations) + " iterations, residual " +
                      fmt_double(result.residuals.back()));
}

// ============================================================================
// Initial data
// ============================================================================

SolutionState construct_initial_state(const ScalarFn& p_p0,
                                      const ProblemSpaces& spaces,
                                      const MaterialParams& params,
                                      const BcSpec& bcs,
                                      const FunctionalExtras& extras,
                                      GeomMode mode) {
  params.validate();
  if (spaces.mesh->interface.empty())
    throw SystemError("the coupled problem needs a fluid-porous interface");

  const std::vector<double> p0 = l2_project(p_p0, 0.0, spaces.q_p);

  // Stokes solve for the initial velocity, with the interface pressure
  // terms taken from the projected porous pressure
  const SparseMatrix a2f = [&] {
    SparseMatrix m = assemble(FormId::a2f, spaces.v, spaces.v, params, mode);
    for (const NitscheVelocityBc& bc : bcs.nitsche_velocity) {
      auto [nm, vec] = assemble_nitsche_velocity(spaces.v, bc.marker, bc.value,
                                                 bc.penalty, params, 0.0, mode);
      m = add(m, nm);
    }
    return m;
  }();
  const SparseMatrix b1f =
      assemble(FormId::b1f, spaces.v, spaces.q_f, params, mode);
  const SparseMatrix b2sig =
      assemble(FormId::b2sig, spaces.v, spaces.q_p, params, mode);

  const int nv = spaces.v.n_dofs();
  const int nq = spaces.q_f.n_dofs();
  std::vector<double> u0, pf0;
  {
    std::vector<Triplet> t;
    scatter(t, a2f, 0, 0, 1.0);
    scatter_transpose(t, b1f, 0, nv, 1.0);
    scatter(t, b1f, nv, 0, -1.0);
    SparseMatrix k = SparseMatrix::from_triplets(nv + nq, nv + nq, std::move(t));

    std::vector<double> rhs(static_cast<size_t>(nv + nq), 0.0);
    add_into(rhs, 0,
             assemble_functional(FunctionalId::ff, spaces.v, params, 0.0,
                                 extras, mode));
    for (const NitscheVelocityBc& bc : bcs.nitsche_velocity) {
      auto [nm, vec] = assemble_nitsche_velocity(spaces.v, bc.marker, bc.value,
                                                 bc.penalty, params, 0.0, mode);
      add_into(rhs, 0, vec);
    }
    add_into(rhs, 0, b2sig.apply_transpose(p0), -1.0);

    DofSet constraints;
    for (const VectorDirichletBc& bc : bcs.velocity)
      constraints = merge(constraints, dirichlet_dofs(spaces.v, bc.marker,
                                                      bc.mask, bc.value, 0.0));
    const DirichletOp op = eliminate_dirichlet(k, constraints.dofs);
    if (!constraints.dofs.empty()) op.correct_rhs(rhs, constraints.values);
    const std::vector<double> x = solve_direct(k, rhs);
    if (any_nan(x))
      throw SolverFailure("initial Stokes solve produced non-finite values");
    u0.assign(x.begin(), x.begin() + nv);
    pf0.assign(x.begin() + nv, x.end());
  }

  // elasticity saddle for the initial displacement and total pressure,
  // driven by the projected pressure and the initial velocity trace
  const SparseMatrix a1p =
      assemble(FormId::a1p, spaces.w, spaces.w, params, mode);
  const SparseMatrix b1p =
      assemble(FormId::b1p, spaces.w, spaces.z, params, mode);
  const SparseMatrix a5p =
      assemble(FormId::a5p, spaces.z, spaces.z, params, mode);
  const SparseMatrix b4sig =
      assemble(FormId::b4sig, spaces.w, spaces.q_p, params, mode);
  const SparseMatrix b3sig =
      assemble(FormId::b3sig, spaces.v, spaces.w, params, mode);
  const SparseMatrix b2p =
      assemble(FormId::b2p, spaces.q_p, spaces.z, params, mode);

  const int nw = spaces.w.n_dofs();
  const int nz = spaces.z.n_dofs();
  std::vector<double> d0, phi0;
  {
    std::vector<Triplet> t;
    scatter(t, a1p, 0, 0, 1.0);
    scatter_transpose(t, b1p, 0, nw, 1.0);
    scatter(t, b1p, nw, 0, -1.0);
    scatter(t, a5p, nw, nw, 1.0);
    SparseMatrix k = SparseMatrix::from_triplets(nw + nz, nw + nz, std::move(t));

    std::vector<double> rhs(static_cast<size_t>(nw + nz), 0.0);
    add_into(rhs, 0,
             assemble_functional(FunctionalId::fp, spaces.w, params, 0.0,
                                 extras, mode));
    add_into(rhs, 0, b4sig.apply_transpose(p0), -1.0);
    add_into(rhs, 0, b3sig.apply(u0), -1.0);
    add_into(rhs, nw, b2p.apply(p0));

    DofSet constraints;
    for (const VectorDirichletBc& bc : bcs.displacement)
      constraints = merge(constraints, dirichlet_dofs(spaces.w, bc.marker,
                                                      bc.mask, bc.value, 0.0));
    const DirichletOp op = eliminate_dirichlet(k, constraints.dofs);
    if (!constraints.dofs.empty()) op.correct_rhs(rhs, constraints.values);
    const std::vector<double> x = solve_direct(k, rhs);
    if (any_nan(x))
      throw SolverFailure("initial elasticity solve produced non-finite values");
    d0.assign(x.begin(), x.begin() + nw);
    phi0.assign(x.begin() + nw, x.end());
  }

  SolutionState state;
  state.t = 0.0;
  state.dt_last = 0.0;
  state.u = u0;
  state.p_f = pf0;
  state.d = d0;
  state.p_p = p0;
  state.phi = phi0;
  state.d_prev = std::move(d0);
  state.p_p_prev = p0;
  state.phi_prev = std::move(phi0);
  return state;
}

// ============================================================================
// Energy diagnostics
// ============================================================================

namespace {

struct PointEval {
  Vec2 value{0.0, 0.0};       // vector fields; scalar fields use value.x
  std::array<Vec2, 2> grad{};  // grad[i] is the gradient of component i
};

PointEval eval_field(const Space& space, const std::vector<double>& coeffs,
                     int local_cell, const BasisEval& basis) {
  PointEval out;
  const auto& nodes = space.cell_nodes[static_cast<size_t>(local_cell)];
  for (int a = 0; a < basis.n; ++a) {
    for (int c = 0; c < space.components; ++c) {
      const double u = coeffs[static_cast<size_t>(space.dof(nodes[a], c))];
      if (c == 0) {
        out.value.x += u * basis.value[a];
        out.grad[0] = out.grad[0] + u * basis.grad[a];
      } else {
        out.value.y += u * basis.value[a];
        out.grad[1] = out.grad[1] + u * basis.grad[a];
      }
    }
  }
  return out;
}

// squared symmetric gradient, with the hoop strain added in axisym mode
double eps_norm_sq(const PointEval& f, bool axisym, double r) {
  const double exx = f.grad[0].x;
  const double eyy = f.grad[1].y;
  const double exy = 0.5 * (f.grad[0].y + f.grad[1].x);
  double s = exx * exx + eyy * eyy + 2.0 * exy * exy;
  if (axisym) {
    const double hoop = f.value.x / r;
    s += hoop * hoop;
  }
  return s;
}

}  // namespace

EnergyReport energy(const SolutionState& state, const ProblemSpaces& spaces,
                    const MaterialParams& params, GeomMode mode) {
  check_sizes(state, spaces);
  const Mesh& mesh = *spaces.mesh;
  const bool axisym = mode == GeomMode::axisym;
  const auto weight = [&](const Vec2& x) { return axisym ? x.x : 1.0; };

  EnergyReport report;
  const QuadRule tri = quadrature(QuadDomain::triangle, 6);

  // fluid volume: viscous dissipation rate
  for (size_t lc = 0; lc < spaces.v.cells.size(); ++lc) {
    const auto& cv = mesh.cells[static_cast<size_t>(spaces.v.cells[lc])];
    const AffineMap map = affine_map(mesh.vertices[cv[0]], mesh.vertices[cv[1]],
                                     mesh.vertices[cv[2]]);
    for (size_t q = 0; q < tri.points.size(); ++q) {
      const BasisEval basis = push_gradients(map, eval_basis(spaces.v.kind, tri.points[q]));
      const Vec2 x = map.apply(tri.points[q]);
      const double w = tri.weights[q] * std::abs(map.det) * weight(x);
      const PointEval u = eval_field(spaces.v, state.u,
                                     static_cast<int>(lc), basis);
      report.d_viscous += 2.0 * params.mu_f * eps_norm_sq(u, axisym, x.x) * w;
    }
  }

  // porous volume: elastic energy, storage, total pressure gap, Darcy rate
  for (size_t lc = 0; lc < spaces.w.cells.size(); ++lc) {
    const int gc = spaces.w.cells[lc];
    const auto& cv = mesh.cells[static_cast<size_t>(gc)];
    const AffineMap map = affine_map(mesh.vertices[cv[0]], mesh.vertices[cv[1]],
                                     mesh.vertices[cv[2]]);
    const int lq = spaces.q_p.cell_local[static_cast<size_t>(gc)];
    const int lz = spaces.z.cell_local[static_cast<size_t>(gc)];
    const double kappa = params.kappa_on(gc);
    const double lambda = params.lambda_on(gc);
    for (size_t q = 0; q < tri.points.size(); ++q) {
      const BasisEval wb = push_gradients(map, eval_basis(spaces.w.kind, tri.points[q]));
      const BasisEval qb = push_gradients(map, eval_basis(spaces.q_p.kind, tri.points[q]));
      const BasisEval zb = eval_basis(spaces.z.kind, tri.points[q]);
      const Vec2 x = map.apply(tri.points[q]);
      const double w = tri.weights[q] * std::abs(map.det) * weight(x);

      const PointEval d = eval_field(spaces.w, state.d,
                                     static_cast<int>(lc), wb);
      const PointEval pp = eval_field(spaces.q_p, state.p_p, lq, qb);
      const PointEval phi = eval_field(spaces.z, state.phi, lz, zb);

      report.elastic += params.mu_s * eps_norm_sq(d, axisym, x.x) * w;
      report.storage += 0.5 * params.c0 * pp.value.x * pp.value.x * w;
      const double gap = params.alpha * pp.value.x - phi.value.x;
      report.total_pressure += 0.5 / lambda * gap * gap * w;
      report.d_darcy +=
          kappa / params.mu_f * dot(pp.grad[0], pp.grad[0]) * w;
    }
  }

  // interface: slip dissipation rate against the discrete d_t d
  const QuadRule edge = quadrature(QuadDomain::edge, 6);
  const double idt = state.dt_last > 0.0 ? 1.0 / state.dt_last : 0.0;
  for (const InterfaceFacet& f : mesh.interface) {
    const FacetFrame frame = interface_frame(mesh, f);
    const Vec2 pa = mesh.vertices[f.v0], pb = mesh.vertices[f.v1];
    const int lf = spaces.v.cell_local[static_cast<size_t>(f.fluid_cell)];
    const int lp = spaces.w.cell_local[static_cast<size_t>(f.porous_cell)];
    const auto& fcv = mesh.cells[static_cast<size_t>(f.fluid_cell)];
    const auto& pcv = mesh.cells[static_cast<size_t>(f.porous_cell)];
    const AffineMap fmap = affine_map(
        mesh.vertices[fcv[0]], mesh.vertices[fcv[1]], mesh.vertices[fcv[2]]);
    const AffineMap pmap = affine_map(
        mesh.vertices[pcv[0]], mesh.vertices[pcv[1]], mesh.vertices[pcv[2]]);
    const double coef =
        params.gamma * params.mu_f / std::sqrt(params.kappa_on(f.porous_cell));
    for (size_t q = 0; q < edge.points.size(); ++q) {
      const double s = edge.points[q].x;
      const Vec2 x = pa + s * (pb - pa);
      const BasisEval fb = eval_basis(spaces.v.kind, fmap.pull_back(x));
      const BasisEval pbv = eval_basis(spaces.w.kind, pmap.pull_back(x));
      const double w = edge.weights[q] * frame.length * weight(x);

      const PointEval u = eval_field(spaces.v, state.u, lf, fb);
      const PointEval d = eval_field(spaces.w, state.d, lp, pbv);
      const PointEval dp = eval_field(spaces.w, state.d_prev, lp, pbv);
      const double slip =
          dot(u.value, frame.t) -
          idt * (dot(d.value, frame.t) - dot(dp.value, frame.t));
      report.d_bjs += coef * slip * slip * w;
    }
  }
  return report;
}

}  // namespace bstok
