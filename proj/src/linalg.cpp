#include "biotstokes/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <string>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "biotstokes/format.hpp"

namespace bstok {

// ============================================================================
// SparseMatrix
// ============================================================================

SparseMatrix SparseMatrix::from_triplets(int rows, int cols,
                                         std::vector<Triplet> triplets) {
  for (const Triplet& t : triplets)
    if (t.row < 0 || t.row >= rows || t.col < 0 || t.col >= cols)
      throw LinalgError("triplet index out of range");
  std::sort(triplets.begin(), triplets.end(),
            [](const Triplet& a, const Triplet& b) {
              return a.row != b.row ? a.row < b.row : a.col < b.col;
            });

  SparseMatrix m;
  m.rows = rows;
  m.cols = cols;
  m.row_offsets.assign(static_cast<size_t>(rows) + 1, 0);
  size_t i = 0;
  while (i < triplets.size()) {
    double sum = triplets[i].value;
    size_t j = i + 1;
    while (j < triplets.size() && triplets[j].row == triplets[i].row &&
           triplets[j].col == triplets[i].col) {
      sum += triplets[j].value;
      ++j;
    }
    m.col_indices.push_back(triplets[i].col);
    m.values.push_back(sum);
    m.row_offsets[static_cast<size_t>(triplets[i].row) + 1]++;
    i = j;
  }
  for (int r = 0; r < rows; ++r)
    m.row_offsets[static_cast<size_t>(r) + 1] +=
        m.row_offsets[static_cast<size_t>(r)];
  return m;
}

SparseMatrix SparseMatrix::identity(int n) {
  std::vector<Triplet> t;
  t.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) t.push_back({i, i, 1.0});
  return from_triplets(n, n, std::move(t));
}

double SparseMatrix::at(int row, int col) const {
  const auto begin = col_indices.begin() + row_offsets[static_cast<size_t>(row)];
  const auto end = col_indices.begin() + row_offsets[static_cast<size_t>(row) + 1];
  const auto it = std::lower_bound(begin, end, col);
  if (it == end || *it != col) return 0.0;
  return values[static_cast<size_t>(it - col_indices.begin())];
}

std::vector<double> SparseMatrix::apply(const std::vector<double>& x) const {
  if (x.size() != static_cast<size_t>(cols))
    throw LinalgError("apply: vector length mismatch");
  std::vector<double> y(static_cast<size_t>(rows), 0.0);
  for (int r = 0; r < rows; ++r) {
    double acc = 0.0;
    for (int k = row_offsets[static_cast<size_t>(r)];
         k < row_offsets[static_cast<size_t>(r) + 1]; ++k)
      acc += values[static_cast<size_t>(k)] *
             x[static_cast<size_t>(col_indices[static_cast<size_t>(k)])];
    y[static_cast<size_t>(r)] = acc;
  }
  return y;
}

std::vector<double> SparseMatrix::apply_transpose(
    const std::vector<double>& x) const {
  if (x.size() != static_cast<size_t>(rows))
    throw LinalgError("apply_transpose: vector length mismatch");
  std::vector<double> y(static_cast<size_t>(cols), 0.0);
  for (int r = 0; r < rows; ++r)
    for (int k = row_offsets[static_cast<size_t>(r)];
         k < row_offsets[static_cast<size_t>(r) + 1]; ++k)
      y[static_cast<size_t>(col_indices[static_cast<size_t>(k)])] +=
          values[static_cast<size_t>(k)] * x[static_cast<size_t>(r)];
  return y;
}

SparseMatrix SparseMatrix::transpose() const {
  std::vector<Triplet> t;
  t.reserve(values.size());
  for (int r = 0; r < rows; ++r)
    for (int k = row_offsets[static_cast<size_t>(r)];
         k < row_offsets[static_cast<size_t>(r) + 1]; ++k)
      t.push_back({col_indices[static_cast<size_t>(k)], r,
                   values[static_cast<size_t>(k)]});
  return from_triplets(cols, rows, std::move(t));
}

SparseMatrix SparseMatrix::scaled(double s) const {
  SparseMatrix m = *this;
  for (double& v : m.values) v *= s;
  return m;
}

SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b, double alpha,
                 double beta) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw LinalgError("add: dimension mismatch");
  std::vector<Triplet> t;
  t.reserve(a.values.size() + b.values.size());
  for (int r = 0; r < a.rows; ++r)
    for (int k = a.row_offsets[static_cast<size_t>(r)];
         k < a.row_offsets[static_cast<size_t>(r) + 1]; ++k)
      t.push_back({r, a.col_indices[static_cast<size_t>(k)],
                   alpha * a.values[static_cast<size_t>(k)]});
  for (int r = 0; r < b.rows; ++r)
    for (int k = b.row_offsets[static_cast<size_t>(r)];
         k < b.row_offsets[static_cast<size_t>(r) + 1]; ++k)
      t.push_back({r, b.col_indices[static_cast<size_t>(k)],
                   beta * b.values[static_cast<size_t>(k)]});
  return SparseMatrix::from_triplets(a.rows, a.cols, std::move(t));
}

// ============================================================================
// BlockSystem
// ============================================================================

void BlockSystem::set_block(Field test, Field trial, SparseMatrix m) {
  if (m.rows != layout.size(test) || m.cols != layout.size(trial))
    throw LinalgError(std::string("block (") + field_name(test) + "," +
                      field_name(trial) + ") does not match the layout");
  blocks[static_cast<size_t>(test)][static_cast<size_t>(trial)] = std::move(m);
}

const SparseMatrix* BlockSystem::block(Field test, Field trial) const {
  const auto& slot =
      blocks[static_cast<size_t>(test)][static_cast<size_t>(trial)];
  return slot ? &*slot : nullptr;
}

SparseMatrix monolithic(const BlockSystem& system) {
  const BlockLayout& l = system.layout;
  std::vector<Triplet> t;
  for (Field fr : all_fields) {
    for (Field fc : all_fields) {
      const SparseMatrix* b = system.block(fr, fc);
      if (!b) continue;
      if (b->rows != l.size(fr) || b->cols != l.size(fc))
        throw LinalgError("monolithic: block dimension mismatch");
      const int ro = l.offset(fr), co = l.offset(fc);
      for (int r = 0; r < b->rows; ++r)
        for (int k = b->row_offsets[static_cast<size_t>(r)];
             k < b->row_offsets[static_cast<size_t>(r) + 1]; ++k)
          t.push_back({ro + r, co + b->col_indices[static_cast<size_t>(k)],
                       b->values[static_cast<size_t>(k)]});
    }
  }
  return SparseMatrix::from_triplets(l.total(), l.total(), std::move(t));
}

// ============================================================================
// Direct solve
// ============================================================================

namespace {

// Best-effort location of a singular row or column: any whose largest entry
// is below 1e-14 of the global maximum.
int suspect_pivot(const SparseMatrix& a) {
  double global_max = 0.0;
  for (double v : a.values) global_max = std::max(global_max, std::abs(v));
  std::vector<double> row_max(static_cast<size_t>(a.rows), 0.0);
  std::vector<double> col_max(static_cast<size_t>(a.cols), 0.0);
  for (int r = 0; r < a.rows; ++r)
    for (int k = a.row_offsets[static_cast<size_t>(r)];
         k < a.row_offsets[static_cast<size_t>(r) + 1]; ++k) {
      const double v = std::abs(a.values[static_cast<size_t>(k)]);
      row_max[static_cast<size_t>(r)] =
          std::max(row_max[static_cast<size_t>(r)], v);
      col_max[static_cast<size_t>(a.col_indices[static_cast<size_t>(k)])] =
          std::max(
              col_max[static_cast<size_t>(a.col_indices[static_cast<size_t>(k)])],
              v);
    }
  for (int r = 0; r < a.rows; ++r)
    if (row_max[static_cast<size_t>(r)] <= 1e-14 * global_max) return r;
  for (int c = 0; c < a.cols; ++c)
    if (col_max[static_cast<size_t>(c)] <= 1e-14 * global_max) return c;
  return -1;
}

double norm2(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

struct Factorization::Impl {
  SparseMatrix a;
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
};

Factorization::Factorization(SparseMatrix a) : impl_(std::make_unique<Impl>()) {
  if (a.rows != a.cols)
    throw LinalgError("factorization requires a square matrix");
  impl_->a = std::move(a);
  const SparseMatrix& m = impl_->a;
  if (m.rows == 0) return;

  std::vector<Eigen::Triplet<double>> et;
  et.reserve(m.values.size());
  for (int r = 0; r < m.rows; ++r)
    for (int k = m.row_offsets[static_cast<size_t>(r)];
         k < m.row_offsets[static_cast<size_t>(r) + 1]; ++k)
      et.emplace_back(r, m.col_indices[static_cast<size_t>(k)],
                      m.values[static_cast<size_t>(k)]);
  Eigen::SparseMatrix<double> em(m.rows, m.cols);
  em.setFromTriplets(et.begin(), et.end());
  em.makeCompressed();

  impl_->lu.analyzePattern(em);
  impl_->lu.factorize(em);
  if (impl_->lu.info() != Eigen::Success) {
    const int pivot = suspect_pivot(m);
    std::string msg = "sparse LU factorization failed";
    if (pivot >= 0) msg += " (suspect pivot " + std::to_string(pivot) + ")";
    throw SolverFailure(msg, pivot);
  }
}

Factorization::~Factorization() = default;
Factorization::Factorization(Factorization&&) noexcept = default;
Factorization& Factorization::operator=(Factorization&&) noexcept = default;

const SparseMatrix& Factorization::matrix() const { return impl_->a; }

std::vector<double> Factorization::solve(const std::vector<double>& b) const {
  const SparseMatrix& a = impl_->a;
  if (b.size() != static_cast<size_t>(a.rows))
    throw LinalgError("solve: right-hand side length mismatch");
  if (a.rows == 0) return {};

  const Eigen::Map<const Eigen::VectorXd> eb(b.data(),
                                             static_cast<Eigen::Index>(b.size()));
  const Eigen::VectorXd ex = impl_->lu.solve(eb);
  if (impl_->lu.info() != Eigen::Success)
    throw SolverFailure("sparse LU back substitution failed");
  std::vector<double> x(ex.data(), ex.data() + ex.size());

  std::vector<double> r = a.apply(x);
  for (size_t i = 0; i < r.size(); ++i) r[i] -= b[i];
  const double bnorm = norm2(b);
  const double rnorm = norm2(r);
  if (bnorm > 0.0 ? rnorm > 1e-10 * bnorm : rnorm > 1e-12)
    throw SolverFailure("solve residual " + fmt_double(rnorm) +
                        " exceeds the 1e-10 relative bound");
  return x;
}

std::vector<double> solve_direct(const SparseMatrix& a,
                                 const std::vector<double>& b) {
  return Factorization(a).solve(b);
}

// ============================================================================
// Dirichlet elimination
// ============================================================================

void DirichletOp::correct_rhs(std::vector<double>& rhs,
                              const std::vector<double>& values) const {
  if (values.size() != dofs.size())
    throw LinalgError("correct_rhs: value count mismatch");
  const std::vector<double> coupling = column_coupling.apply(values);
  for (size_t i = 0; i < rhs.size(); ++i) rhs[i] -= coupling[i];
  for (size_t k = 0; k < dofs.size(); ++k)
    rhs[static_cast<size_t>(dofs[k])] = values[k];
}

DirichletOp eliminate_dirichlet(SparseMatrix& a, const std::vector<int>& dofs) {
  if (a.rows != a.cols)
    throw LinalgError("eliminate_dirichlet requires a square matrix");
  std::vector<int> sorted = dofs;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  for (int d : sorted)
    if (d < 0 || d >= a.rows)
      throw LinalgError("constrained DOF out of range");

  std::vector<int> position(static_cast<size_t>(a.rows), -1);
  for (size_t k = 0; k < sorted.size(); ++k)
    position[static_cast<size_t>(sorted[k])] = static_cast<int>(k);

  std::vector<Triplet> kept, coupling;
  for (int r = 0; r < a.rows; ++r) {
    const bool row_con = position[static_cast<size_t>(r)] >= 0;
    for (int k = a.row_offsets[static_cast<size_t>(r)];
         k < a.row_offsets[static_cast<size_t>(r) + 1]; ++k) {
      const int c = a.col_indices[static_cast<size_t>(k)];
      const double v = a.values[static_cast<size_t>(k)];
      const bool col_con = position[static_cast<size_t>(c)] >= 0;
      if (!row_con && col_con)
        coupling.push_back({r, position[static_cast<size_t>(c)], v});
      if (!row_con && !col_con) kept.push_back({r, c, v});
    }
  }
  for (int d : sorted) kept.push_back({d, d, 1.0});

  a = SparseMatrix::from_triplets(a.rows, a.cols, std::move(kept));
  DirichletOp op;
  op.dofs = std::move(sorted);
  op.column_coupling = SparseMatrix::from_triplets(
      a.rows, static_cast<int>(op.dofs.size()), std::move(coupling));
  return op;
}

BlockSystem apply_dirichlet(const BlockSystem& system,
                            const DofSet& constraints) {
  const BlockLayout& l = system.layout;
  if (system.rhs.size() != static_cast<size_t>(l.total()))
    throw LinalgError("apply_dirichlet: right-hand side length mismatch");
  if (!constraints.has_values() && !constraints.dofs.empty())
    throw LinalgError("apply_dirichlet needs prescribed values");
  for (size_t i = 0; i < constraints.dofs.size(); ++i) {
    if (constraints.dofs[i] < 0 || constraints.dofs[i] >= l.total())
      throw LinalgError("constrained DOF out of range");
    if (i > 0 && constraints.dofs[i] <= constraints.dofs[i - 1])
      throw LinalgError("constraints must be sorted and unique");
  }

  // split constraints per field
  std::array<std::vector<std::pair<int, double>>, n_fields> per_field;
  for (size_t i = 0; i < constraints.dofs.size(); ++i) {
    const int g = constraints.dofs[i];
    for (int f = 0; f < n_fields; ++f) {
      if (g >= l.offsets[static_cast<size_t>(f)] &&
          g < l.offsets[static_cast<size_t>(f)] + l.sizes[static_cast<size_t>(f)]) {
        per_field[static_cast<size_t>(f)].emplace_back(
            g - l.offsets[static_cast<size_t>(f)], constraints.values[i]);
        break;
      }
    }
  }
  std::array<std::vector<int>, n_fields> local_pos;
  for (int f = 0; f < n_fields; ++f) {
    local_pos[static_cast<size_t>(f)].assign(
        static_cast<size_t>(l.sizes[static_cast<size_t>(f)]), -1);
    for (size_t k = 0; k < per_field[static_cast<size_t>(f)].size(); ++k)
      local_pos[static_cast<size_t>(f)]
               [static_cast<size_t>(per_field[static_cast<size_t>(f)][k].first)] =
                   static_cast<int>(k);
  }

  BlockSystem out(l);
  out.rhs = system.rhs;
  for (Field fr : all_fields) {
    const auto& row_con = local_pos[static_cast<size_t>(fr)];
    for (Field fc : all_fields) {
      const SparseMatrix* b = system.block(fr, fc);
      if (!b) continue;
      const auto& col_con = local_pos[static_cast<size_t>(fc)];
      const auto& col_vals = per_field[static_cast<size_t>(fc)];
      std::vector<Triplet> kept;
      for (int r = 0; r < b->rows; ++r) {
        const bool rc = row_con[static_cast<size_t>(r)] >= 0;
        for (int k = b->row_offsets[static_cast<size_t>(r)];
             k < b->row_offsets[static_cast<size_t>(r) + 1]; ++k) {
          const int c = b->col_indices[static_cast<size_t>(k)];
          const double v = b->values[static_cast<size_t>(k)];
          const int cpos = col_con[static_cast<size_t>(c)];
          if (!rc && cpos >= 0)
            out.rhs[static_cast<size_t>(l.global(fr, r))] -=
                v * col_vals[static_cast<size_t>(cpos)].second;
          if (!rc && cpos < 0) kept.push_back({r, c, v});
        }
      }
      if (fr == fc)
        for (const auto& entry : per_field[static_cast<size_t>(fr)])
          kept.push_back({entry.first, entry.first, 1.0});
      out.set_block(fr, fc,
                    SparseMatrix::from_triplets(b->rows, b->cols,
                                                std::move(kept)));
    }
    // a constrained field with no diagonal block still needs its identity rows
    if (!system.block(fr, fr) && !per_field[static_cast<size_t>(fr)].empty()) {
      std::vector<Triplet> diag;
      for (const auto& entry : per_field[static_cast<size_t>(fr)])
        diag.push_back({entry.first, entry.first, 1.0});
      out.set_block(fr, fr,
                    SparseMatrix::from_triplets(l.size(fr), l.size(fr),
                                                std::move(diag)));
    }
  }
  for (size_t i = 0; i < constraints.dofs.size(); ++i)
    out.rhs[static_cast<size_t>(constraints.dofs[i])] = constraints.values[i];
  return out;
}

// ============================================================================
// Debug export
// ============================================================================

void save_matrix_market(const SparseMatrix& a, std::ostream& out) {
  out << "%%MatrixMarket matrix coordinate real general\n";
  out << a.rows << " " << a.cols << " " << a.nnz() << "\n";
  for (int r = 0; r < a.rows; ++r)
    for (int k = a.row_offsets[static_cast<size_t>(r)];
         k < a.row_offsets[static_cast<size_t>(r) + 1]; ++k)
      out << (r + 1) << " " << (a.col_indices[static_cast<size_t>(k)] + 1)
          << " " << fmt_double(a.values[static_cast<size_t>(k)]) << "\n";
}

void save_matrix_market_file(const SparseMatrix& a, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw LinalgError("cannot open " + path + " for writing");
  save_matrix_market(a, out);
}

}  // namespace bstok
