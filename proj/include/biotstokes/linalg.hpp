#pragma once

#include <array>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "biotstokes/spaces.hpp"

namespace bstok {

struct LinalgError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Factorization or residual failure.  pivot is the offending row or column
// when one can be identified, otherwise -1.
struct SolverFailure : LinalgError {
  int pivot;
  explicit SolverFailure(const std::string& msg, int pivot_index = -1)
      : LinalgError(msg), pivot(pivot_index) {}
};

// ============================================================================
// Sparse matrices
// ============================================================================

struct Triplet {
  int row = 0;
  int col = 0;
  double value = 0.0;
};

// Compressed sparse row storage.  Column indices are sorted and deduplicated
// within each row; explicit zeros are kept.
struct SparseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> row_offsets;  // size rows + 1
  std::vector<int> col_indices;
  std::vector<double> values;

  static SparseMatrix from_triplets(int rows, int cols,
                                    std::vector<Triplet> triplets);
  static SparseMatrix identity(int n);

  int nnz() const { return static_cast<int>(col_indices.size()); }
  double at(int row, int col) const;  // 0 when the entry is absent
  std::vector<double> apply(const std::vector<double>& x) const;
  std::vector<double> apply_transpose(const std::vector<double>& x) const;
  SparseMatrix transpose() const;
  SparseMatrix scaled(double s) const;
};

// alpha*a + beta*b
SparseMatrix add(const SparseMatrix& a, const SparseMatrix& b,
                 double alpha = 1.0, double beta = 1.0);

// ============================================================================
// Block systems
// ============================================================================

// 5x5 grid of optional blocks keyed by (test field, trial field), plus the
// right-hand side over the monolithic index space.
struct BlockSystem {
  BlockLayout layout;
  std::array<std::array<std::optional<SparseMatrix>, n_fields>, n_fields>
      blocks;
  std::vector<double> rhs;

  explicit BlockSystem(const BlockLayout& l)
      : layout(l), rhs(static_cast<size_t>(l.total()), 0.0) {}

  void set_block(Field test, Field trial, SparseMatrix m);
  const SparseMatrix* block(Field test, Field trial) const;
};

// Missing blocks contribute nothing; block dimensions must match the layout.
SparseMatrix monolithic(const BlockSystem& system);

// ============================================================================
// Direct solve
// ============================================================================

// Exact sparse LU with fill-reducing ordering.  Every solve verifies the
// relative residual against 1e-10 and throws SolverFailure on violation.
class Factorization {
 public:
  explicit Factorization(SparseMatrix a);
  ~Factorization();
  Factorization(Factorization&&) noexcept;
  Factorization& operator=(Factorization&&) noexcept;

  std::vector<double> solve(const std::vector<double>& b) const;
  const SparseMatrix& matrix() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::vector<double> solve_direct(const SparseMatrix& a,
                                 const std::vector<double>& b);

// ============================================================================
// Dirichlet elimination
// ============================================================================

// Result of symmetric row/column elimination.  column_coupling keeps the
// eliminated columns (restricted to unconstrained rows) so right-hand sides
// for new prescribed values can be corrected without touching the matrix:
//   rhs <- rhs - column_coupling * values;  rhs[dofs[k]] <- values[k].
struct DirichletOp {
  std::vector<int> dofs;  // sorted unique
  SparseMatrix column_coupling;

  void correct_rhs(std::vector<double>& rhs,
                   const std::vector<double>& values) const;
};

// Zeroes constrained rows and columns of a in place, puts 1 on the diagonal.
DirichletOp eliminate_dirichlet(SparseMatrix& a, const std::vector<int>& dofs);

// Symmetric elimination applied blockwise; constraints are monolithic indices
// with values.  rhs <- rhs - A[:,dofs]*values on unconstrained rows, then
// rhs[dof] = value.
BlockSystem apply_dirichlet(const BlockSystem& system,
                            const DofSet& constraints);

// ============================================================================
// Debug export
// ============================================================================

void save_matrix_market(const SparseMatrix& a, std::ostream& out);
void save_matrix_market_file(const SparseMatrix& a, const std::string& path);

}  // namespace bstok
