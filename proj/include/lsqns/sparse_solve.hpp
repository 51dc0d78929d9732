#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <cstddef>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace lsqns {

using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;
using Triplet = Eigen::Triplet<double, int>;

class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Which family an operator belongs to. Constant operators are factorized
/// once and reused; linearized ones change with every time level.
enum class OperatorKind { Constant, Linearized };

/// Velocity/pressure block system [[A, B^T], [B, 0]] before boundary
/// conditions are imposed.
struct SaddleSystem {
  SparseMatrix velocity_block;  // A, n_u x n_u
  SparseMatrix divergence;      // B, n_p x n_u
  Vector rhs;                   // length n_u + n_p
  OperatorKind kind = OperatorKind::Constant;
};

/// Degrees of freedom removed from the saddle system: prescribed velocity
/// dofs plus one pinned pressure dof (index relative to the pressure block).
struct DirichletSet {
  std::vector<int> velocity_dofs;  // sorted, unique
  int pinned_pressure_dof = 0;
};

/// Saddle matrix with constrained rows and columns replaced by identity.
/// The full (unconstrained) matrix is kept so nonhomogeneous data can be
/// lifted into any right-hand side.
class ConstrainedOperator {
 public:
  ConstrainedOperator(const SparseMatrix& velocity_block, const SparseMatrix& divergence,
                      const DirichletSet& constraints);

  const SparseMatrix& matrix() const { return constrained_; }
  int n_velocity() const { return n_u_; }
  int n_pressure() const { return n_p_; }
  int size() const { return n_u_ + n_p_; }

  /// Right-hand side of the constrained system. `velocity_rhs` has length
  /// n_u; `boundary_values` (length n_u, only constrained entries are read)
  /// may be null for homogeneous data.
  Vector constrained_rhs(const Vector& velocity_rhs, const Vector* boundary_values = nullptr) const;
  /// Same, for a full-length right-hand side (velocity then pressure).
  Vector constrained_full_rhs(const Vector& rhs, const Vector* boundary_values = nullptr) const;

  const std::vector<char>& is_constrained() const { return constrained_mask_; }

 private:
  int n_u_;
  int n_p_;
  SparseMatrix full_;
  SparseMatrix constrained_;
  std::vector<char> constrained_mask_;  // per row of the full system
  std::vector<int> constrained_rows_;
};

struct ConstrainedSystem {
  SparseMatrix matrix;
  Vector rhs;
};

/// Symmetric elimination of the velocity data and the pressure pin.
ConstrainedSystem apply_dirichlet(const SaddleSystem& system, const DirichletSet& constraints,
                                  const Vector& boundary_values);

/// Direct sparse LU (UMFPACK) of a square matrix. Immutable between
/// refactorizations; concurrent `solve` calls are safe.
///
/// Every solve checks ||Ax - b||_inf <= 1e-8 (1 + ||b||_inf). A residual above
/// that bound but below 1e-6 (1 + ||b||_inf) triggers one step of iterative
/// refinement; anything worse, or a refinement that does not reach the bound,
/// throws SolverError.
class Factorization {
 public:
  explicit Factorization(SparseMatrix matrix);
  ~Factorization();
  Factorization(Factorization&&) noexcept;
  Factorization& operator=(Factorization&&) noexcept;
  Factorization(const Factorization&) = delete;
  Factorization& operator=(const Factorization&) = delete;

  /// Numeric refactorization for a matrix with the same sparsity pattern.
  /// The symbolic analysis is reused. Throws SolverError on pattern mismatch.
  void refactorize(const SparseMatrix& matrix);

  Vector solve(const Vector& rhs) const;

  Eigen::Index size() const;
  /// Number of numeric factorizations performed by this object.
  std::size_t numeric_count() const { return numeric_count_; }
  /// Largest relative residual observed over all solves.
  double max_relative_residual() const;

  static constexpr double kResidualTolerance = 1e-8;
  static constexpr double kRefinementLimit = 1e-6;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::size_t numeric_count_ = 0;
};

/// Writes `matrix` in MatrixMarket coordinate format.
void write_matrix_market(const SparseMatrix& matrix, const std::string& path);

}  // namespace lsqns
