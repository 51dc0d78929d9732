#include "lsqns/sparse_solve.hpp"

#include <suitesparse/umfpack.h>

#include <unsupported/Eigen/SparseExtra>

#include <algorithm>
#include <atomic>
#include <cmath>

namespace lsqns {

namespace {

SparseMatrix build_saddle(const SparseMatrix& a, const SparseMatrix& b, int pin) {
  const auto n_u = static_cast<int>(a.rows());
  const auto n_p = static_cast<int>(b.rows());
  if (a.cols() != n_u || b.cols() != n_u) throw SolverError("saddle blocks have incompatible shapes");
  if (pin < 0 || pin >= n_p) throw SolverError("pinned pressure dof out of range");
  std::vector<Triplet> triplets;
  triplets.reserve(a.nonZeros() + 2 * b.nonZeros() + 1);
  for (int k = 0; k < a.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(a, k); it; ++it) triplets.emplace_back(it.row(), it.col(), it.value());
  }
  for (int k = 0; k < b.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(b, k); it; ++it) {
      triplets.emplace_back(n_u + it.row(), it.col(), it.value());
      triplets.emplace_back(it.col(), n_u + it.row(), it.value());
    }
  }
  // Structural slot for the pinned pressure diagonal.
  triplets.emplace_back(n_u + pin, n_u + pin, 0.0);
  SparseMatrix s(n_u + n_p, n_u + n_p);
  s.setFromTriplets(triplets.begin(), triplets.end());
  s.makeCompressed();
  return s;
}

}  // namespace

ConstrainedOperator::ConstrainedOperator(const SparseMatrix& velocity_block, const SparseMatrix& divergence,
                                         const DirichletSet& constraints)
    : n_u_(static_cast<int>(velocity_block.rows())),
      n_p_(static_cast<int>(divergence.rows())),
      full_(build_saddle(velocity_block, divergence, constraints.pinned_pressure_dof)) {
  constrained_mask_.assign(n_u_ + n_p_, 0);
  for (int d : constraints.velocity_dofs) {
    if (d < 0 || d >= n_u_) throw SolverError("constrained velocity dof out of range");
    constrained_mask_[d] = 1;
  }
  constrained_mask_[n_u_ + constraints.pinned_pressure_dof] = 1;
  for (int r = 0; r < n_u_ + n_p_; ++r) {
    if (constrained_mask_[r]) constrained_rows_.push_back(r);
  }
  constrained_ = full_;
  for (int k = 0; k < constrained_.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(constrained_, k); it; ++it) {
      if (constrained_mask_[it.row()] || constrained_mask_[it.col()]) {
        it.valueRef() = it.row() == it.col() ? 1.0 : 0.0;
      }
    }
  }
}

Vector ConstrainedOperator::constrained_full_rhs(const Vector& rhs, const Vector* boundary_values) const {
  if (rhs.size() != size()) throw SolverError("right-hand side has wrong length");
  Vector out = rhs;
  if (boundary_values) {
    if (boundary_values->size() != n_u_) throw SolverError("boundary value vector has wrong length");
    Vector lifted = Vector::Zero(size());
    for (int r : constrained_rows_) {
      if (r < n_u_) lifted[r] = (*boundary_values)[r];
    }
    out.noalias() -= full_ * lifted;
    for (int r : constrained_rows_) out[r] = lifted[r];
  } else {
    for (int r : constrained_rows_) out[r] = 0.0;
  }
  return out;
}

Vector ConstrainedOperator::constrained_rhs(const Vector& velocity_rhs, const Vector* boundary_values) const {
  if (velocity_rhs.size() != n_u_) throw SolverError("velocity right-hand side has wrong length");
  Vector rhs = Vector::Zero(size());
  rhs.head(n_u_) = velocity_rhs;
  return constrained_full_rhs(rhs, boundary_values);
}

ConstrainedSystem apply_dirichlet(const SaddleSystem& system, const DirichletSet& constraints,
                                  const Vector& boundary_values) {
  ConstrainedOperator op(system.velocity_block, system.divergence, constraints);
  for (int d : constraints.velocity_dofs) {
    if (!std::isfinite(boundary_values[d])) {
      throw SolverError("missing boundary value for velocity dof " + std::to_string(d));
    }
  }
  return {op.matrix(), op.constrained_full_rhs(system.rhs, &boundary_values)};
}

struct Factorization::Impl {
  SparseMatrix matrix;
  void* symbolic = nullptr;
  void* numeric = nullptr;
  std::atomic<double> max_residual{0.0};

  ~Impl() {
    if (numeric) umfpack_di_free_numeric(&numeric);
    if (symbolic) umfpack_di_free_symbolic(&symbolic);
  }

  void analyze() {
    double control[UMFPACK_CONTROL];
    umfpack_di_defaults(control);
    control[UMFPACK_STRATEGY] = UMFPACK_STRATEGY_SYMMETRIC;
    control[UMFPACK_ORDERING] = UMFPACK_ORDERING_METIS;
    const int status = umfpack_di_symbolic(static_cast<int>(matrix.rows()), static_cast<int>(matrix.cols()),
                                           matrix.outerIndexPtr(), matrix.innerIndexPtr(), matrix.valuePtr(),
                                           &symbolic, control, nullptr);
    if (status != UMFPACK_OK) throw SolverError("symbolic factorization failed (status " + std::to_string(status) + ")");
  }

  void factor() {
    if (numeric) umfpack_di_free_numeric(&numeric);
    double control[UMFPACK_CONTROL];
    umfpack_di_defaults(control);
    const int status = umfpack_di_numeric(matrix.outerIndexPtr(), matrix.innerIndexPtr(), matrix.valuePtr(),
                                          symbolic, &numeric, control, nullptr);
    if (status == UMFPACK_WARNING_singular_matrix) {
      throw SolverError("matrix is numerically singular (missing pressure pin or Dirichlet set?)");
    }
    if (status != UMFPACK_OK) throw SolverError("numeric factorization failed (status " + std::to_string(status) + ")");
  }

  Vector raw_solve(const Vector& b) const {
    Vector x(b.size());
    double control[UMFPACK_CONTROL];
    double info[UMFPACK_INFO];
    umfpack_di_defaults(control);
    control[UMFPACK_IRSTEP] = 0;  // refinement is handled by the caller
    std::vector<int> wi(b.size());
    std::vector<double> w(5 * b.size());
    const int status = umfpack_di_wsolve(UMFPACK_A, matrix.outerIndexPtr(), matrix.innerIndexPtr(), matrix.valuePtr(),
                                         x.data(), b.data(), numeric, control, info, wi.data(), w.data());
    if (status != UMFPACK_OK) throw SolverError("triangular solve failed (status " + std::to_string(status) + ")");
    return x;
  }

  void record(double r) {
    double prev = max_residual.load();
    while (r > prev && !max_residual.compare_exchange_weak(prev, r)) {
    }
  }
};

Factorization::Factorization(SparseMatrix matrix) : impl_(std::make_unique<Impl>()) {
  if (matrix.rows() != matrix.cols() || matrix.rows() == 0) throw SolverError("factorization needs a square matrix");
  matrix.makeCompressed();
  impl_->matrix = std::move(matrix);
  impl_->analyze();
  impl_->factor();
  ++numeric_count_;
}

Factorization::~Factorization() = default;
Factorization::Factorization(Factorization&&) noexcept = default;
Factorization& Factorization::operator=(Factorization&&) noexcept = default;

void Factorization::refactorize(const SparseMatrix& matrix) {
  const SparseMatrix& old = impl_->matrix;
  const bool same_pattern = matrix.isCompressed() && matrix.rows() == old.rows() && matrix.cols() == old.cols() &&
                            matrix.nonZeros() == old.nonZeros() &&
                            std::equal(old.outerIndexPtr(), old.outerIndexPtr() + old.outerSize() + 1,
                                       matrix.outerIndexPtr()) &&
                            std::equal(old.innerIndexPtr(), old.innerIndexPtr() + old.nonZeros(),
                                       matrix.innerIndexPtr());
  if (!same_pattern) throw SolverError("refactorize: sparsity pattern differs from the analyzed one");
  std::copy(matrix.valuePtr(), matrix.valuePtr() + matrix.nonZeros(), impl_->matrix.valuePtr());
  impl_->factor();
  ++numeric_count_;
}

Eigen::Index Factorization::size() const { return impl_->matrix.rows(); }

double Factorization::max_relative_residual() const { return impl_->max_residual.load(); }

Vector Factorization::solve(const Vector& rhs) const {
  if (rhs.size() != size()) {
    throw SolverError("solve: right-hand side length " + std::to_string(rhs.size()) + " does not match system size " +
                      std::to_string(size()));
  }
  const double scale = 1.0 + rhs.lpNorm<Eigen::Infinity>();
  Vector x = impl_->raw_solve(rhs);
  Vector r = rhs - impl_->matrix * x;
  double rel = r.lpNorm<Eigen::Infinity>() / scale;
  if (!std::isfinite(rel) || rel > kRefinementLimit) {
    throw SolverError("solve: relative residual " + std::to_string(rel) + " exceeds " + std::to_string(kRefinementLimit));
  }
  if (rel > kResidualTolerance) {
    x += impl_->raw_solve(r);
    r = rhs - impl_->matrix * x;
    rel = r.lpNorm<Eigen::Infinity>() / scale;
    if (!(rel <= kResidualTolerance)) {
      throw SolverError("solve: relative residual " + std::to_string(rel) + " after refinement exceeds " +
                        std::to_string(kResidualTolerance));
    }
  }
  impl_->record(rel);
  return x;
}

void write_matrix_market(const SparseMatrix& matrix, const std::string& path) {
  if (!Eigen::saveMarket(matrix, path)) throw std::runtime_error("cannot write MatrixMarket file " + path);
}

}  // namespace lsqns
