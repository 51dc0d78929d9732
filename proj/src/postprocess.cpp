#include "lsqns/postprocess.hpp"

#include <Eigen/SparseCholesky>

#include <fstream>
#include <iomanip>
#include <stdexcept>

namespace lsqns {

DiscreteField stream_function(const SpaceLayout& layout, const DiscreteField& velocity) {
  check_field(layout, velocity, FieldKind::VelocityP2);
  const int n = layout.n_nodes();
  std::vector<char> fixed(n, 0);
  for (int i = 0; i < n; ++i) fixed[i] = layout.node_tag(i).has_value();

  // Symmetric elimination of the zero boundary values.
  const SparseMatrix k = assemble_scalar_stiffness(layout);
  std::vector<Triplet> triplets;
  triplets.reserve(k.nonZeros());
  for (int col = 0; col < k.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(k, col); it; ++it) {
      if (!fixed[it.row()] && !fixed[col]) triplets.emplace_back(it.row(), col, it.value());
    }
  }
  for (int i = 0; i < n; ++i) {
    if (fixed[i]) triplets.emplace_back(i, i, 1.0);
  }
  SparseMatrix a(n, n);
  a.setFromTriplets(triplets.begin(), triplets.end());

  Vector rhs = assemble_vorticity_load(layout, velocity.coefficients);
  for (int i = 0; i < n; ++i) {
    if (fixed[i]) rhs[i] = 0.0;
  }
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(a);
  if (ldlt.info() != Eigen::Success) throw SolverError("stream function: factorization failed");
  Vector psi = ldlt.solve(rhs);
  if (ldlt.info() != Eigen::Success || !psi.allFinite()) throw SolverError("stream function: solve failed");
  return DiscreteField::scalar(std::move(psi));
}

namespace {

/// Nodal values on all P2 nodes (pressure gets midpoint averages).
Vector nodal_values(const SpaceLayout& layout, const DiscreteField& f) {
  if (f.kind != FieldKind::PressureP1) return f.coefficients;
  Vector out = Vector::Zero(layout.n_nodes());
  const int nv = layout.n_pressure_dofs();
  out.head(nv) = f.coefficients;
  for (int t = 0; t < layout.n_triangles(); ++t) {
    const auto& nodes = layout.element_nodes(t);
    for (int e = 0; e < 3; ++e) {
      out[nodes[3 + e]] = 0.5 * (f.coefficients[nodes[(e + 1) % 3]] + f.coefficients[nodes[(e + 2) % 3]]);
    }
  }
  return out;
}

}  // namespace

void write_vtk(const SpaceLayout& layout, const std::vector<NamedField>& fields, const std::string& path) {
  for (const auto& f : fields) check_field(layout, f.field, f.field.kind);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out << std::setprecision(17);
  const int n = layout.n_nodes();
  const int nt = layout.n_triangles();
  out << "# vtk DataFile Version 3.0\n"
      << "lsqns P2 subgrid\n"
      << "ASCII\n"
      << "DATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << n << " double\n";
  for (int i = 0; i < n; ++i) {
    const Point2& p = layout.node_point(i);
    out << p.x << ' ' << p.y << " 0\n";
  }
  out << "CELLS " << 4 * nt << ' ' << 16 * nt << '\n';
  for (int t = 0; t < nt; ++t) {
    const auto& v = layout.element_nodes(t);
    // Corner subtriangles then the middle one; m_i is opposite vertex i.
    out << "3 " << v[0] << ' ' << v[5] << ' ' << v[4] << '\n';
    out << "3 " << v[1] << ' ' << v[3] << ' ' << v[5] << '\n';
    out << "3 " << v[2] << ' ' << v[4] << ' ' << v[3] << '\n';
    out << "3 " << v[3] << ' ' << v[4] << ' ' << v[5] << '\n';
  }
  out << "CELL_TYPES " << 4 * nt << '\n';
  for (int c = 0; c < 4 * nt; ++c) out << "5\n";
  if (!fields.empty()) out << "POINT_DATA " << n << '\n';
  for (const auto& f : fields) {
    const Vector values = nodal_values(layout, f.field);
    if (f.field.kind == FieldKind::VelocityP2) {
      out << "VECTORS " << f.name << " double\n";
      for (int i = 0; i < n; ++i) out << values[i] << ' ' << values[n + i] << " 0\n";
    } else {
      out << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
      for (int i = 0; i < n; ++i) out << values[i] << '\n';
    }
  }
  out.flush();
  if (!out) throw std::runtime_error("write to " + path + " failed");
}

}  // namespace lsqns
