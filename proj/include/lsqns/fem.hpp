#pragma once

#include "lsqns/mesh.hpp"
#include "lsqns/sparse_solve.hpp"

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <vector>

namespace lsqns {

/// Symmetric triangle quadrature in barycentric coordinates; weights sum to 1
/// and are scaled by the element area at use.
struct QuadratureRule {
  std::vector<std::array<double, 3>> points;
  std::vector<double> weights;
  int degree;
};

/// 6-point rule, exact for degree 4.
const QuadratureRule& degree4_rule();
/// 7-point rule, exact for degree 5.
const QuadratureRule& degree5_rule();

using ElementMatrix6 = Eigen::Matrix<double, 6, 6>;

/// Local P2 ordering: vertices 0, 1, 2, then the midpoints of the edges
/// opposite to vertex 0, 1, 2, i.e. (1,2), (2,0), (0,1).
ElementMatrix6 p2_element_mass(const Point2& a, const Point2& b, const Point2& c);
ElementMatrix6 p2_element_stiffness(const Point2& a, const Point2& b, const Point2& c);

/// Taylor-Hood P2/P1 degree-of-freedom layout.
///
/// P2 nodes are the mesh vertices (indices 0..n_vertices-1) followed by the
/// edge midpoints. Velocity dof of component c at node i is c * n_nodes + i.
/// Pressure dofs are the vertices.
class SpaceLayout {
 public:
  explicit SpaceLayout(Mesh mesh);

  const Mesh& mesh() const { return mesh_; }
  int n_nodes() const { return static_cast<int>(nodes_.size()); }
  int n_velocity_dofs() const { return 2 * n_nodes(); }
  int n_pressure_dofs() const { return static_cast<int>(mesh_.n_vertices()); }
  int n_triangles() const { return static_cast<int>(mesh_.n_triangles()); }

  int velocity_dof(int node, int component) const { return component * n_nodes() + node; }
  const Point2& node_point(int node) const { return nodes_[node]; }
  /// Global P2 nodes of triangle t in local order.
  const std::array<int, 6>& element_nodes(int t) const { return element_nodes_[t]; }
  /// Boundary tag of a node, or nullopt for interior nodes.
  std::optional<BoundaryTag> node_tag(int node) const;
  /// Number of triangles sharing each midpoint node (1 or 2).
  int midpoint_multiplicity(int node) const;

  /// Velocity dofs on the boundary (both components) and the pinned pressure
  /// dof of vertex 0.
  const DirichletSet& dirichlet() const { return dirichlet_; }

 private:
  Mesh mesh_;
  std::vector<Point2> nodes_;
  std::vector<std::array<int, 6>> element_nodes_;
  std::vector<signed char> node_tag_;  // -1 interior, 0 Lid, 1 Wall
  std::vector<unsigned char> multiplicity_;
  DirichletSet dirichlet_;
};

enum class FieldKind { VelocityP2, PressureP1, ScalarP2 };

/// Coefficient vector tagged with its finite-element space.
struct DiscreteField {
  FieldKind kind;
  Vector coefficients;

  static DiscreteField velocity(Vector c) { return {FieldKind::VelocityP2, std::move(c)}; }
  static DiscreteField pressure(Vector c) { return {FieldKind::PressureP1, std::move(c)}; }
  static DiscreteField scalar(Vector c) { return {FieldKind::ScalarP2, std::move(c)}; }
};

class KindError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Throws KindError unless the field matches the kind and the layout length.
void check_field(const SpaceLayout& layout, const DiscreteField& field, FieldKind expected);

using VectorFunction = std::function<std::array<double, 2>(const Point2&)>;
using ScalarFunction = std::function<double(const Point2&)>;

/// Velocity data per boundary tag. A tag without an entry is "missing".
struct BoundaryData {
  std::map<BoundaryTag, VectorFunction> by_tag;

  static BoundaryData homogeneous();
  /// Tangential lid velocity (g(x), 0) on Lid and zero on Wall.
  static BoundaryData lid_driven(std::function<double(double)> g);
};

/// Lid profile g(x) = (1 - exp(100(x - 1/2))) (1 - exp(-100(x + 1/2))).
double cavity_lid_profile(double x);

/// Values at the constrained velocity dofs, interpolated at P2 nodes; other
/// entries are zero. Throws SolverError when a boundary node has a tag with
/// no data.
Vector interpolate_boundary(const SpaceLayout& layout, const BoundaryData& data);

/// P2 interpolant of a vector field (all nodes).
Vector interpolate_velocity(const SpaceLayout& layout, const VectorFunction& u);
Vector interpolate_scalar(const SpaceLayout& layout, const ScalarFunction& s);

/// \int u . w on velocity dofs (two identical scalar blocks).
SparseMatrix assemble_mass(const SpaceLayout& layout);
/// \int grad u : grad w on velocity dofs.
SparseMatrix assemble_stiffness(const SpaceLayout& layout);
/// Rows: pressure dofs, columns: velocity dofs, entries \int q div u.
SparseMatrix assemble_divergence(const SpaceLayout& layout);
/// Entries \int (a . grad u) . w. Throws KindError if a is not a P2 velocity.
SparseMatrix assemble_convection(const SpaceLayout& layout, const DiscreteField& a);
SparseMatrix assemble_convection(const SpaceLayout& layout, const Vector& a);
/// Entries \int (u . grad y) . w, coupling both components.
SparseMatrix assemble_convection_reaction(const SpaceLayout& layout, const Vector& y);
/// C(y) + D(y): derivative of u -> C(u) u at y. The pattern always contains
/// every component coupling so it is independent of y.
SparseMatrix assemble_linearized_convection(const SpaceLayout& layout, const DiscreteField& y);
SparseMatrix assemble_linearized_convection(const SpaceLayout& layout, const Vector& y);

/// C(a) u computed element by element, without forming the matrix.
Vector convection_action(const SpaceLayout& layout, const Vector& a, const Vector& u);

/// \int f . w for a velocity test function.
Vector assemble_load(const SpaceLayout& layout, const VectorFunction& f);

/// Scalar P2 stiffness on all nodes.
SparseMatrix assemble_scalar_stiffness(const SpaceLayout& layout);
/// \int (u_2 d_1 phi - u_1 d_2 phi): weak form of \int (d_2 u_1 - d_1 u_2) phi.
Vector assemble_vorticity_load(const SpaceLayout& layout, const Vector& u);

/// Sum over triangles of \int |grad(u_h - u)|^2 with the degree-5 rule.
/// `grad` returns (du1/dx, du1/dy, du2/dx, du2/dy).
double h1_seminorm_error_squared(const SpaceLayout& layout, const Vector& u_h,
                                 const std::function<std::array<double, 4>(const Point2&)>& grad);

/// Evaluates a P2 velocity at barycentric point `bary` of triangle t.
std::array<double, 2> evaluate_velocity(const SpaceLayout& layout, const Vector& u, int t,
                                        const std::array<double, 3>& bary);

}  // namespace lsqns
