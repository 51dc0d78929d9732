#include "lsqns/fem.hpp"

#include <cmath>
#include <cstdint>
#include <unordered_map>

namespace lsqns {

namespace {

QuadratureRule make_degree4() {
  // Strang-Fix / Dunavant 6-point rule.
  const double a1 = 0.445948490915964886318329253883;
  const double w1 = 0.223381589678011465944827884465;
  const double a2 = 0.091576213509770743459571463402;
  const double w2 = 0.109951743655321867388505448868;
  QuadratureRule r;
  r.degree = 4;
  for (const auto& [a, w] : {std::pair{a1, w1}, std::pair{a2, w2}}) {
    const double b = 1.0 - 2.0 * a;
    r.points.push_back({a, a, b});
    r.points.push_back({a, b, a});
    r.points.push_back({b, a, a});
    r.weights.insert(r.weights.end(), 3, w);
  }
  return r;
}

QuadratureRule make_degree5() {
  const double s15 = std::sqrt(15.0);
  const double a1 = (6.0 - s15) / 21.0;
  const double w1 = (155.0 - s15) / 1200.0;
  const double a2 = (6.0 + s15) / 21.0;
  const double w2 = (155.0 + s15) / 1200.0;
  QuadratureRule r;
  r.degree = 5;
  r.points.push_back({1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0});
  r.weights.push_back(0.225);
  for (const auto& [a, w] : {std::pair{a1, w1}, std::pair{a2, w2}}) {
    const double b = 1.0 - 2.0 * a;
    r.points.push_back({a, a, b});
    r.points.push_back({a, b, a});
    r.points.push_back({b, a, a});
    r.weights.insert(r.weights.end(), 3, w);
  }
  return r;
}

std::uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (lo << 32) | hi;
}

/// P2 shape functions and their gradients on one triangle.
struct Element {
  double area;
  std::array<std::array<double, 2>, 3> grad_l;  // gradients of barycentric coordinates

  Element(const Point2& p0, const Point2& p1, const Point2& p2) {
    const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p1.y - p0.y) * (p2.x - p0.x);
    area = 0.5 * det;
    grad_l[0] = {(p1.y - p2.y) / det, (p2.x - p1.x) / det};
    grad_l[1] = {(p2.y - p0.y) / det, (p0.x - p2.x) / det};
    grad_l[2] = {(p0.y - p1.y) / det, (p1.x - p0.x) / det};
  }

  static std::array<double, 6> values(const std::array<double, 3>& l) {
    return {l[0] * (2 * l[0] - 1), l[1] * (2 * l[1] - 1), l[2] * (2 * l[2] - 1),
            4 * l[1] * l[2],       4 * l[2] * l[0],       4 * l[0] * l[1]};
  }

  std::array<std::array<double, 2>, 6> gradients(const std::array<double, 3>& l) const {
    std::array<std::array<double, 2>, 6> g{};
    for (int i = 0; i < 3; ++i) {
      for (int d = 0; d < 2; ++d) g[i][d] = (4 * l[i] - 1) * grad_l[i][d];
    }
    for (int e = 0; e < 3; ++e) {
      const int i = (e + 1) % 3;
      const int j = (e + 2) % 3;
      for (int d = 0; d < 2; ++d) g[3 + e][d] = 4 * (l[i] * grad_l[j][d] + l[j] * grad_l[i][d]);
    }
    return g;
  }
};

Element element_of(const SpaceLayout& layout, int t) {
  const auto& tri = layout.mesh().triangles()[t];
  const auto& v = layout.mesh().vertices();
  return Element(v[tri[0]], v[tri[1]], v[tri[2]]);
}

/// Scatters a scalar 6x6 element matrix into both velocity components.
void scatter_vector_block(const SpaceLayout& layout, int t, const ElementMatrix6& ke, std::vector<Triplet>& out) {
  const auto& nodes = layout.element_nodes(t);
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        out.emplace_back(layout.velocity_dof(nodes[i], c), layout.velocity_dof(nodes[j], c), ke(i, j));
      }
    }
  }
}

SparseMatrix from_triplets(int rows, int cols, const std::vector<Triplet>& triplets) {
  SparseMatrix m(rows, cols);
  m.setFromTriplets(triplets.begin(), triplets.end());
  m.makeCompressed();
  return m;
}

std::array<double, 2> velocity_at(const SpaceLayout& layout, const Vector& u, const std::array<int, 6>& nodes,
                                  const std::array<double, 6>& phi) {
  std::array<double, 2> val{0.0, 0.0};
  const int n = layout.n_nodes();
  for (int k = 0; k < 6; ++k) {
    val[0] += u[nodes[k]] * phi[k];
    val[1] += u[n + nodes[k]] * phi[k];
  }
  return val;
}

/// grad[c][d] = d u_c / d x_d
std::array<std::array<double, 2>, 2> velocity_gradient_at(const SpaceLayout& layout, const Vector& u,
                                                          const std::array<int, 6>& nodes,
                                                          const std::array<std::array<double, 2>, 6>& dphi) {
  std::array<std::array<double, 2>, 2> g{};
  const int n = layout.n_nodes();
  for (int k = 0; k < 6; ++k) {
    for (int c = 0; c < 2; ++c) {
      const double coef = u[c * n + nodes[k]];
      g[c][0] += coef * dphi[k][0];
      g[c][1] += coef * dphi[k][1];
    }
  }
  return g;
}

void check_velocity_length(const SpaceLayout& layout, const Vector& u, const char* what) {
  if (u.size() != layout.n_velocity_dofs()) {
    throw KindError(std::string(what) + ": expected " + std::to_string(layout.n_velocity_dofs()) +
                    " velocity coefficients, got " + std::to_string(u.size()));
  }
}

}  // namespace

const QuadratureRule& degree4_rule() {
  static const QuadratureRule rule = make_degree4();
  return rule;
}

const QuadratureRule& degree5_rule() {
  static const QuadratureRule rule = make_degree5();
  return rule;
}

ElementMatrix6 p2_element_mass(const Point2& a, const Point2& b, const Point2& c) {
  const Element el(a, b, c);
  const auto& rule = degree4_rule();
  ElementMatrix6 m = ElementMatrix6::Zero();
  for (std::size_t q = 0; q < rule.weights.size(); ++q) {
    const auto phi = Element::values(rule.points[q]);
    const double w = rule.weights[q] * el.area;
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) m(i, j) += w * (phi[i] * phi[j]);
    }
  }
  return m;
}

ElementMatrix6 p2_element_stiffness(const Point2& a, const Point2& b, const Point2& c) {
  const Element el(a, b, c);
  const auto& rule = degree4_rule();
  ElementMatrix6 k = ElementMatrix6::Zero();
  for (std::size_t q = 0; q < rule.weights.size(); ++q) {
    const auto g = el.gradients(rule.points[q]);
    const double w = rule.weights[q] * el.area;
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) k(i, j) += w * (g[i][0] * g[j][0] + g[i][1] * g[j][1]);
    }
  }
  return k;
}

SpaceLayout::SpaceLayout(Mesh mesh) : mesh_(std::move(mesh)) {
  const auto& verts = mesh_.vertices();
  nodes_.assign(verts.begin(), verts.end());
  node_tag_.assign(verts.size(), -1);
  multiplicity_.assign(verts.size(), 0);
  for (std::size_t v = 0; v < verts.size(); ++v) {
    const int vi = static_cast<int>(v);
    if (mesh_.on_boundary(vi)) node_tag_[v] = mesh_.vertex_tag(vi) == BoundaryTag::Lid ? 0 : 1;
  }
  std::unordered_map<std::uint64_t, int> edge_node;
  edge_node.reserve(3 * mesh_.n_triangles());
  element_nodes_.reserve(mesh_.n_triangles());
  for (const auto& tri : mesh_.triangles()) {
    std::array<int, 6> en{tri[0], tri[1], tri[2], 0, 0, 0};
    for (int e = 0; e < 3; ++e) {
      const int a = tri[(e + 1) % 3];
      const int b = tri[(e + 2) % 3];
      const auto [it, inserted] = edge_node.try_emplace(edge_key(a, b), static_cast<int>(nodes_.size()));
      if (inserted) {
        nodes_.push_back({0.5 * (verts[a].x + verts[b].x), 0.5 * (verts[a].y + verts[b].y)});
        node_tag_.push_back(-1);
        multiplicity_.push_back(0);
      }
      ++multiplicity_[it->second];
      en[3 + e] = it->second;
    }
    element_nodes_.push_back(en);
  }
  for (const auto& be : mesh_.boundary_edges()) {
    const int node = edge_node.at(edge_key(be.vertices[0], be.vertices[1]));
    node_tag_[node] = be.tag == BoundaryTag::Lid ? 0 : 1;
  }
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < n_nodes(); ++i) {
      if (node_tag_[i] >= 0) dirichlet_.velocity_dofs.push_back(velocity_dof(i, c));
    }
  }
  dirichlet_.pinned_pressure_dof = 0;
}

std::optional<BoundaryTag> SpaceLayout::node_tag(int node) const {
  switch (node_tag_[node]) {
    case 0:
      return BoundaryTag::Lid;
    case 1:
      return BoundaryTag::Wall;
    default:
      return std::nullopt;
  }
}

int SpaceLayout::midpoint_multiplicity(int node) const { return multiplicity_[node]; }

void check_field(const SpaceLayout& layout, const DiscreteField& field, FieldKind expected) {
  if (field.kind != expected) throw KindError("discrete field has the wrong kind");
  Eigen::Index n = 0;
  switch (expected) {
    case FieldKind::VelocityP2:
      n = layout.n_velocity_dofs();
      break;
    case FieldKind::PressureP1:
      n = layout.n_pressure_dofs();
      break;
    case FieldKind::ScalarP2:
      n = layout.n_nodes();
      break;
  }
  if (field.coefficients.size() != n) throw KindError("discrete field length does not match the layout");
}

BoundaryData BoundaryData::homogeneous() {
  BoundaryData d;
  const VectorFunction zero = [](const Point2&) { return std::array<double, 2>{0.0, 0.0}; };
  d.by_tag[BoundaryTag::Lid] = zero;
  d.by_tag[BoundaryTag::Wall] = zero;
  return d;
}

BoundaryData BoundaryData::lid_driven(std::function<double(double)> g) {
  BoundaryData d = homogeneous();
  d.by_tag[BoundaryTag::Lid] = [g = std::move(g)](const Point2& p) { return std::array<double, 2>{g(p.x), 0.0}; };
  return d;
}

double cavity_lid_profile(double x) {
  return (1.0 - std::exp(100.0 * (x - 0.5))) * (1.0 - std::exp(-100.0 * (x + 0.5)));
}

Vector interpolate_boundary(const SpaceLayout& layout, const BoundaryData& data) {
  Vector values = Vector::Zero(layout.n_velocity_dofs());
  for (int i = 0; i < layout.n_nodes(); ++i) {
    const auto tag = layout.node_tag(i);
    if (!tag) continue;
    const auto it = data.by_tag.find(*tag);
    if (it == data.by_tag.end() || !it->second) {
      throw SolverError(std::string("missing boundary value for ") + (*tag == BoundaryTag::Lid ? "Lid" : "Wall") +
                        " node " + std::to_string(i));
    }
    const auto v = it->second(layout.node_point(i));
    values[layout.velocity_dof(i, 0)] = v[0];
    values[layout.velocity_dof(i, 1)] = v[1];
  }
  return values;
}

Vector interpolate_velocity(const SpaceLayout& layout, const VectorFunction& u) {
  Vector values(layout.n_velocity_dofs());
  for (int i = 0; i < layout.n_nodes(); ++i) {
    const auto v = u(layout.node_point(i));
    values[layout.velocity_dof(i, 0)] = v[0];
    values[layout.velocity_dof(i, 1)] = v[1];
  }
  return values;
}

Vector interpolate_scalar(const SpaceLayout& layout, const ScalarFunction& s) {
  Vector values(layout.n_nodes());
  for (int i = 0; i < layout.n_nodes(); ++i) values[i] = s(layout.node_point(i));
  return values;
}

SparseMatrix assemble_mass(const SpaceLayout& layout) {
  std::vector<Triplet> triplets;
  triplets.reserve(72 * layout.n_triangles());
  const auto& v = layout.mesh().vertices();
  for (int t = 0; t < layout.n_triangles(); ++t) {
    const auto& tri = layout.mesh().triangles()[t];
    scatter_vector_block(layout, t, p2_element_mass(v[tri[0]], v[tri[1]], v[tri[2]]), triplets);
  }
  return from_triplets(layout.n_velocity_dofs(), layout.n_velocity_dofs(), triplets);
}

SparseMatrix assemble_stiffness(const SpaceLayout& layout) {
  std::vector<Triplet> triplets;
  triplets.reserve(72 * layout.n_triangles());
  const auto& v = layout.mesh().vertices();
  for (int t = 0; t < layout.n_triangles(); ++t) {
    const auto& tri = layout.mesh().triangles()[t];
    scatter_vector_block(layout, t, p2_element_stiffness(v[tri[0]], v[tri[1]], v[tri[2]]), triplets);
  }
  return from_triplets(layout.n_velocity_dofs(), layout.n_velocity_dofs(), triplets);
}

SparseMatrix assemble_divergence(const SpaceLayout& layout) {
  std::vector<Triplet> triplets;
  triplets.reserve(36 * layout.n_triangles());
  const auto& rule = degree4_rule();
  for (int t = 0; t < layout.n_triangles(); ++t) {
    const Element el = element_of(layout, t);
    const auto& tri = layout.mesh().triangles()[t];
    const auto& nodes = layout.element_nodes(t);
    Eigen::Matrix<double, 3, 12> be = Eigen::Matrix<double, 3, 12>::Zero();
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto& l = rule.points[q];
      const auto g = el.gradients(l);
      const double w = rule.weights[q] * el.area;
      for (int p = 0; p < 3; ++p) {
        for (int j = 0; j < 6; ++j) {
          be(p, j) += w * l[p] * g[j][0];
          be(p, 6 + j) += w * l[p] * g[j][1];
        }
      }
    }
    for (int p = 0; p < 3; ++p) {
      for (int c = 0; c < 2; ++c) {
        for (int j = 0; j < 6; ++j) triplets.emplace_back(tri[p], layout.velocity_dof(nodes[j], c), be(p, 6 * c + j));
      }
    }
  }
  return from_triplets(layout.n_pressure_dofs(), layout.n_velocity_dofs(), triplets);
}

SparseMatrix assemble_convection(const SpaceLayout& layout, const DiscreteField& a) {
  check_field(layout, a, FieldKind::VelocityP2);
  return assemble_convection(layout, a.coefficients);
}

SparseMatrix assemble_convection(const SpaceLayout& layout, const Vector& a) {
  check_velocity_length(layout, a, "assemble_convection");
  std::vector<Triplet> triplets;
  triplets.reserve(72 * layout.n_triangles());
  const auto& rule = degree5_rule();
  for (int t = 0; t < layout.n_triangles(); ++t) {
    const Element el = element_of(layout, t);
    const auto& nodes = layout.element_nodes(t);
    ElementMatrix6 ce = ElementMatrix6::Zero();
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto phi = Element::values(rule.points[q]);
      const auto g = el.gradients(rule.points[q]);
      const auto aq = velocity_at(layout, a, nodes, phi);
      const double w = rule.weights[q] * el.area;
      for (int j = 0; j < 6; ++j) {
        const double adv = w * (aq[0] * g[j][0] + aq[1] * g[j][1]);
        for (int i = 0; i < 6; ++i) ce(i, j) += adv * phi[i];
      }
    }
    scatter_vector_block(layout, t, ce, triplets);
  }
  return from_triplets(layout.n_velocity_dofs(), layout.n_velocity_dofs(), triplets);
}

SparseMatrix assemble_convection_reaction(const SpaceLayout& layout, const Vector& y) {
  check_velocity_length(layout, y, "assemble_convection_reaction");
  std::vector<Triplet> triplets;
  triplets.reserve(144 * layout.n_triangles());
  const auto& rule = degree5_rule();
  for (int t = 0; t < layout.n_triangles(); ++t) {
    const Element el = element_of(layout, t);
    const auto& nodes = layout.element_nodes(t);
    // de[c][d](i, j) = \int phi_j d_d y_c phi_i
    std::array<std::array<ElementMatrix6, 2>, 2> de;
    for (auto& row : de) {
      for (auto& m : row) m.setZero();
    }
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto phi = Element::values(rule.points[q]);
      const auto gy = velocity_gradient_at(layout, y, nodes, el.gradients(rule.points[q]));
      const double w = rule.weights[q] * el.area;
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
          const double pp = w * phi[i] * phi[j];
          for (int c = 0; c < 2; ++c) {
            for (int d = 0; d < 2; ++d) de[c][d](i, j) += pp * gy[c][d];
          }
        }
      }
    }
    for (int c = 0; c < 2; ++c) {
      for (int d = 0; d < 2; ++d) {
        for (int i = 0; i < 6; ++i) {
          for (int j = 0; j < 6; ++j) {
            triplets.emplace_back(layout.velocity_dof(nodes[i], c), layout.velocity_dof(nodes[j], d), de[c][d](i, j));
          }
        }
      }
    }
  }
  return from_triplets(layout.n_velocity_dofs(), layout.n_velocity_dofs(), triplets);
}

SparseMatrix assemble_linearized_convection(const SpaceLayout& layout, const DiscreteField& y) {
  check_field(layout, y, FieldKind::VelocityP2);
  return assemble_linearized_convection(layout, y.coefficients);
}

SparseMatrix assemble_linearized_convection(const SpaceLayout& layout, const Vector& y) {
  check_velocity_length(layout, y, "assemble_linearized_convection");
  std::vector<Triplet> triplets;
  triplets.reserve(144 * layout.n_triangles());
  const auto& rule = degree5_rule();
  for (int t = 0; t < layout.n_triangles(); ++t) {
    const Element el = element_of(layout, t);
    const auto& nodes = layout.element_nodes(t);
    Eigen::Matrix<double, 12, 12> le = Eigen::Matrix<double, 12, 12>::Zero();
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto phi = Element::values(rule.points[q]);
      const auto g = el.gradients(rule.points[q]);
      const auto yq = velocity_at(layout, y, nodes, phi);
      const auto gy = velocity_gradient_at(layout, y, nodes, g);
      const double w = rule.weights[q] * el.area;
      for (int i = 0; i < 6; ++i) {
        for (int j = 0; j < 6; ++j) {
          const double conv = w * (yq[0] * g[j][0] + yq[1] * g[j][1]) * phi[i];
          const double pp = w * phi[i] * phi[j];
          for (int c = 0; c < 2; ++c) {
            le(6 * c + i, 6 * c + j) += conv;
            for (int d = 0; d < 2; ++d) le(6 * c + i, 6 * d + j) += pp * gy[c][d];
          }
        }
      }
    }
    for (int c = 0; c < 2; ++c) {
      for (int i = 0; i < 6; ++i) {
        const int row = layout.velocity_dof(nodes[i], c);
        for (int d = 0; d < 2; ++d) {
          for (int j = 0; j < 6; ++j) triplets.emplace_back(row, layout.velocity_dof(nodes[j], d), le(6 * c + i, 6 * d + j));
        }
      }
    }
  }
  return from_triplets(layout.n_velocity_dofs(), layout.n_velocity_dofs(), triplets);
}

Vector convection_action(const SpaceLayout& layout, const Vector& a, const Vector& u) {
  check_velocity_length(layout, a, "convection_action");
  check_velocity_length(layout, u, "convection_action");
  Vector out = Vector::Zero(layout.n_velocity_dofs());
  const auto& rule = degree5_rule();
  const int n = layout.n_nodes();
  for (int t = 0; t < layout.n_triangles(); ++t) {
    const Element el = element_of(layout, t);
    const auto& nodes = layout.element_nodes(t);
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto phi = Element::values(rule.points[q]);
      const auto aq = velocity_at(layout, a, nodes, phi);
      const auto gu = velocity_gradient_at(layout, u, nodes, el.gradients(rule.points[q]));
      const double w = rule.weights[q] * el.area;
      const double r0 = w * (aq[0] * gu[0][0] + aq[1] * gu[0][1]);
      const double r1 = w * (aq[0] * gu[1][0] + aq[1] * gu[1][1]);
      for (int i = 0; i < 6; ++i) {
        out[nodes[i]] += r0 * phi[i];
        out[n + nodes[i]] += r1 * phi[i];
      }
    }
  }
  return out;
}

Vector assemble_load(const SpaceLayout& layout, const VectorFunction& f) {
  Vector out = Vector::Zero(layout.n_velocity_dofs());
  const auto& rule = degree5_rule();
  const auto& verts = layout.mesh().vertices();
  const int n = layout.n_nodes();
  for (int t = 0; t < layout.n_triangles(); ++t) {
    const Element el = element_of(layout, t);
    const auto& tri = layout.mesh().triangles()[t];
    const auto& nodes = layout.element_nodes(t);
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto& l = rule.points[q];
      const Point2 x{l[0] * verts[tri[0]].x + l[1] * verts[tri[1]].x + l[2] * verts[tri[2]].x,
                     l[0] * verts[tri[0]].y + l[1] * verts[tri[1]].y + l[2] * verts[tri[2]].y};
      const auto fx = f(x);
      const auto phi = Element::values(l);
      const double w = rule.weights[q] * el.area;
      for (int i = 0; i < 6; ++i) {
        out[nodes[i]] += w * fx[0] * phi[i];
        out[n + nodes[i]] += w * fx[1] * phi[i];
      }
    }
  }
  return out;
}

SparseMatrix assemble_scalar_stiffness(const SpaceLayout& layout) {
  std::vector<Triplet> triplets;
  triplets.reserve(36 * layout.n_triangles());
  const auto& v = layout.mesh().vertices();
  for (int t = 0; t < layout.n_triangles(); ++t) {
    const auto& tri = layout.mesh().triangles()[t];
    const auto ke = p2_element_stiffness(v[tri[0]], v[tri[1]], v[tri[2]]);
    const auto& nodes = layout.element_nodes(t);
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) triplets.emplace_back(nodes[i], nodes[j], ke(i, j));
    }
  }
  return from_triplets(layout.n_nodes(), layout.n_nodes(), triplets);
}

Vector assemble_vorticity_load(const SpaceLayout& layout, const Vector& u) {
  check_velocity_length(layout, u, "assemble_vorticity_load");
  Vector out = Vector::Zero(layout.n_nodes());
  const auto& rule = degree4_rule();
  for (int t = 0; t < layout.n_triangles(); ++t) {
    const Element el = element_of(layout, t);
    const auto& nodes = layout.element_nodes(t);
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto phi = Element::values(rule.points[q]);
      const auto g = el.gradients(rule.points[q]);
      const auto uq = velocity_at(layout, u, nodes, phi);
      const double w = rule.weights[q] * el.area;
      for (int i = 0; i < 6; ++i) out[nodes[i]] += w * (uq[1] * g[i][0] - uq[0] * g[i][1]);
    }
  }
  return out;
}

double h1_seminorm_error_squared(const SpaceLayout& layout, const Vector& u_h,
                                 const std::function<std::array<double, 4>(const Point2&)>& grad) {
  check_velocity_length(layout, u_h, "h1_seminorm_error_squared");
  const auto& rule = degree5_rule();
  const auto& verts = layout.mesh().vertices();
  double sum = 0.0;
  for (int t = 0; t < layout.n_triangles(); ++t) {
    const Element el = element_of(layout, t);
    const auto& tri = layout.mesh().triangles()[t];
    const auto& nodes = layout.element_nodes(t);
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto& l = rule.points[q];
      const Point2 x{l[0] * verts[tri[0]].x + l[1] * verts[tri[1]].x + l[2] * verts[tri[2]].x,
                     l[0] * verts[tri[0]].y + l[1] * verts[tri[1]].y + l[2] * verts[tri[2]].y};
      const auto gh = velocity_gradient_at(layout, u_h, nodes, el.gradients(l));
      const auto ge = grad(x);
      const double e00 = gh[0][0] - ge[0];
      const double e01 = gh[0][1] - ge[1];
      const double e10 = gh[1][0] - ge[2];
      const double e11 = gh[1][1] - ge[3];
      sum += rule.weights[q] * el.area * (e00 * e00 + e01 * e01 + e10 * e10 + e11 * e11);
    }
  }
  return sum;
}

std::array<double, 2> evaluate_velocity(const SpaceLayout& layout, const Vector& u, int t,
                                        const std::array<double, 3>& bary) {
  check_velocity_length(layout, u, "evaluate_velocity");
  return velocity_at(layout, u, layout.element_nodes(t), Element::values(bary));
}

}  // namespace lsqns
