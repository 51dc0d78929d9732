#include "lsqns/fem.hpp"

#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace lsqns;

namespace {

// Exact P2 element matrices of the triangle (0.1,0.2), (1.3,0.4), (0.5,1.7),
// integrated symbolically in rational arithmetic.
const double kMassOracle[6][6] = {
    {0.028666666666666667, -0.0047777777777777775, -0.0047777777777777775, -0.01911111111111111, 0, 0},
    {-0.0047777777777777775, 0.028666666666666667, -0.0047777777777777775, 0, -0.01911111111111111, 0},
    {-0.0047777777777777775, -0.0047777777777777775, 0.028666666666666667, 0, 0, -0.01911111111111111},
    {-0.01911111111111111, 0, 0, 0.15288888888888888, 0.07644444444444444, 0.07644444444444444},
    {0, -0.01911111111111111, 0, 0.07644444444444444, 0.15288888888888888, 0.07644444444444444},
    {0, 0, -0.01911111111111111, 0.07644444444444444, 0.07644444444444444, 0.15288888888888888},
};
const double kStiffnessOracle[6][6] = {
    {0.67732558139534882, 0.15794573643410853, 0.067829457364341081, 0, -0.27131782945736432, -0.63178294573643412},
    {0.15794573643410853, 0.70058139534883723, 0.075581395348837205, -0.30232558139534882, 0, -0.63178294573643412},
    {0.067829457364341081, 0.075581395348837205, 0.43023255813953487, -0.30232558139534882, -0.27131782945736432, 0},
    {0, -0.30232558139534882, -0.30232558139534882, 2.4108527131782944, -1.2635658914728682, -0.54263565891472865},
    {-0.27131782945736432, 0, -0.27131782945736432, -1.2635658914728682, 2.4108527131782944, -0.60465116279069764},
    {-0.63178294573643412, -0.63178294573643412, 0, -0.54263565891472865, -0.60465116279069764, 2.4108527131782944},
};

const Point2 kA{0.1, 0.2};
const Point2 kB{1.3, 0.4};
const Point2 kC{0.5, 1.7};

Vector random_vector(Eigen::Index n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = dist(gen);
  return v;
}

/// Random velocity vanishing on the boundary.
Vector random_interior_velocity(const SpaceLayout& layout, unsigned seed) {
  Vector v = random_vector(layout.n_velocity_dofs(), seed);
  for (int d : layout.dirichlet().velocity_dofs) v[d] = 0.0;
  return v;
}

double max_abs(const SparseMatrix& m) {
  double out = 0.0;
  for (int k = 0; k < m.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(m, k); it; ++it) out = std::max(out, std::abs(it.value()));
  }
  return out;
}

}  // namespace

TEST(Quadrature, ExactForPolynomials) {
  // Integral of l0^i l1^j l2^k over the unit-area simplex is 2 i! j! k! / (i+j+k+2)!.
  auto exact = [](int i, int j, int k) {
    return 2.0 * std::tgamma(i + 1) * std::tgamma(j + 1) * std::tgamma(k + 1) / std::tgamma(i + j + k + 3);
  };
  for (const auto* rule : {&degree4_rule(), &degree5_rule()}) {
    double wsum = 0.0;
    for (double w : rule->weights) wsum += w;
    EXPECT_NEAR(wsum, 1.0, 1e-15);
    for (int i = 0; i <= rule->degree; ++i) {
      for (int j = 0; i + j <= rule->degree; ++j) {
        for (int k = 0; i + j + k <= rule->degree; ++k) {
          double q = 0.0;
          for (std::size_t p = 0; p < rule->points.size(); ++p) {
            const auto& b = rule->points[p];
            q += rule->weights[p] * std::pow(b[0], i) * std::pow(b[1], j) * std::pow(b[2], k);
          }
          EXPECT_NEAR(q, exact(i, j, k), 1e-15) << i << j << k << " degree " << rule->degree;
        }
      }
    }
  }
}

TEST(ElementMatrices, MatchAnalyticOracle) {
  const ElementMatrix6 m = p2_element_mass(kA, kB, kC);
  const ElementMatrix6 k = p2_element_stiffness(kA, kB, kC);
  for (int i = 0; i < 6; ++i) {
    for (int j = 0; j < 6; ++j) {
      EXPECT_NEAR(m(i, j), kMassOracle[i][j], 1e-12);
      EXPECT_NEAR(k(i, j), kStiffnessOracle[i][j], 1e-12);
    }
  }
}

TEST(ElementMatrices, ReferenceMassScalesWithArea) {
  const ElementMatrix6 ref = p2_element_mass({0, 0}, {1, 0}, {0, 1});
  const ElementMatrix6 big = p2_element_mass({0, 0}, {3, 0}, {0, 3});
  EXPECT_LE((big - 9.0 * ref).cwiseAbs().maxCoeff(), 1e-14);
  // Known entries of the reference P2 mass matrix: vertex diagonal 1/60, midpoint diagonal 4/45.
  EXPECT_NEAR(ref(0, 0), 1.0 / 60.0, 1e-15);
  EXPECT_NEAR(ref(3, 3), 4.0 / 45.0, 1e-15);
  EXPECT_NEAR(ref(0, 1), -1.0 / 360.0, 1e-15);
  EXPECT_NEAR(ref(0, 3), -1.0 / 90.0, 1e-15);
  EXPECT_NEAR(ref(3, 4), 2.0 / 45.0, 1e-15);
}

class UnitSquareFem : public ::testing::Test {
 protected:
  SpaceLayout layout{generate_unit_square(3)};
};

TEST_F(UnitSquareFem, LayoutCounts) {
  const Mesh& m = layout.mesh();
  // Euler: edges = vertices + triangles - 1 for a simply connected domain.
  const int edges = static_cast<int>(m.n_vertices() + m.n_triangles()) - 1;
  EXPECT_EQ(layout.n_nodes(), static_cast<int>(m.n_vertices()) + edges);
  EXPECT_EQ(layout.n_velocity_dofs(), 2 * layout.n_nodes());
  EXPECT_EQ(layout.n_pressure_dofs(), static_cast<int>(m.n_vertices()));
  for (int i = static_cast<int>(m.n_vertices()); i < layout.n_nodes(); ++i) {
    const int mult = layout.midpoint_multiplicity(i);
    EXPECT_TRUE(mult == 1 || mult == 2);
    EXPECT_EQ(mult == 1, layout.node_tag(i).has_value());
  }
}

TEST_F(UnitSquareFem, DirichletSetIsBoundaryNodes) {
  std::vector<int> expected;
  for (int c = 0; c < 2; ++c) {
    for (int i = 0; i < layout.n_nodes(); ++i) {
      const Point2& p = layout.node_point(i);
      const bool boundary = p.x == 0.0 || p.x == 1.0 || p.y == 0.0 || p.y == 1.0;
      if (boundary) expected.push_back(layout.velocity_dof(i, c));
    }
  }
  std::sort(expected.begin(), expected.end());
  EXPECT_EQ(layout.dirichlet().velocity_dofs, expected);
  EXPECT_EQ(layout.dirichlet().pinned_pressure_dof, 0);
}

TEST_F(UnitSquareFem, MassOfConstant) {
  const SparseMatrix m = assemble_mass(layout);
  const Vector u = interpolate_velocity(layout, [](const Point2&) { return std::array<double, 2>{1.0, 0.0}; });
  EXPECT_NEAR(u.dot(m * u), 1.0, 1e-10);
  EXPECT_EQ(max_abs(SparseMatrix(m - SparseMatrix(m.transpose()))), 0.0);
}

TEST_F(UnitSquareFem, StiffnessKernelAndLinearField) {
  const SparseMatrix k = assemble_stiffness(layout);
  const Vector one = Vector::Ones(layout.n_velocity_dofs());
  EXPECT_LE((k * one).cwiseAbs().maxCoeff(), 1e-12);
  const Vector u = interpolate_velocity(layout, [](const Point2& p) { return std::array<double, 2>{p.x, 0.0}; });
  EXPECT_NEAR(u.dot(k * u), 1.0, 1e-10);
  EXPECT_EQ(max_abs(SparseMatrix(k - SparseMatrix(k.transpose()))), 0.0);
}

TEST_F(UnitSquareFem, Divergence) {
  const SparseMatrix b = assemble_divergence(layout);
  EXPECT_EQ(b.rows(), layout.n_pressure_dofs());
  EXPECT_EQ(b.cols(), layout.n_velocity_dofs());
  const Vector rot = interpolate_velocity(layout, [](const Point2& p) { return std::array<double, 2>{-p.y, p.x}; });
  EXPECT_LE((b * rot).cwiseAbs().maxCoeff(), 1e-10);
  const Vector ones = Vector::Ones(layout.n_pressure_dofs());
  const Vector ux = interpolate_velocity(layout, [](const Point2& p) { return std::array<double, 2>{p.x, 0.0}; });
  EXPECT_NEAR(ones.dot(b * ux), 1.0, 1e-10);
  const Vector c = interpolate_velocity(layout, [](const Point2&) { return std::array<double, 2>{0.3, -0.7}; });
  EXPECT_NEAR(ones.dot(b * c), 0.0, 1e-12);
}

TEST_F(UnitSquareFem, ConvectionLinearAndZero) {
  const Vector zero = Vector::Zero(layout.n_velocity_dofs());
  EXPECT_EQ(max_abs(assemble_convection(layout, zero)), 0.0);
  EXPECT_EQ(max_abs(assemble_linearized_convection(layout, zero)), 0.0);
  const Vector a1 = random_vector(layout.n_velocity_dofs(), 1);
  const Vector a2 = random_vector(layout.n_velocity_dofs(), 2);
  const SparseMatrix sum = assemble_convection(layout, Vector(a1 + a2));
  const SparseMatrix parts = assemble_convection(layout, a1) + assemble_convection(layout, a2);
  EXPECT_LE(max_abs(SparseMatrix(sum - parts)), 1e-12);
  EXPECT_THROW(assemble_convection(layout, DiscreteField::pressure(Vector::Zero(layout.n_pressure_dofs()))),
               KindError);
  EXPECT_THROW(assemble_convection(layout, DiscreteField::velocity(Vector::Zero(3))), KindError);
}

TEST_F(UnitSquareFem, ConvectionSkewSymmetryOracle) {
  // For u vanishing on the boundary, u^T C(a) u = -1/2 int (div a) |u|^2.
  // The right side is integrated here independently, with P2 shape
  // functions written out in barycentric form.
  const Vector a = interpolate_velocity(layout, [](const Point2& p) {
    const double bx = p.x * p.x * (1 - p.x) * (1 - p.x);
    const double by = p.y * p.y * (1 - p.y) * (1 - p.y);
    const double dbx = 2 * p.x * (1 - p.x) * (1 - 2 * p.x);
    const double dby = 2 * p.y * (1 - p.y) * (1 - 2 * p.y);
    return std::array<double, 2>{bx * dby, -dbx * by};
  });
  const Vector u = random_interior_velocity(layout, 3);
  const int n = layout.n_nodes();
  double oracle = 0.0;
  const auto& rule = degree5_rule();
  for (int t = 0; t < layout.n_triangles(); ++t) {
    const auto& nodes = layout.element_nodes(t);
    const Point2 p0 = layout.node_point(nodes[0]);
    const Point2 p1 = layout.node_point(nodes[1]);
    const Point2 p2 = layout.node_point(nodes[2]);
    const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
    const double gl[3][2] = {{(p1.y - p2.y) / det, (p2.x - p1.x) / det},
                             {(p2.y - p0.y) / det, (p0.x - p2.x) / det},
                             {(p0.y - p1.y) / det, (p1.x - p0.x) / det}};
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const auto& l = rule.points[q];
      double phi[6];
      double grad[6][2];
      for (int i = 0; i < 3; ++i) {
        phi[i] = l[i] * (2 * l[i] - 1);
        for (int d = 0; d < 2; ++d) grad[i][d] = (4 * l[i] - 1) * gl[i][d];
      }
      for (int e = 0; e < 3; ++e) {
        const int i = (e + 1) % 3;
        const int j = (e + 2) % 3;
        phi[3 + e] = 4 * l[i] * l[j];
        for (int d = 0; d < 2; ++d) grad[3 + e][d] = 4 * (l[i] * gl[j][d] + l[j] * gl[i][d]);
      }
      double div = 0.0;
      double u1 = 0.0;
      double u2 = 0.0;
      for (int k = 0; k < 6; ++k) {
        div += a[nodes[k]] * grad[k][0] + a[n + nodes[k]] * grad[k][1];
        u1 += u[nodes[k]] * phi[k];
        u2 += u[n + nodes[k]] * phi[k];
      }
      oracle += -0.5 * rule.weights[q] * 0.5 * det * div * (u1 * u1 + u2 * u2);
    }
  }
  const double value = u.dot(assemble_convection(layout, a) * u);
  EXPECT_NEAR(value, oracle, 1e-12 * (1.0 + std::abs(oracle)));
  EXPECT_LE(std::abs(value), 1e-2 * a.norm() * u.squaredNorm());
}

TEST_F(UnitSquareFem, LinearizedConvectionIsDerivative) {
  const Vector y = random_vector(layout.n_velocity_dofs(), 4);
  const Vector u = random_vector(layout.n_velocity_dofs(), 5);
  const SparseMatrix l = assemble_linearized_convection(layout, y);
  const Vector base = convection_action(layout, y, y);
  double previous = 0.0;
  for (double eps : {1e-2, 1e-3, 1e-4}) {
    const Vector shifted = y + eps * u;
    const Vector fd = (convection_action(layout, shifted, shifted) - base) / eps;
    const double err = (fd - l * u).norm();
    // The map is quadratic: the remainder is exactly eps C(u) u.
    EXPECT_NEAR(err, eps * convection_action(layout, u, u).norm(), 1e-7 * (1 + err));
    if (previous > 0.0) EXPECT_LT(err, 0.2 * previous);
    previous = err;
  }
}

TEST_F(UnitSquareFem, LinearizedEqualsConvectionPlusReaction) {
  const Vector y = random_vector(layout.n_velocity_dofs(), 6);
  const SparseMatrix l = assemble_linearized_convection(layout, y);
  const SparseMatrix cd = assemble_convection(layout, y) + assemble_convection_reaction(layout, y);
  EXPECT_LE(max_abs(SparseMatrix(l - cd)), 1e-13);
  // Pattern independent of y.
  const SparseMatrix l0 = assemble_linearized_convection(layout, Vector::Zero(layout.n_velocity_dofs()));
  EXPECT_EQ(l.nonZeros(), l0.nonZeros());
}

TEST_F(UnitSquareFem, ConvectionActionMatchesMatrix) {
  const Vector a = random_vector(layout.n_velocity_dofs(), 7);
  const Vector u = random_vector(layout.n_velocity_dofs(), 8);
  EXPECT_LE((convection_action(layout, a, u) - assemble_convection(layout, a) * u).cwiseAbs().maxCoeff(), 1e-13);
}

TEST_F(UnitSquareFem, AssemblyIsDeterministic) {
  const Vector a = random_vector(layout.n_velocity_dofs(), 9);
  const SparseMatrix l1 = assemble_linearized_convection(layout, a);
  const SparseMatrix l2 = assemble_linearized_convection(layout, a);
  ASSERT_EQ(l1.nonZeros(), l2.nonZeros());
  for (int i = 0; i < l1.nonZeros(); ++i) {
    EXPECT_EQ(l1.valuePtr()[i], l2.valuePtr()[i]);
    EXPECT_EQ(l1.innerIndexPtr()[i], l2.innerIndexPtr()[i]);
  }
}

TEST_F(UnitSquareFem, LoadOfConstant) {
  const Vector f = assemble_load(layout, [](const Point2&) { return std::array<double, 2>{2.0, -1.0}; });
  const int n = layout.n_nodes();
  EXPECT_NEAR(f.head(n).sum(), 2.0, 1e-13);
  EXPECT_NEAR(f.tail(n).sum(), -1.0, 1e-13);
}

TEST_F(UnitSquareFem, H1ErrorOfInterpolantOfQuadratic) {
  auto u = [](const Point2& p) { return std::array<double, 2>{p.x * p.x, p.x * p.y}; };
  auto g = [](const Point2& p) { return std::array<double, 4>{2 * p.x, 0.0, p.y, p.x}; };
  const Vector uh = interpolate_velocity(layout, u);
  EXPECT_LE(h1_seminorm_error_squared(layout, uh, g), 1e-24);
  const Vector zero = Vector::Zero(layout.n_velocity_dofs());
  // int 4x^2 + y^2 + x^2 over the unit square = 4/3 + 1/3 + 1/3.
  EXPECT_NEAR(h1_seminorm_error_squared(layout, zero, g), 2.0, 1e-12);
}

TEST_F(UnitSquareFem, EvaluateVelocityAtMidpointIsNodal) {
  const Vector u = random_vector(layout.n_velocity_dofs(), 10);
  const auto& nodes = layout.element_nodes(5);
  const auto val = evaluate_velocity(layout, u, 5, {0.0, 0.5, 0.5});
  EXPECT_NEAR(val[0], u[layout.velocity_dof(nodes[3], 0)], 1e-15);
  EXPECT_NEAR(val[1], u[layout.velocity_dof(nodes[3], 1)], 1e-15);
}

TEST(BoundaryData, LidProfileAndInterpolation) {
  EXPECT_NEAR(cavity_lid_profile(0.0), std::pow(1.0 - std::exp(-50.0), 2), 1e-15);
  EXPECT_NEAR(cavity_lid_profile(0.5), 0.0, 1e-15);
  EXPECT_NEAR(cavity_lid_profile(-0.5), 0.0, 1e-15);
  const SpaceLayout layout(generate_semidisk(0.1));
  const Vector bv = interpolate_boundary(layout, BoundaryData::lid_driven(cavity_lid_profile));
  bool found = false;
  for (int i = 0; i < layout.n_nodes(); ++i) {
    const Point2& p = layout.node_point(i);
    if (p.x == 0.0 && p.y == 0.0) {
      found = true;
      EXPECT_NEAR(bv[layout.velocity_dof(i, 0)], cavity_lid_profile(0.0), 1e-10);
      EXPECT_EQ(bv[layout.velocity_dof(i, 1)], 0.0);
    }
  }
  EXPECT_TRUE(found);
  BoundaryData missing;
  missing.by_tag[BoundaryTag::Lid] = [](const Point2&) { return std::array<double, 2>{1.0, 0.0}; };
  EXPECT_THROW(interpolate_boundary(layout, missing), SolverError);
}

TEST(ScalarP2, StiffnessAndVorticityLoad) {
  const SpaceLayout layout(generate_unit_square(2));
  const SparseMatrix k = assemble_scalar_stiffness(layout);
  EXPECT_EQ(k.rows(), layout.n_nodes());
  EXPECT_LE((k * Vector::Ones(layout.n_nodes())).cwiseAbs().maxCoeff(), 1e-12);
  // Rigid rotation: curl-type load equals -2 int phi for interior test functions.
  const Vector rot = interpolate_velocity(layout, [](const Point2& p) { return std::array<double, 2>{-p.y, p.x}; });
  const Vector load = assemble_vorticity_load(layout, rot);
  const Vector one = interpolate_scalar(layout, [](const Point2&) { return 1.0; });
  const SparseMatrix m = assemble_mass(layout);
  const Vector mass_one = (m * Vector(Vector::Ones(layout.n_velocity_dofs()))).head(layout.n_nodes());
  for (int i = 0; i < layout.n_nodes(); ++i) {
    if (!layout.node_tag(i)) EXPECT_NEAR(load[i], -2.0 * mass_one[i], 1e-13);
  }
  EXPECT_EQ(one.size(), layout.n_nodes());
}
