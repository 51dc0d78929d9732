#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace lsqns {

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

/// Boundary portion a boundary edge or vertex belongs to.
/// Lid carries the prescribed tangential velocity, Wall is no-slip.
enum class BoundaryTag { Lid, Wall };

struct BoundaryEdge {
  std::array<int, 2> vertices;
  BoundaryTag tag;
};

class MeshError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parse failure in a Triangle-format file; `line()` is 1-based, 0 when unknown.
class MeshParseError : public MeshError {
 public:
  MeshParseError(const std::string& what, std::size_t line);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Immutable 2D triangulation with tagged boundary.
///
/// Triangles are stored counterclockwise. Boundary edges are the edges that
/// appear in exactly one triangle, listed in a canonical order (by owning
/// triangle, then local edge index) so that every construction path that
/// yields the same connectivity also yields the same edge list.
class Mesh {
 public:
  Mesh() = default;

  /// Builds a mesh from raw connectivity. Clockwise triangles are reoriented.
  /// `tag_edge(a, b)` receives the endpoint indices of each boundary edge.
  /// Throws MeshError when an invariant is violated (index range, degenerate
  /// triangle, edge shared by more than two triangles).
  template <class Tagger>
  static Mesh from_connectivity(std::vector<Point2> vertices,
                                std::vector<std::array<int, 3>> triangles,
                                Tagger&& tag_edge) {
    Mesh m;
    m.vertices_ = std::move(vertices);
    m.triangles_ = std::move(triangles);
    m.orient_and_validate();
    for (const auto& e : m.find_boundary_edges()) {
      m.boundary_edges_.push_back({e, tag_edge(e[0], e[1])});
    }
    m.finish();
    return m;
  }

  const std::vector<Point2>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const std::vector<BoundaryEdge>& boundary_edges() const { return boundary_edges_; }

  std::size_t n_vertices() const { return vertices_.size(); }
  std::size_t n_triangles() const { return triangles_.size(); }

  /// Signed area of triangle t (positive for every stored triangle).
  double signed_area(std::size_t t) const;
  double total_area() const;
  double max_edge_length() const;

  /// True if the vertex lies on the boundary.
  bool on_boundary(int vertex) const { return vertex_on_boundary_[vertex]; }
  /// Tag of a boundary vertex: Lid if any incident boundary edge is Lid.
  BoundaryTag vertex_tag(int vertex) const;

  /// Edges that occur in exactly one triangle, recomputed from connectivity.
  std::vector<std::array<int, 2>> find_boundary_edges() const;

 private:
  void orient_and_validate();
  void finish();

  std::vector<Point2> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<BoundaryEdge> boundary_edges_;
  std::vector<bool> vertex_on_boundary_;
  std::vector<bool> vertex_on_lid_;
};

/// Structured crossed mesh of [0,1]^2: every cell is split into four
/// triangles through its center. All boundary edges are Wall.
Mesh generate_unit_square(int n);

/// Half-disk {x^2+y^2 <= 1/4, y <= 0} built from concentric polygonal rings.
/// `h_target` plays the role of the mesh diameter: the radial spacing is
/// h_target/sqrt(3), which yields triangles whose longest edge stays below
/// h_target. The straight segment y = 0 is Lid, the arc is Wall.
Mesh generate_semidisk(double h_target);

/// Maps Triangle boundary markers to tags.
using BoundaryTagMap = std::map<int, BoundaryTag>;

/// Default marker convention used by the writer: 1 = Lid, 2 = Wall.
BoundaryTagMap default_tag_map();

/// Reads the 2D, attribute-free subset of the Triangle `.node`/`.ele` format.
///
/// Boundary edges are recovered from connectivity. An edge is tagged Lid when
/// both endpoint markers map to Lid, otherwise Wall; a boundary vertex whose
/// marker is missing from `tag_map` is an error. Files without a marker column
/// produce an all-Wall boundary.
Mesh read_triangle_format(std::string_view node_text, std::string_view ele_text,
                          const BoundaryTagMap& tag_map = default_tag_map());

struct TriangleFiles {
  std::string node;
  std::string ele;
};

/// Writes the mesh with 0-based indices, one boundary marker per vertex
/// (0 interior, 1 Lid, 2 Wall) and coordinates at round-trip precision.
TriangleFiles write_triangle_format(const Mesh& mesh);

}  // namespace lsqns
