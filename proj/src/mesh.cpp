#include "lsqns/mesh.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace lsqns {

MeshParseError::MeshParseError(const std::string& what, std::size_t line)
    : MeshError(line > 0 ? "line " + std::to_string(line) + ": " + what : what), line_(line) {}

namespace {

std::uint64_t edge_key(int a, int b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (lo << 32) | hi;
}

double cross(const Point2& a, const Point2& b, const Point2& c) {
  return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
}

}  // namespace

double Mesh::signed_area(std::size_t t) const {
  const auto& tri = triangles_[t];
  return 0.5 * cross(vertices_[tri[0]], vertices_[tri[1]], vertices_[tri[2]]);
}

double Mesh::total_area() const {
  double a = 0.0;
  for (std::size_t t = 0; t < triangles_.size(); ++t) a += signed_area(t);
  return a;
}

double Mesh::max_edge_length() const {
  double h = 0.0;
  for (const auto& tri : triangles_) {
    for (int e = 0; e < 3; ++e) {
      const Point2& p = vertices_[tri[e]];
      const Point2& q = vertices_[tri[(e + 1) % 3]];
      h = std::max(h, std::hypot(p.x - q.x, p.y - q.y));
    }
  }
  return h;
}

BoundaryTag Mesh::vertex_tag(int vertex) const {
  if (!vertex_on_boundary_[vertex]) throw MeshError("vertex " + std::to_string(vertex) + " is interior");
  return vertex_on_lid_[vertex] ? BoundaryTag::Lid : BoundaryTag::Wall;
}

std::vector<std::array<int, 2>> Mesh::find_boundary_edges() const {
  struct Occurrence {
    int count = 0;
    std::array<int, 2> edge{};
    std::size_t order = 0;
  };
  std::unordered_map<std::uint64_t, Occurrence> seen;
  seen.reserve(3 * triangles_.size());
  std::size_t order = 0;
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    const auto& tri = triangles_[t];
    for (int e = 0; e < 3; ++e) {
      const int a = tri[e];
      const int b = tri[(e + 1) % 3];
      auto& occ = seen[edge_key(a, b)];
      if (occ.count == 0) {
        occ.edge = {a, b};
        occ.order = order++;
      }
      if (++occ.count > 2) {
        throw MeshError("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                        ") is shared by more than two triangles (triangle " + std::to_string(t) + ")");
      }
    }
  }
  std::vector<std::pair<std::size_t, std::array<int, 2>>> boundary;
  for (const auto& [key, occ] : seen) {
    if (occ.count == 1) boundary.emplace_back(occ.order, occ.edge);
  }
  std::sort(boundary.begin(), boundary.end());
  std::vector<std::array<int, 2>> edges;
  edges.reserve(boundary.size());
  for (const auto& b : boundary) edges.push_back(b.second);
  return edges;
}

void Mesh::orient_and_validate() {
  const auto nv = static_cast<int>(vertices_.size());
  for (std::size_t v = 0; v < vertices_.size(); ++v) {
    if (!std::isfinite(vertices_[v].x) || !std::isfinite(vertices_[v].y)) {
      throw MeshError("vertex " + std::to_string(v) + " has non-finite coordinates");
    }
  }
  for (std::size_t t = 0; t < triangles_.size(); ++t) {
    auto& tri = triangles_[t];
    for (int i : tri) {
      if (i < 0 || i >= nv) {
        throw MeshError("triangle " + std::to_string(t) + " references vertex " + std::to_string(i) +
                        " out of range [0, " + std::to_string(nv) + ")");
      }
    }
    if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2]) {
      throw MeshError("triangle " + std::to_string(t) + " repeats a vertex");
    }
    const Point2& a = vertices_[tri[0]];
    const Point2& b = vertices_[tri[1]];
    const Point2& c = vertices_[tri[2]];
    const double area2 = cross(a, b, c);
    const double scale = std::max({std::hypot(b.x - a.x, b.y - a.y), std::hypot(c.x - a.x, c.y - a.y),
                                   std::hypot(c.x - b.x, c.y - b.y)});
    if (std::abs(area2) <= 1e-14 * scale * scale) {
      throw MeshError("triangle " + std::to_string(t) + " is degenerate");
    }
    if (area2 < 0.0) std::swap(tri[1], tri[2]);
  }
}

void Mesh::finish() {
  vertex_on_boundary_.assign(vertices_.size(), false);
  vertex_on_lid_.assign(vertices_.size(), false);
  for (const auto& e : boundary_edges_) {
    for (int v : e.vertices) {
      vertex_on_boundary_[v] = true;
      if (e.tag == BoundaryTag::Lid) vertex_on_lid_[v] = true;
    }
  }
}

Mesh generate_unit_square(int n) {
  if (n < 1) throw MeshError("generate_unit_square: n must be >= 1, got " + std::to_string(n));
  const int np = n + 1;
  std::vector<Point2> vertices;
  vertices.reserve(np * np + n * n);
  const double h = 1.0 / n;
  for (int j = 0; j < np; ++j) {
    for (int i = 0; i < np; ++i) vertices.push_back({i * h, j * h});
  }
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) vertices.push_back({(i + 0.5) * h, (j + 0.5) * h});
  }
  std::vector<std::array<int, 3>> triangles;
  triangles.reserve(4 * n * n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const int a = j * np + i;
      const int b = a + 1;
      const int c = b + np;
      const int d = a + np;
      const int m = np * np + j * n + i;
      triangles.push_back({a, b, m});
      triangles.push_back({b, c, m});
      triangles.push_back({c, d, m});
      triangles.push_back({d, a, m});
    }
  }
  return Mesh::from_connectivity(std::move(vertices), std::move(triangles),
                                 [](int, int) { return BoundaryTag::Wall; });
}

Mesh generate_semidisk(double h_target) {
  if (!(h_target > 0.0 && h_target < 0.5)) {
    throw MeshError("generate_semidisk: h_target must lie in (0, 0.5), got " + std::to_string(h_target));
  }
  constexpr double radius = 0.5;
  const int n_rings = static_cast<int>(std::ceil(radius * std::sqrt(3.0) / h_target));
  const double dr = radius / n_rings;

  std::vector<Point2> vertices{{0.0, 0.0}};
  // ring_nodes[i] lists ring i from (-r, 0) through the lower half to (r, 0).
  std::vector<std::vector<int>> ring_nodes{{0}};
  for (int i = 1; i <= n_rings; ++i) {
    const double r = i * dr;
    const int segments = std::max(2, static_cast<int>(std::lround(std::numbers::pi * i)));
    std::vector<int> ring;
    ring.reserve(segments + 1);
    for (int j = 0; j <= segments; ++j) {
      ring.push_back(static_cast<int>(vertices.size()));
      if (j == 0) {
        vertices.push_back({-r, 0.0});
      } else if (j == segments) {
        vertices.push_back({r, 0.0});
      } else {
        const double theta = std::numbers::pi * (1.0 + static_cast<double>(j) / segments);
        vertices.push_back({r * std::cos(theta), r * std::sin(theta)});
      }
    }
    ring_nodes.push_back(std::move(ring));
  }

  std::vector<std::array<int, 3>> triangles;
  for (int i = 1; i <= n_rings; ++i) {
    const auto& inner = ring_nodes[i - 1];
    const auto& outer = ring_nodes[i];
    const auto p = static_cast<int>(inner.size()) - 1;
    const auto q = static_cast<int>(outer.size()) - 1;
    if (p == 0) {
      for (int j = 0; j < q; ++j) triangles.push_back({inner[0], outer[j + 1], outer[j]});
      continue;
    }
    // Zip the two polylines by parametric position along the half circle.
    int ia = 0;
    int ib = 0;
    while (ia < p || ib < q) {
      bool advance_outer;
      if (ia == p) {
        advance_outer = true;
      } else if (ib == q) {
        advance_outer = false;
      } else {
        advance_outer = static_cast<double>(ib + 1) / q < static_cast<double>(ia + 1) / p;
      }
      if (advance_outer) {
        triangles.push_back({inner[ia], outer[ib + 1], outer[ib]});
        ++ib;
      } else {
        triangles.push_back({inner[ia], inner[ia + 1], outer[ib]});
        ++ia;
      }
    }
  }

  auto tagger = [&vertices](int a, int b) {
    return (vertices[a].y == 0.0 && vertices[b].y == 0.0) ? BoundaryTag::Lid : BoundaryTag::Wall;
  };
  return Mesh::from_connectivity(vertices, std::move(triangles), tagger);
}

BoundaryTagMap default_tag_map() { return {{1, BoundaryTag::Lid}, {2, BoundaryTag::Wall}}; }

namespace {

struct Record {
  std::size_t line;
  std::vector<std::string_view> fields;
};

std::vector<Record> tokenize(std::string_view text) {
  std::vector<Record> records;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    Record rec{line_no, {}};
    std::size_t i = 0;
    while (i < line.size()) {
      while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
      std::size_t j = i;
      while (j < line.size() && !std::isspace(static_cast<unsigned char>(line[j]))) ++j;
      if (j > i) rec.fields.push_back(line.substr(i, j - i));
      i = j;
    }
    if (!rec.fields.empty()) records.push_back(std::move(rec));
    if (end == text.size()) break;
    pos = end + 1;
  }
  return records;
}

long long parse_int(std::string_view s, std::size_t line, const char* what) {
  long long value = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw MeshParseError(std::string("expected integer ") + what + ", got '" + std::string(s) + "'", line);
  }
  return value;
}

double parse_real(std::string_view s, std::size_t line, const char* what) {
  // std::from_chars for double is available in libstdc++ 11.
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(value)) {
    throw MeshParseError(std::string("expected real ") + what + ", got '" + std::string(s) + "'", line);
  }
  return value;
}

}  // namespace

Mesh read_triangle_format(std::string_view node_text, std::string_view ele_text, const BoundaryTagMap& tag_map) {
  const auto nodes = tokenize(node_text);
  if (nodes.empty()) throw MeshParseError(".node: missing header", 0);
  const auto& head = nodes.front();
  if (head.fields.size() < 2 || head.fields.size() > 4) {
    throw MeshParseError(".node: header must be '<#vertices> <dim> [<#attributes> [<#markers>]]'", head.line);
  }
  const auto n_vertices = parse_int(head.fields[0], head.line, "vertex count");
  const auto dim = parse_int(head.fields[1], head.line, "dimension");
  const auto n_attr = head.fields.size() > 2 ? parse_int(head.fields[2], head.line, "attribute count") : 0;
  const auto n_markers = head.fields.size() > 3 ? parse_int(head.fields[3], head.line, "marker count") : 0;
  if (n_vertices < 3) throw MeshParseError(".node: need at least 3 vertices", head.line);
  if (dim != 2) throw MeshParseError(".node: only dimension 2 is supported", head.line);
  if (n_attr != 0) throw MeshParseError(".node: attributes are not supported", head.line);
  if (n_markers != 0 && n_markers != 1) throw MeshParseError(".node: marker count must be 0 or 1", head.line);
  if (nodes.size() - 1 != static_cast<std::size_t>(n_vertices)) {
    throw MeshParseError(".node: header announces " + std::to_string(n_vertices) + " vertices, found " +
                             std::to_string(nodes.size() - 1),
                         nodes.back().line);
  }

  std::vector<Point2> vertices;
  std::vector<int> markers;
  vertices.reserve(n_vertices);
  markers.reserve(n_vertices);
  long long base = 0;
  for (std::size_t r = 1; r < nodes.size(); ++r) {
    const auto& rec = nodes[r];
    if (rec.fields.size() != static_cast<std::size_t>(3 + n_markers)) {
      throw MeshParseError(".node: expected " + std::to_string(3 + n_markers) + " fields", rec.line);
    }
    const auto id = parse_int(rec.fields[0], rec.line, "vertex id");
    if (r == 1) {
      if (id != 0 && id != 1) throw MeshParseError(".node: first vertex id must be 0 or 1", rec.line);
      base = id;
    } else if (id != base + static_cast<long long>(r) - 1) {
      throw MeshParseError(".node: vertex ids must be consecutive", rec.line);
    }
    vertices.push_back({parse_real(rec.fields[1], rec.line, "x"), parse_real(rec.fields[2], rec.line, "y")});
    markers.push_back(n_markers ? static_cast<int>(parse_int(rec.fields[3], rec.line, "marker")) : 0);
  }

  const auto eles = tokenize(ele_text);
  if (eles.empty()) throw MeshParseError(".ele: missing header", 0);
  const auto& ehead = eles.front();
  if (ehead.fields.size() < 2 || ehead.fields.size() > 3) {
    throw MeshParseError(".ele: header must be '<#triangles> <nodes per triangle> [<#attributes>]'", ehead.line);
  }
  const auto n_triangles = parse_int(ehead.fields[0], ehead.line, "triangle count");
  const auto per = parse_int(ehead.fields[1], ehead.line, "nodes per triangle");
  const auto e_attr = ehead.fields.size() > 2 ? parse_int(ehead.fields[2], ehead.line, "attribute count") : 0;
  if (n_triangles < 1) throw MeshParseError(".ele: need at least one triangle", ehead.line);
  if (per != 3) throw MeshParseError(".ele: only 3-node triangles are supported", ehead.line);
  if (e_attr != 0) throw MeshParseError(".ele: attributes are not supported", ehead.line);
  if (eles.size() - 1 != static_cast<std::size_t>(n_triangles)) {
    throw MeshParseError(".ele: header announces " + std::to_string(n_triangles) + " triangles, found " +
                             std::to_string(eles.size() - 1),
                         eles.back().line);
  }
  std::vector<std::array<int, 3>> triangles;
  triangles.reserve(n_triangles);
  for (std::size_t r = 1; r < eles.size(); ++r) {
    const auto& rec = eles[r];
    if (rec.fields.size() != 4) throw MeshParseError(".ele: expected 4 fields", rec.line);
    parse_int(rec.fields[0], rec.line, "triangle id");
    std::array<int, 3> tri{};
    for (int k = 0; k < 3; ++k) {
      const auto idx = parse_int(rec.fields[k + 1], rec.line, "vertex index") - base;
      if (idx < 0 || idx >= n_vertices) {
        throw MeshParseError(".ele: vertex index " + std::string(rec.fields[k + 1]) + " out of range", rec.line);
      }
      tri[k] = static_cast<int>(idx);
    }
    triangles.push_back(tri);
  }

  auto tag_of = [&](int v) {
    if (n_markers == 0) return BoundaryTag::Wall;
    const auto it = tag_map.find(markers[v]);
    if (it == tag_map.end()) {
      throw MeshParseError("boundary vertex " + std::to_string(v + base) + " has unmapped marker " +
                               std::to_string(markers[v]),
                           nodes[v + 1].line);
    }
    return it->second;
  };
  return Mesh::from_connectivity(std::move(vertices), std::move(triangles), [&](int a, int b) {
    const BoundaryTag ta = tag_of(a);
    const BoundaryTag tb = tag_of(b);
    return (ta == BoundaryTag::Lid && tb == BoundaryTag::Lid) ? BoundaryTag::Lid : BoundaryTag::Wall;
  });
}

TriangleFiles write_triangle_format(const Mesh& mesh) {
  std::string node;
  std::string ele;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%zu 2 0 1\n", mesh.n_vertices());
  node += buf;
  for (std::size_t v = 0; v < mesh.n_vertices(); ++v) {
    const int vi = static_cast<int>(v);
    int marker = 0;
    if (mesh.on_boundary(vi)) marker = mesh.vertex_tag(vi) == BoundaryTag::Lid ? 1 : 2;
    std::snprintf(buf, sizeof buf, "%zu %.17g %.17g %d\n", v, mesh.vertices()[v].x, mesh.vertices()[v].y, marker);
    node += buf;
  }
  std::snprintf(buf, sizeof buf, "%zu 3 0\n", mesh.n_triangles());
  ele += buf;
  for (std::size_t t = 0; t < mesh.n_triangles(); ++t) {
    const auto& tri = mesh.triangles()[t];
    std::snprintf(buf, sizeof buf, "%zu %d %d %d\n", t, tri[0], tri[1], tri[2]);
    ele += buf;
  }
  return {std::move(node), std::move(ele)};
}

}  // namespace lsqns
