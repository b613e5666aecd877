#pragma once

#include "cev/errors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cev {

struct Point {
  double x = 0.0;
  double y = 0.0;
};

struct Edge {
  int v0; // v0 < v1
  int v1;
  int multiplicity; // number of triangles sharing the edge
};

/// Conforming triangulation of a planar domain.
///
/// Triangles are stored counter-clockwise. Vertex markers: 0 interior, >0 the
/// id of the boundary component. Immutable once constructed.
class Mesh {
public:
  Mesh(std::vector<Point> vertices, std::vector<std::array<int, 3>> triangles,
       std::vector<int> markers)
      : vertices_(std::move(vertices)), triangles_(std::move(triangles)),
        markers_(std::move(markers)) {
    validate_and_orient();
    build_edges();
  }

  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_triangles() const { return triangles_.size(); }
  std::size_t num_edges() const { return edges_.size(); }

  const std::vector<Point>& vertices() const { return vertices_; }
  const std::vector<std::array<int, 3>>& triangles() const { return triangles_; }
  const std::vector<int>& markers() const { return markers_; }
  const std::vector<Edge>& edges() const { return edges_; }

  /// Local edge j of triangle t joins local vertices (j, (j+1)%3).
  const std::array<int, 3>& triangle_edges(std::size_t t) const { return tri_edges_[t]; }

  std::size_t num_boundary_edges() const {
    return static_cast<std::size_t>(
        std::count_if(edges_.begin(), edges_.end(), [](const Edge& e) { return e.multiplicity == 1; }));
  }
  std::size_t num_interior_edges() const { return num_edges() - num_boundary_edges(); }

  double edge_length(std::size_t e) const {
    const Point& a = vertices_[edges_[e].v0];
    const Point& b = vertices_[edges_[e].v1];
    return std::hypot(b.x - a.x, b.y - a.y);
  }

  double signed_area(std::size_t t) const {
    const auto& tri = triangles_[t];
    const Point& a = vertices_[tri[0]];
    const Point& b = vertices_[tri[1]];
    const Point& c = vertices_[tri[2]];
    return 0.5 * ((b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x));
  }

  /// Element diameter h_e: the longest edge of the triangle.
  double diameter(std::size_t t) const {
    double h = 0.0;
    for (int e : tri_edges_[t]) h = std::max(h, edge_length(e));
    return h;
  }

  /// Local mesh width of element t: its shortest edge. The minimum over all
  /// elements is the global min edge length.
  double local_width(std::size_t t) const {
    double h = std::numeric_limits<double>::infinity();
    for (int e : tri_edges_[t]) h = std::min(h, edge_length(e));
    return h;
  }

  /// True for vertices on a boundary edge or carrying a nonzero marker.
  bool on_boundary(std::size_t v) const { return boundary_vertex_[v]; }

private:
  void validate_and_orient() {
    if (markers_.size() != vertices_.size())
      throw ValidationError("marker count " + std::to_string(markers_.size()) +
                            " does not match vertex count " + std::to_string(vertices_.size()));
    const auto n = static_cast<int>(vertices_.size());
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
      auto& tri = triangles_[t];
      for (int v : tri)
        if (v < 0 || v >= n)
          throw ValidationError("triangle " + std::to_string(t + 1) + " references missing vertex " +
                                std::to_string(v + 1));
      if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
        throw ValidationError("triangle " + std::to_string(t + 1) + " repeats a vertex");
      const double area = signed_area(t);
      if (!(std::abs(area) > 0.0) || !std::isfinite(area))
        throw ValidationError("triangle " + std::to_string(t + 1) + " has zero area");
      if (area < 0.0) std::swap(tri[1], tri[2]);
    }
  }

  void build_edges() {
    std::map<std::pair<int, int>, int> index;
    tri_edges_.resize(triangles_.size());
    for (std::size_t t = 0; t < triangles_.size(); ++t) {
      const auto& tri = triangles_[t];
      for (int j = 0; j < 3; ++j) {
        int a = tri[j], b = tri[(j + 1) % 3];
        if (a > b) std::swap(a, b);
        auto [it, inserted] = index.try_emplace({a, b}, static_cast<int>(edges_.size()));
        if (inserted) edges_.push_back({a, b, 0});
        edges_[it->second].multiplicity += 1;
        tri_edges_[t][j] = it->second;
      }
    }
    boundary_vertex_.assign(vertices_.size(), false);
    for (std::size_t v = 0; v < vertices_.size(); ++v) boundary_vertex_[v] = markers_[v] > 0;
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      if (edges_[e].multiplicity > 2)
        throw ValidationError("edge (" + std::to_string(edges_[e].v0 + 1) + "," +
                              std::to_string(edges_[e].v1 + 1) + ") shared by " +
                              std::to_string(edges_[e].multiplicity) + " triangles");
      if (edges_[e].multiplicity == 1) {
        boundary_vertex_[edges_[e].v0] = true;
        boundary_vertex_[edges_[e].v1] = true;
      }
      if (!(edge_length(e) > 0.0)) throw ValidationError("zero-length edge");
    }
  }

  std::vector<Point> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<int> markers_;
  std::vector<Edge> edges_;
  std::vector<std::array<int, 3>> tri_edges_;
  std::vector<bool> boundary_vertex_;
};

inline double min_edge(const Mesh& mesh) {
  double h = std::numeric_limits<double>::infinity();
  for (std::size_t e = 0; e < mesh.num_edges(); ++e) h = std::min(h, mesh.edge_length(e));
  return h;
}

inline double max_edge(const Mesh& mesh) {
  double h = 0.0;
  for (std::size_t e = 0; e < mesh.num_edges(); ++e) h = std::max(h, mesh.edge_length(e));
  return h;
}

/// n x n grid on [0,1]^2, each cell split along its (0,0)-(1,1) diagonal.
inline Mesh unit_square_mesh(int n) {
  if (n < 1) throw std::invalid_argument("unit_square_mesh: n must be >= 1, got " + std::to_string(n));
  std::vector<Point> vertices;
  std::vector<int> markers;
  vertices.reserve(static_cast<std::size_t>((n + 1) * (n + 1)));
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i) {
      vertices.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n});
      markers.push_back((i == 0 || j == 0 || i == n || j == n) ? 1 : 0);
    }
  std::vector<std::array<int, 3>> triangles;
  triangles.reserve(static_cast<std::size_t>(2 * n * n));
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j)
    for (int i = 0; i < n; ++i) {
      triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  return Mesh(std::move(vertices), std::move(triangles), std::move(markers));
}

namespace detail {

struct LineReader {
  std::istringstream in;
  std::size_t line_no = 0;

  explicit LineReader(std::string_view text) : in(std::string(text)) {}

  // Next non-blank line; false at end of input.
  bool next(std::string& line) {
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") != std::string::npos) return true;
    }
    return false;
  }
};

template <typename... T>
void parse_fields(const std::string& line, std::size_t line_no, T&... out) {
  std::istringstream ls(line);
  ((ls >> out), ...);
  if (ls.fail()) throw ParseError("malformed line '" + line + "'", line_no);
  std::string rest;
  if (ls >> rest) throw ParseError("trailing fields in '" + line + "'", line_no);
}

} // namespace detail

/// Parse node text ("N 2" then "id x y marker") and element text ("M 3" then
/// "id v1 v2 v3"); ids are 1-based and must appear in order.
inline Mesh load_mesh(std::string_view node_text, std::string_view element_text) {
  std::string line;
  detail::LineReader nodes(node_text);
  if (!nodes.next(line)) throw ParseError("empty node file", nodes.line_no);
  long count = 0, dim = 0;
  detail::parse_fields(line, nodes.line_no, count, dim);
  if (count < 3 || dim != 2) throw ParseError("node header must be 'N 2' with N >= 3", nodes.line_no);
  std::vector<Point> vertices(static_cast<std::size_t>(count));
  std::vector<int> markers(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    if (!nodes.next(line)) throw ParseError("expected " + std::to_string(count) + " nodes", nodes.line_no);
    long id = 0;
    detail::parse_fields(line, nodes.line_no, id, vertices[i].x, vertices[i].y, markers[i]);
    if (id != i + 1) throw ParseError("node id " + std::to_string(id) + " out of sequence", nodes.line_no);
    if (!std::isfinite(vertices[i].x) || !std::isfinite(vertices[i].y))
      throw ParseError("non-finite coordinate", nodes.line_no);
  }

  detail::LineReader elems(element_text);
  if (!elems.next(line)) throw ParseError("empty element file", elems.line_no);
  detail::parse_fields(line, elems.line_no, count, dim);
  if (count < 1 || dim != 3) throw ParseError("element header must be 'M 3' with M >= 1", elems.line_no);
  std::vector<std::array<int, 3>> triangles(static_cast<std::size_t>(count));
  for (long i = 0; i < count; ++i) {
    if (!elems.next(line))
      throw ParseError("expected " + std::to_string(count) + " elements", elems.line_no);
    long id = 0, a = 0, b = 0, c = 0;
    detail::parse_fields(line, elems.line_no, id, a, b, c);
    if (id != i + 1) throw ParseError("element id " + std::to_string(id) + " out of sequence", elems.line_no);
    triangles[i] = {static_cast<int>(a - 1), static_cast<int>(b - 1), static_cast<int>(c - 1)};
  }
  return Mesh(std::move(vertices), std::move(triangles), std::move(markers));
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline Mesh load_mesh_files(const std::string& node_path, const std::string& element_path) {
  return load_mesh(read_text_file(node_path), read_text_file(element_path));
}

/// Node/element text for `mesh`: LF endings, 17 significant digits.
inline std::pair<std::string, std::string> write_mesh(const Mesh& mesh) {
  std::ostringstream nodes;
  nodes << std::setprecision(17);
  nodes << mesh.num_vertices() << " 2\n";
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i)
    nodes << i + 1 << ' ' << mesh.vertices()[i].x << ' ' << mesh.vertices()[i].y << ' '
          << mesh.markers()[i] << '\n';
  std::ostringstream elems;
  elems << mesh.num_triangles() << " 3\n";
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles()[t];
    elems << t + 1 << ' ' << tri[0] + 1 << ' ' << tri[1] + 1 << ' ' << tri[2] + 1 << '\n';
  }
  return {nodes.str(), elems.str()};
}

} // namespace cev
