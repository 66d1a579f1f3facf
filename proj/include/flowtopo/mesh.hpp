#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Core>

namespace flowtopo {

using Point2 = Eigen::Vector2d;

enum class BoundaryTag { Inflow, Outflow, Wall };

const char* to_string(BoundaryTag tag);

struct BoundaryEdge {
  int v0;
  int v1;
  BoundaryTag tag;
};

/// Uniform triangulation of [0,width]x[0,height]. Each grid cell is split
/// along its bottom-left to top-right diagonal, all triangles counterclockwise.
/// Vertex (i,j) has index j*(nx+1)+i.
class StructuredMesh {
 public:
  StructuredMesh(int nx, int ny, double width, double height);

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  double width() const { return width_; }
  double height() const { return height_; }
  double hx() const { return width_ / nx_; }
  double hy() const { return height_ / ny_; }

  std::size_t num_vertices() const { return vertices_.size(); }
  std::size_t num_triangles() const { return triangles_.size(); }

  const Point2& vertex(std::size_t i) const { return vertices_[i]; }
  std::span<const Point2> vertices() const { return vertices_; }
  const std::array<int, 3>& triangle(std::size_t t) const { return triangles_[t]; }
  std::span<const std::array<int, 3>> triangles() const { return triangles_; }
  std::span<const BoundaryEdge> boundary_edges() const { return boundary_edges_; }

  bool on_boundary(std::size_t vertex) const { return on_boundary_[vertex] != 0; }

  double signed_area(std::size_t t) const;

  /// Containing triangle and barycentric coordinates of `p`. Throws
  /// OutOfDomainError when `p` is outside the rectangle by more than 1e-12.
  struct Location {
    std::size_t triangle;
    std::array<double, 3> barycentric;
  };
  Location locate(const Point2& p) const;

  /// Same mesh parameters (used to validate field files against a config).
  bool same_grid(const StructuredMesh& other) const;

 private:
  int nx_;
  int ny_;
  double width_;
  double height_;
  std::vector<Point2> vertices_;
  std::vector<std::array<int, 3>> triangles_;
  std::vector<BoundaryEdge> boundary_edges_;
  std::vector<char> on_boundary_;
};

StructuredMesh build_structured_mesh(int nx, int ny, double width, double height);

}  // namespace flowtopo
