#include "flowtopo/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flowtopo/errors.hpp"

namespace flowtopo {

namespace {
constexpr double kBarySlack = 1e-12;
}

const char* to_string(BoundaryTag tag) {
  switch (tag) {
    case BoundaryTag::Inflow:
      return "inflow";
    case BoundaryTag::Outflow:
      return "outflow";
    case BoundaryTag::Wall:
      return "wall";
  }
  return "?";
}

StructuredMesh::StructuredMesh(int nx, int ny, double width, double height)
    : nx_(nx), ny_(ny), width_(width), height_(height) {
  if (nx < 1 || ny < 1 || !(width > 0.0) || !(height > 0.0)) {
    std::ostringstream msg;
    msg << "structured mesh needs positive dimensions, got nx=" << nx << " ny=" << ny
        << " width=" << width << " height=" << height;
    throw InvalidArgument(msg.str());
  }
  const int stride = nx + 1;
  vertices_.reserve(static_cast<std::size_t>(stride) * (ny + 1));
  for (int j = 0; j <= ny; ++j) {
    // exact endpoints so boundary classification never depends on rounding
    const double y = (j == ny) ? height : height * j / ny;
    for (int i = 0; i <= nx; ++i) {
      const double x = (i == nx) ? width : width * i / nx;
      vertices_.emplace_back(x, y);
    }
  }
  triangles_.reserve(2 * static_cast<std::size_t>(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      const int v00 = j * stride + i;
      const int v10 = v00 + 1;
      const int v01 = v00 + stride;
      const int v11 = v01 + 1;
      triangles_.push_back({v00, v10, v11});
      triangles_.push_back({v00, v11, v01});
    }
  }

  on_boundary_.assign(vertices_.size(), 0);
  for (int i = 0; i < nx; ++i) {
    boundary_edges_.push_back({i, i + 1, BoundaryTag::Wall});
    boundary_edges_.push_back({ny * stride + i, ny * stride + i + 1, BoundaryTag::Wall});
  }
  for (int j = 0; j < ny; ++j) {
    boundary_edges_.push_back({j * stride, (j + 1) * stride, BoundaryTag::Inflow});
    boundary_edges_.push_back({j * stride + nx, (j + 1) * stride + nx, BoundaryTag::Outflow});
  }
  for (const auto& e : boundary_edges_) {
    on_boundary_[e.v0] = 1;
    on_boundary_[e.v1] = 1;
  }
}

double StructuredMesh::signed_area(std::size_t t) const {
  const auto& tri = triangles_[t];
  const Point2 a = vertices_[tri[1]] - vertices_[tri[0]];
  const Point2 b = vertices_[tri[2]] - vertices_[tri[0]];
  return 0.5 * (a.x() * b.y() - a.y() * b.x());
}

StructuredMesh::Location StructuredMesh::locate(const Point2& p) const {
  const double tol = kBarySlack;
  if (!(p.x() >= -tol && p.x() <= width_ + tol && p.y() >= -tol && p.y() <= height_ + tol)) {
    std::ostringstream msg;
    msg << "point (" << p.x() << ", " << p.y() << ") outside [0," << width_ << "]x[0," << height_
        << "]";
    throw OutOfDomainError(msg.str());
  }
  const int i = std::clamp(static_cast<int>(std::floor(p.x() / hx())), 0, nx_ - 1);
  const int j = std::clamp(static_cast<int>(std::floor(p.y() / hy())), 0, ny_ - 1);
  const std::size_t cell = static_cast<std::size_t>(j) * nx_ + i;

  for (std::size_t t : {2 * cell, 2 * cell + 1}) {
    const auto& tri = triangles_[t];
    const Point2& a = vertices_[tri[0]];
    const Point2& b = vertices_[tri[1]];
    const Point2& c = vertices_[tri[2]];
    const double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
    const double l1 = ((p.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (p.y() - a.y())) / det;
    const double l2 = ((b.x() - a.x()) * (p.y() - a.y()) - (p.x() - a.x()) * (b.y() - a.y())) / det;
    const double l0 = 1.0 - l1 - l2;
    if (l0 >= -tol && l1 >= -tol && l2 >= -tol) {
      return {t, {l0, l1, l2}};
    }
  }
  // only reachable through rounding at the clamped outer cells
  throw OutOfDomainError("point could not be located in its grid cell");
}

bool StructuredMesh::same_grid(const StructuredMesh& other) const {
  return nx_ == other.nx_ && ny_ == other.ny_ && width_ == other.width_ &&
         height_ == other.height_;
}

StructuredMesh build_structured_mesh(int nx, int ny, double width, double height) {
  return StructuredMesh(nx, ny, width, height);
}

}  // namespace flowtopo
