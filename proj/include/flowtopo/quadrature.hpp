#pragma once

#include <array>
#include <cstddef>

#include <Eigen/Core>

#include "flowtopo/mesh.hpp"

namespace flowtopo {

/// Symmetric 7-point triangle rule, exact through degree 5. Weights sum to 1
/// and are scaled by the triangle area at use.
struct TriangleRule {
  static constexpr std::size_t kPoints = 7;
  std::array<std::array<double, 3>, kPoints> barycentric;
  std::array<double, kPoints> weight;
};

const TriangleRule& degree5_rule();

/// Local scalar shape functions of the MINI velocity space: the three vertex
/// hats followed by the cubic bubble 27*l0*l1*l2 (value 1 at the barycenter).
constexpr std::size_t kVelocityShapes = 4;

struct QuadPoint {
  std::array<double, 3> lambda;
  std::array<double, kVelocityShapes> shape;
  std::array<Eigen::Vector2d, kVelocityShapes> grad;
  double weight;  // rule weight times area
};

struct ElementBasis {
  double area = 0.0;
  std::array<Eigen::Vector2d, 3> grad_lambda;
  std::array<QuadPoint, TriangleRule::kPoints> points;
};

ElementBasis compute_element_basis(const StructuredMesh& mesh, std::size_t triangle);

double bubble_value(const std::array<double, 3>& lambda);

/// Basis data for every triangle. On the structured mesh all even triangles are
/// translates of each other, as are all odd ones, so only two shapes are stored.
class BasisCache {
 public:
  explicit BasisCache(const StructuredMesh& mesh);
  const ElementBasis& operator[](std::size_t triangle) const { return shapes_[triangle % 2]; }

 private:
  std::array<ElementBasis, 2> shapes_;
};

}  // namespace flowtopo
