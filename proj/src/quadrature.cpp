#include "flowtopo/quadrature.hpp"

#include <cmath>

namespace flowtopo {

const TriangleRule& degree5_rule() {
  static const TriangleRule rule = [] {
    TriangleRule r{};
    const double s15 = std::sqrt(15.0);
    const double a1 = (6.0 - s15) / 21.0;
    const double b1 = (9.0 + 2.0 * s15) / 21.0;
    const double w1 = (155.0 - s15) / 1200.0;
    const double a2 = (6.0 + s15) / 21.0;
    const double b2 = (9.0 - 2.0 * s15) / 21.0;
    const double w2 = (155.0 + s15) / 1200.0;
    r.barycentric[0] = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    r.weight[0] = 9.0 / 40.0;
    r.barycentric[1] = {b1, a1, a1};
    r.barycentric[2] = {a1, b1, a1};
    r.barycentric[3] = {a1, a1, b1};
    r.barycentric[4] = {b2, a2, a2};
    r.barycentric[5] = {a2, b2, a2};
    r.barycentric[6] = {a2, a2, b2};
    for (int k = 1; k <= 3; ++k) r.weight[k] = w1;
    for (int k = 4; k <= 6; ++k) r.weight[k] = w2;
    return r;
  }();
  return rule;
}

double bubble_value(const std::array<double, 3>& l) { return 27.0 * l[0] * l[1] * l[2]; }

ElementBasis compute_element_basis(const StructuredMesh& mesh, std::size_t triangle) {
  ElementBasis eb;
  const auto& tri = mesh.triangle(triangle);
  const Point2& a = mesh.vertex(tri[0]);
  const Point2& b = mesh.vertex(tri[1]);
  const Point2& c = mesh.vertex(tri[2]);
  const double det = (b.x() - a.x()) * (c.y() - a.y()) - (c.x() - a.x()) * (b.y() - a.y());
  eb.area = 0.5 * det;
  // gradients of barycentric coordinates: rotate the opposite edge
  eb.grad_lambda[0] = Eigen::Vector2d(b.y() - c.y(), c.x() - b.x()) / det;
  eb.grad_lambda[1] = Eigen::Vector2d(c.y() - a.y(), a.x() - c.x()) / det;
  eb.grad_lambda[2] = Eigen::Vector2d(a.y() - b.y(), b.x() - a.x()) / det;

  const auto& rule = degree5_rule();
  for (std::size_t q = 0; q < TriangleRule::kPoints; ++q) {
    QuadPoint& qp = eb.points[q];
    const auto& l = rule.barycentric[q];
    qp.lambda = l;
    qp.weight = rule.weight[q] * eb.area;
    for (int v = 0; v < 3; ++v) {
      qp.shape[v] = l[v];
      qp.grad[v] = eb.grad_lambda[v];
    }
    qp.shape[3] = bubble_value(l);
    qp.grad[3] = 27.0 * (l[1] * l[2] * eb.grad_lambda[0] + l[0] * l[2] * eb.grad_lambda[1] +
                         l[0] * l[1] * eb.grad_lambda[2]);
  }
  return eb;
}

BasisCache::BasisCache(const StructuredMesh& mesh)
    : shapes_{compute_element_basis(mesh, 0), compute_element_basis(mesh, 1)} {}

}  // namespace flowtopo
