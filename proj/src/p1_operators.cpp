#include "flowtopo/p1_operators.hpp"

#include <vector>

#include "flowtopo/quadrature.hpp"

namespace flowtopo {

namespace {

template <typename Local>
SparseMatrix assemble_p1(const StructuredMesh& mesh, Local local) {
  const BasisCache basis(mesh);
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(9 * mesh.num_triangles());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    const auto& eb = basis[t];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) triplets.emplace_back(tri[a], tri[b], local(eb, a, b));
  }
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
  SparseMatrix m(n, n);
  m.setFromTriplets(triplets.begin(), triplets.end());
  return m;
}

}  // namespace

SparseMatrix p1_mass_matrix(const StructuredMesh& mesh) {
  return assemble_p1(mesh, [](const ElementBasis& eb, int a, int b) {
    double s = 0.0;
    for (const auto& qp : eb.points) s += qp.weight * qp.lambda[a] * qp.lambda[b];
    return s;
  });
}

SparseMatrix p1_stiffness_matrix(const StructuredMesh& mesh) {
  return assemble_p1(mesh, [](const ElementBasis& eb, int a, int b) {
    return eb.area * eb.grad_lambda[a].dot(eb.grad_lambda[b]);
  });
}

Eigen::VectorXd p1_mass_vector(const StructuredMesh& mesh) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_vertices()));
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const double third = mesh.signed_area(t) / 3.0;
    for (int v : mesh.triangle(t)) m[v] += third;
  }
  return m;
}

}  // namespace flowtopo
