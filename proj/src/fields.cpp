#include "flowtopo/fields.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "flowtopo/errors.hpp"
#include "flowtopo/quadrature.hpp"

namespace flowtopo {

ScalarFieldP1::ScalarFieldP1(const StructuredMesh& mesh, double value)
    : mesh_(&mesh),
      values_(Eigen::VectorXd::Constant(static_cast<Eigen::Index>(mesh.num_vertices()), value)) {}

ScalarFieldP1::ScalarFieldP1(const StructuredMesh& mesh, Eigen::VectorXd values)
    : mesh_(&mesh), values_(std::move(values)) {
  if (static_cast<std::size_t>(values_.size()) != mesh.num_vertices()) {
    throw InvalidArgument("scalar field size " + std::to_string(values_.size()) +
                          " does not match vertex count " + std::to_string(mesh.num_vertices()));
  }
}

double ScalarFieldP1::evaluate(const Point2& p) const {
  const auto loc = mesh_->locate(p);
  const auto& tri = mesh_->triangle(loc.triangle);
  double v = 0.0;
  for (int a = 0; a < 3; ++a) v += loc.barycentric[a] * values_[tri[a]];
  return v;
}

VelocityFieldMini::VelocityFieldMini(const StructuredMesh& mesh)
    : mesh_(&mesh),
      coeffs_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dof_count(mesh)))) {}

VelocityFieldMini::VelocityFieldMini(const StructuredMesh& mesh, Eigen::VectorXd coefficients)
    : mesh_(&mesh), coeffs_(std::move(coefficients)) {
  if (static_cast<std::size_t>(coeffs_.size()) != dof_count(mesh)) {
    throw InvalidArgument("velocity field size " + std::to_string(coeffs_.size()) +
                          " does not match MINI dof count " + std::to_string(dof_count(mesh)));
  }
}

Eigen::Vector2d VelocityFieldMini::nodal(std::size_t vertex) const {
  return coeffs_.segment<2>(static_cast<Eigen::Index>(2 * vertex));
}

void VelocityFieldMini::set_nodal(std::size_t vertex, const Eigen::Vector2d& value) {
  coeffs_.segment<2>(static_cast<Eigen::Index>(2 * vertex)) = value;
}

Eigen::Vector2d VelocityFieldMini::bubble(std::size_t triangle) const {
  return coeffs_.segment<2>(static_cast<Eigen::Index>(2 * (mesh_->num_vertices() + triangle)));
}

void VelocityFieldMini::set_bubble(std::size_t triangle, const Eigen::Vector2d& value) {
  coeffs_.segment<2>(static_cast<Eigen::Index>(2 * (mesh_->num_vertices() + triangle))) = value;
}

Eigen::Vector2d evaluate_in_triangle(const VelocityFieldMini& field, std::size_t triangle,
                                     const std::array<double, 3>& lambda) {
  const auto& tri = field.mesh().triangle(triangle);
  Eigen::Vector2d v = bubble_value(lambda) * field.bubble(triangle);
  for (int a = 0; a < 3; ++a) v += lambda[a] * field.nodal(tri[a]);
  return v;
}

Eigen::Vector2d VelocityFieldMini::evaluate(const Point2& p) const {
  const auto loc = mesh_->locate(p);
  return evaluate_in_triangle(*this, loc.triangle, loc.barycentric);
}

std::vector<CrossSectionSample> sample_cross_section(const ScalarFieldP1& field, const Point2& p0,
                                                     const Point2& p1, int n) {
  if (n < 2) throw InvalidArgument("cross section needs at least 2 samples");
  // validate both endpoints before sampling anything
  field.mesh().locate(p0);
  field.mesh().locate(p1);
  const double length = (p1 - p0).norm();
  std::vector<CrossSectionSample> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    const double t = (k == n - 1) ? 1.0 : static_cast<double>(k) / (n - 1);
    const Point2 p = (1.0 - t) * p0 + t * p1;
    out.push_back({t * length, field.evaluate(p)});
  }
  return out;
}

void write_cross_section_csv(const std::vector<CrossSectionSample>& samples,
                             const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "s,value\n" << std::setprecision(17);
  for (const auto& s : samples) os << s.s << ',' << s.value << '\n';
  if (!os) throw IoError("write failed: " + path);
}

}  // namespace flowtopo
