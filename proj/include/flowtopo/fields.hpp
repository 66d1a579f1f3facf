#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "flowtopo/mesh.hpp"

namespace flowtopo {

/// Continuous piecewise-linear field, one value per mesh vertex.
class ScalarFieldP1 {
 public:
  ScalarFieldP1() = default;
  explicit ScalarFieldP1(const StructuredMesh& mesh, double value = 0.0);
  ScalarFieldP1(const StructuredMesh& mesh, Eigen::VectorXd values);

  const StructuredMesh& mesh() const { return *mesh_; }
  bool has_mesh() const { return mesh_ != nullptr; }
  const Eigen::VectorXd& values() const { return values_; }
  Eigen::VectorXd& values() { return values_; }
  double operator[](std::size_t i) const { return values_[static_cast<Eigen::Index>(i)]; }
  double& operator[](std::size_t i) { return values_[static_cast<Eigen::Index>(i)]; }
  std::size_t size() const { return static_cast<std::size_t>(values_.size()); }

  double evaluate(const Point2& p) const;

 private:
  const StructuredMesh* mesh_ = nullptr;
  Eigen::VectorXd values_;
};

/// MINI velocity: P1 vertex values plus one cubic bubble per triangle, per
/// component. Coefficients are stored as one flat vector with vertex shapes
/// first, then bubbles; entry 2*s+c is component c of shape s. This is also the
/// layout the flow solvers use for velocity unknowns.
class VelocityFieldMini {
 public:
  VelocityFieldMini() = default;
  explicit VelocityFieldMini(const StructuredMesh& mesh);
  VelocityFieldMini(const StructuredMesh& mesh, Eigen::VectorXd coefficients);

  const StructuredMesh& mesh() const { return *mesh_; }
  bool has_mesh() const { return mesh_ != nullptr; }
  const Eigen::VectorXd& coefficients() const { return coeffs_; }
  Eigen::VectorXd& coefficients() { return coeffs_; }

  Eigen::Vector2d nodal(std::size_t vertex) const;
  void set_nodal(std::size_t vertex, const Eigen::Vector2d& value);
  Eigen::Vector2d bubble(std::size_t triangle) const;
  void set_bubble(std::size_t triangle, const Eigen::Vector2d& value);

  Eigen::Vector2d evaluate(const Point2& p) const;

  static std::size_t dof_count(const StructuredMesh& mesh) {
    return 2 * (mesh.num_vertices() + mesh.num_triangles());
  }

 private:
  const StructuredMesh* mesh_ = nullptr;
  Eigen::VectorXd coeffs_;
};

/// Velocity at barycentric point of a given triangle, bubble included.
Eigen::Vector2d evaluate_in_triangle(const VelocityFieldMini& field, std::size_t triangle,
                                     const std::array<double, 3>& lambda);

struct CrossSectionSample {
  double s;
  double value;
};

/// n >= 2 equispaced samples along p0 -> p1, endpoints included.
std::vector<CrossSectionSample> sample_cross_section(const ScalarFieldP1& field, const Point2& p0,
                                                     const Point2& p1, int n);

void write_cross_section_csv(const std::vector<CrossSectionSample>& samples,
                             const std::string& path);

}  // namespace flowtopo
