#include "flowtopo/phasefield.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "flowtopo/errors.hpp"
#include "flowtopo/quadrature.hpp"

namespace flowtopo {

namespace {
constexpr double kBoundSlack = 1e-12;
}

PhaseField::PhaseField(ScalarFieldP1 field) : field_(std::move(field)) {
  auto& v = field_.values();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(std::abs(v[i]) <= 1.0 + kBoundSlack)) {
      std::ostringstream msg;
      msg << "phase field value " << v[i] << " at node " << i << " outside [-1, 1]";
      throw InvalidArgument(msg.str());
    }
    v[i] = std::clamp(v[i], -1.0, 1.0);
  }
}

PhaseField::PhaseField(const StructuredMesh& mesh, double value)
    : PhaseField(ScalarFieldP1(mesh, value)) {}

PhaseField clamp_to_admissible(const ScalarFieldP1& values) {
  ScalarFieldP1 out = values;
  out.values() = out.values().cwiseMax(-1.0).cwiseMin(1.0);
  return PhaseField(std::move(out));
}

void InterpolationParams::validate() const {
  if (!(alpha_bar > 0 && epsilon > 0 && alpha_scale > 0 && beta_scale > 0 && target_scale > 0)) {
    throw InvalidArgument("interpolation parameters must be positive");
  }
}

double InterpolationParams::alpha_slope(bool target_mode) const {
  const double s = target_mode ? 2.0 * target_scale : alpha_scale;
  return -s * alpha_bar / (2.0 * epsilon);
}

double InterpolationParams::beta_slope() const { return -beta_scale * alpha_bar / (2.0 * epsilon); }

InterpolationFields interpolation_fields(const PhaseField& phi, const InterpolationParams& params,
                                         bool target_mode) {
  params.validate();
  const auto& mesh = phi.mesh();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(phi.values().size());
  const Eigen::VectorXd gap = ones - phi.values();
  return {ScalarFieldP1(mesh, Eigen::VectorXd(-params.alpha_slope(target_mode) * gap)),
          ScalarFieldP1(mesh, Eigen::VectorXd(-params.beta_slope() * gap))};
}

double gl_energy(const ScalarFieldP1& phi, const GinzburgLandauParams& params) {
  const auto& v = phi.values();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(std::abs(v[i]) <= 1.0 + kBoundSlack)) {
      throw InvalidArgument("Ginzburg-Landau energy is infinite outside [-1, 1] (node " +
                            std::to_string(i) + ")");
    }
  }
  const auto& mesh = phi.mesh();
  const BasisCache basis(mesh);
  const double eps = params.epsilon;
  double gradient_part = 0.0;
  double potential_part = 0.0;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    const auto& eb = basis[t];
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    for (int a = 0; a < 3; ++a) g += v[tri[a]] * eb.grad_lambda[a];
    gradient_part += eb.area * g.squaredNorm();
    for (const auto& qp : eb.points) {
      // (1 - p)(1 + p) from the interpolated factors, exactly zero at phi = +-1
      double below = 0.0, above = 0.0;
      for (int a = 0; a < 3; ++a) {
        below += qp.lambda[a] * (1.0 - v[tri[a]]);
        above += qp.lambda[a] * (1.0 + v[tri[a]]);
      }
      potential_part += qp.weight * 0.5 * below * above;
    }
  }
  return (0.5 * eps * gradient_part + potential_part / eps) / (2.0 * GinzburgLandauParams::c0);
}

Eigen::VectorXd gl_derivative(const ScalarFieldP1& phi, const GinzburgLandauParams& params) {
  const auto& mesh = phi.mesh();
  const auto& v = phi.values();
  const BasisCache basis(mesh);
  const double eps = params.epsilon;
  Eigen::VectorXd d = Eigen::VectorXd::Zero(v.size());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    const auto& eb = basis[t];
    Eigen::Vector2d g = Eigen::Vector2d::Zero();
    for (int a = 0; a < 3; ++a) g += v[tri[a]] * eb.grad_lambda[a];
    for (int a = 0; a < 3; ++a) d[tri[a]] += eps * eb.area * g.dot(eb.grad_lambda[a]);
    for (const auto& qp : eb.points) {
      double p = 0.0;
      for (int a = 0; a < 3; ++a) p += qp.lambda[a] * v[tri[a]];
      // Psi0'(s) = -s
      for (int a = 0; a < 3; ++a) d[tri[a]] -= qp.weight * p * qp.lambda[a] / eps;
    }
  }
  return d * (params.gamma / (2.0 * GinzburgLandauParams::c0));
}

PhaseField build_target_phasefield(const StructuredMesh& mesh, const Point2& center,
                                   const Eigen::Vector2d& axis_weights, double epsilon) {
  if (!(axis_weights.x() > 0 && axis_weights.y() > 0)) {
    throw InvalidArgument("ellipse axis weights must be positive");
  }
  if (!(epsilon > 0)) throw InvalidArgument("epsilon must be positive");
  constexpr double half_pi = std::numbers::pi / 2.0;
  ScalarFieldP1 out(mesh);
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    const Point2 d = mesh.vertex(i) - center;
    const double r = std::sqrt(axis_weights.x() * d.x() * d.x() + axis_weights.y() * d.y() * d.y());
    const double z = (1.0 - r) / epsilon;
    const double profile = std::abs(z) <= half_pi ? std::sin(z) : (z > 0 ? 1.0 : -1.0);
    out[i] = -profile;
  }
  return PhaseField(std::move(out));
}

}  // namespace flowtopo
