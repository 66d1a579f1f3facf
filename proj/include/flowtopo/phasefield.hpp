#pragma once

#include <numbers>

#include <Eigen/Core>

#include "flowtopo/fields.hpp"
#include "flowtopo/mesh.hpp"

namespace flowtopo {

/// A P1 design function with every nodal value in [-1, 1].
class PhaseField {
 public:
  /// Validates the bound with 1e-12 slack; values within the slack are clamped.
  explicit PhaseField(ScalarFieldP1 field);
  PhaseField(const StructuredMesh& mesh, double value);

  const ScalarFieldP1& field() const { return field_; }
  const Eigen::VectorXd& values() const { return field_.values(); }
  const StructuredMesh& mesh() const { return field_.mesh(); }
  std::size_t size() const { return field_.size(); }
  double operator[](std::size_t i) const { return field_[i]; }

 private:
  ScalarFieldP1 field_;
};

/// Nodal clamp into [-1, 1].
PhaseField clamp_to_admissible(const ScalarFieldP1& values);

/// Porous-media interpolation
///   alpha(phi) = s * abar / (2 eps) * (1 - phi),  s = alpha_scale
///   beta(phi)  = beta_scale * abar / (2 eps) * (1 - phi).
/// The target mode uses s = 2 * target_scale, i.e. target_scale*abar/eps.
struct InterpolationParams {
  double alpha_bar = 0.1;
  double epsilon = 0.0075;
  double alpha_scale = 100.0;
  double beta_scale = 1.0;
  double target_scale = 500.0;

  void validate() const;
  /// d alpha / d phi, a spatial constant.
  double alpha_slope(bool target_mode = false) const;
  double beta_slope() const;
  double alpha(double phi, bool target_mode = false) const { return -alpha_slope(target_mode) * (1.0 - phi); }
  double beta(double phi) const { return -beta_slope() * (1.0 - phi); }
};

struct InterpolationFields {
  ScalarFieldP1 alpha;
  ScalarFieldP1 beta;
};

InterpolationFields interpolation_fields(const PhaseField& phi, const InterpolationParams& params,
                                         bool target_mode = false);

struct GinzburgLandauParams {
  double epsilon = 0.0075;
  double gamma = 0.005;
  static constexpr double c0 = std::numbers::pi / 2.0;
};

/// E(phi) = 1/(2 c0) * int eps/2 |grad phi|^2 + (1/eps) (1 - phi^2)/2 dx.
/// Throws InvalidArgument if phi leaves [-1, 1] (the obstacle part is +inf).
double gl_energy(const ScalarFieldP1& phi, const GinzburgLandauParams& params);

/// Derivative of gamma*E: entry i = gamma/(2c0) * int eps grad phi . grad b_i - (1/eps) phi b_i.
/// The box constraint is not included.
Eigen::VectorXd gl_derivative(const ScalarFieldP1& phi, const GinzburgLandauParams& params);

/// phi_d(x) = -Phi0((1 - sqrt(a1 (x1-c1)^2 + a2 (x2-c2)^2)) / eps) with
/// Phi0(z) = sin z for |z| <= pi/2 and sgn z otherwise.
PhaseField build_target_phasefield(const StructuredMesh& mesh, const Point2& center,
                                   const Eigen::Vector2d& axis_weights, double epsilon);

}  // namespace flowtopo
