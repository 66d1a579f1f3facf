#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "flowtopo/field_io.hpp"
#include "flowtopo/flow.hpp"
#include "flowtopo/phasefield.hpp"

namespace flowtopo {

struct ObjectiveBreakdown {
  double total = 0.0;
  double tracking = 0.0;
  double porous_penalty = 0.0;
  double regularization = 0.0;
};

/// Observation region as a 0/1 indicator per triangle.
class ObservationMask {
 public:
  /// Whole domain.
  explicit ObservationMask(const StructuredMesh& mesh);
  /// Throws InvalidArgument unless every entry is 0 or 1 and the size matches.
  ObservationMask(const StructuredMesh& mesh, Eigen::VectorXd indicator);
  /// Triangles whose barycenter satisfies `inside`.
  static ObservationMask from_predicate(const StructuredMesh& mesh,
                                        const std::function<bool(const Point2&)>& inside);

  double operator[](std::size_t triangle) const { return indicator_[static_cast<Eigen::Index>(triangle)]; }
  const Eigen::VectorXd& indicator() const { return indicator_; }

 private:
  Eigen::VectorXd indicator_;
};

struct DesignParams {
  InterpolationParams interpolation;
  GinzburgLandauParams regularization;
  void validate() const;
};

/// Stationary solve at phi_d under the target permeability. With a non-empty
/// `cache_path` a previous result tagged with the same key is loaded instead,
/// and a fresh one is written there with `provenance` appended to its key.
VelocityFieldMini make_target_velocity(const FlowSolver& solver, const PhaseField& phi_d,
                                       const InterpolationParams& params,
                                       const std::string& cache_path = "",
                                       const NewtonOptions& newton = {},
                                       const Provenance& provenance = {});

/// J(phi) and its derivative as a dual vector over the phase-field nodes
/// (entry i = dJ(phi)[b_i]). The last state is cached, so a gradient request
/// at the point of the preceding evaluation reuses it.
class ReducedObjective {
 public:
  virtual ~ReducedObjective() = default;
  virtual ObjectiveBreakdown evaluate(const PhaseField& phi) = 0;
  virtual Eigen::VectorXd gradient(const PhaseField& phi) = 0;
};

class StationaryObjective : public ReducedObjective {
 public:
  StationaryObjective(const FlowSolver& solver, VelocityFieldMini target, ObservationMask mask,
                      DesignParams params, NewtonOptions newton = {});

  ObjectiveBreakdown evaluate(const PhaseField& phi) override;
  Eigen::VectorXd gradient(const PhaseField& phi) override;

  /// State at the last evaluated phi.
  const VelocityFieldMini& state() const { return state_->velocity; }

 private:
  void ensure_state(const PhaseField& phi);

  const FlowSolver* solver_;
  VelocityFieldMini target_;
  ObservationMask mask_;
  DesignParams params_;
  NewtonOptions newton_;
  std::optional<Eigen::VectorXd> phi_;
  std::optional<FlowState> state_;
};

class TransientObjective : public ReducedObjective {
 public:
  TransientObjective(const FlowSolver& solver, VelocityFieldMini target, ObservationMask mask,
                     DesignParams params, double horizon, double dt);

  ObjectiveBreakdown evaluate(const PhaseField& phi) override;
  Eigen::VectorXd gradient(const PhaseField& phi) override;

  const Trajectory& trajectory() const { return *trajectory_; }
  double horizon() const { return horizon_; }

 private:
  void ensure_state(const PhaseField& phi);

  const FlowSolver* solver_;
  VelocityFieldMini target_;
  ObservationMask mask_;
  DesignParams params_;
  double horizon_;
  double dt_;
  std::optional<Eigen::VectorXd> phi_;
  std::optional<Trajectory> trajectory_;
};

ObjectiveBreakdown eval_stationary_objective(const FlowSolver& solver, const PhaseField& phi,
                                             const VelocityFieldMini& target,
                                             const ObservationMask& mask, const DesignParams& params);
ObjectiveBreakdown eval_transient_objective(const FlowSolver& solver, const PhaseField& phi,
                                            const VelocityFieldMini& target,
                                            const ObservationMask& mask, const DesignParams& params,
                                            double horizon, double dt);
Eigen::VectorXd reduced_gradient_stationary(const FlowSolver& solver, const PhaseField& phi,
                                            const VelocityFieldMini& target,
                                            const ObservationMask& mask, const DesignParams& params);
Eigen::VectorXd reduced_gradient_transient(const FlowSolver& solver, const PhaseField& phi,
                                           const VelocityFieldMini& target,
                                           const ObservationMask& mask, const DesignParams& params,
                                           double horizon, double dt);

/// Per-step tracking/porous integrands. Exposed for tests and the trend checks.
struct StateIntegrals {
  double tracking = 0.0;  // int (phi+1)/2 |u - u_d|^2 chi
  double porous = 0.0;    // int beta(phi) |u|^2
};
StateIntegrals state_integrals(const FlowDiscretization& disc, const ScalarFieldP1& phi,
                               const ScalarFieldP1& beta, const VelocityFieldMini& u,
                               const VelocityFieldMini& target, const ObservationMask& mask);

/// Central difference (J(phi + h d) - J(phi - h d)) / (2h). Throws
/// InvalidArgument when either probe leaves [-1, 1].
double fd_directional_derivative(const std::function<double(const PhaseField&)>& objective,
                                 const PhaseField& phi, const Eigen::VectorXd& direction, double h);

}  // namespace flowtopo
