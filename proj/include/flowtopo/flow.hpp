#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "flowtopo/assembly.hpp"
#include "flowtopo/fields.hpp"
#include "flowtopo/linear_solver.hpp"
#include "flowtopo/mesh.hpp"

namespace flowtopo {

/// Data of the penalized Navier-Stokes problems on the hold-all rectangle.
/// Force fields are full MINI coefficient vectors; empty means zero.
struct FlowProblemData {
  double viscosity = 0.5;
  /// Stationary Dirichlet profile g_s on the whole boundary.
  std::function<Eigen::Vector2d(const Point2&)> boundary_profile;
  /// Transient boundary data g(t) = ramp(t) * g_s.
  std::function<double(double)> ramp;
  Eigen::VectorXd stationary_force;
  std::function<Eigen::VectorXd(double)> transient_force;
  /// u_0 as MINI coefficients (Dirichlet entries are overwritten by g(0)).
  Eigen::VectorXd initial_velocity;

  /// Channel flow: parabolic profile (1 - 4 (x2/H - 1/2)^2, 0) on the inflow
  /// and outflow edges, no-slip walls, ramp 1 - exp(-rate t), u_0 = 0, f = 0.
  static FlowProblemData channel(double viscosity, double height = 1.0, double ramp_rate = 30.0);
  /// Homogeneous Dirichlet data, zero forces and initial state.
  static FlowProblemData quiescent(double viscosity);
};

struct FlowState {
  VelocityFieldMini velocity;
  ScalarFieldP1 pressure;
  double multiplier = 0.0;
};

/// States u^0..u^N on a uniform grid t^n = n dt. Adjoint trajectories use the
/// same indexing (entry n pairs with forward step n; entry 0 is unused).
struct Trajectory {
  double dt = 0.0;
  std::vector<FlowState> states;
  std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }
};

struct NewtonOptions {
  double tolerance = 1e-10;  // on ||v_{k+1} - v_k||_V
  int max_iterations = 30;
};

struct StationaryResult {
  FlowState state;
  std::vector<double> residual_history;  // saddle residual norms, one per iterate
  int newton_steps = 0;
};

/// Advisory smallness report 2 c_P^2 c_L ||f_s|| < mu^2.
struct SmallnessReport {
  double c_poincare;
  double c_ladyzhenskaya;
  double lhs;
  double rhs;
  bool holds;
};

SmallnessReport check_smallness(const FlowDiscretization& disc, const FlowProblemData& data,
                                double c_poincare, double c_ladyzhenskaya);

/// Number of steps for horizon T, rejecting T/dt that is not integral to 1e-9.
std::size_t step_count(double horizon, double dt);

/// Saddle operator: mu K + M_alpha (+ convection per mode) with the divergence
/// blocks and the mean-zero multiplier; rhs is zero. Throws on negative alpha.
SaddleSystem assemble_penalized_operator(const FlowDiscretization& disc, const ScalarFieldP1& alpha,
                                         double viscosity, ConvectionMode mode,
                                         const VelocityFieldMini* advecting);

/// Stationary, transient, linearized and adjoint solvers for one problem.
/// The porous coefficient alpha is nodal and nonnegative; it is the only way
/// the design enters the flow. Convection is always the skew-symmetric form.
class FlowSolver {
 public:
  FlowSolver(const StructuredMesh& mesh, FlowProblemData data);

  const FlowDiscretization& discretization() const { return disc_; }
  const FlowProblemData& data() const { return data_; }
  const StructuredMesh& mesh() const { return disc_.mesh(); }

  StationaryResult solve_stationary(const ScalarFieldP1& alpha,
                                    const NewtonOptions& options = {}) const;

  /// Solves a(w,.) + c(w; v1, .) + c(v2; w, .) = <F, .> with homogeneous
  /// Dirichlet data. F is a dual vector over full velocity dofs.
  FlowState solve_stationary_linearized(const ScalarFieldP1& alpha, const VelocityFieldMini& v1,
                                        const VelocityFieldMini& v2,
                                        const Eigen::VectorXd& load) const;
  /// Transpose of the linearized operator about v1 = v2 = v.
  FlowState solve_stationary_adjoint(const ScalarFieldP1& alpha, const VelocityFieldMini& v,
                                     const Eigen::VectorXd& load) const;

  /// IMEX recursion with lagged advecting velocity, one saddle solve per step.
  Trajectory solve_transient(const ScalarFieldP1& alpha, double horizon, double dt) const;

  /// Forward sensitivity of the IMEX recursion: per-step dual sources
  /// `loads[n]` (n = 1..N, entry 0 ignored), zero initial perturbation.
  Trajectory solve_transient_linearized(const ScalarFieldP1& alpha, const Trajectory& forward,
                                        const std::vector<Eigen::VectorXd>& loads) const;

  /// Exact discrete adjoint of the IMEX recursion with per-step dual sources
  /// `loads[n]` and zero terminal data: for all sources F,
  /// sum_n <loads[n], du^n> = sum_n <adjoint^n, F^n>.
  Trajectory solve_transient_adjoint(const ScalarFieldP1& alpha, const Trajectory& forward,
                                     const std::vector<Eigen::VectorXd>& loads) const;

  /// Full-vector boundary data at time t (stationary profile when t < 0).
  Eigen::VectorXd boundary_vector(double t) const;

 private:
  void validate_alpha(const ScalarFieldP1& alpha) const;
  FlowState make_state(const Eigen::VectorXd& velocity, const Eigen::VectorXd& pressure,
                       double multiplier) const;
  /// Direct solver that condenses the bubble pair of every triangle.
  CondensedLu make_solver() const;

  FlowDiscretization disc_;
  FlowProblemData data_;
};

}  // namespace flowtopo
