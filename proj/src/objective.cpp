#include "flowtopo/objective.hpp"

#include <cmath>
#include <filesystem>
#include <iomanip>
#include <sstream>

#include "flowtopo/errors.hpp"
#include "flowtopo/field_io.hpp"

namespace flowtopo {

ObservationMask::ObservationMask(const StructuredMesh& mesh)
    : indicator_(Eigen::VectorXd::Ones(static_cast<Eigen::Index>(mesh.num_triangles()))) {}

ObservationMask::ObservationMask(const StructuredMesh& mesh, Eigen::VectorXd indicator)
    : indicator_(std::move(indicator)) {
  if (indicator_.size() != static_cast<Eigen::Index>(mesh.num_triangles()))
    throw InvalidArgument("observation mask needs one entry per triangle");
  for (Eigen::Index t = 0; t < indicator_.size(); ++t)
    if (indicator_[t] != 0.0 && indicator_[t] != 1.0)
      throw InvalidArgument("observation mask entries must be 0 or 1");
}

ObservationMask ObservationMask::from_predicate(const StructuredMesh& mesh,
                                                const std::function<bool(const Point2&)>& inside) {
  Eigen::VectorXd chi(static_cast<Eigen::Index>(mesh.num_triangles()));
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    const Point2 c = (mesh.vertex(tri[0]) + mesh.vertex(tri[1]) + mesh.vertex(tri[2])) / 3.0;
    chi[static_cast<Eigen::Index>(t)] = inside(c) ? 1.0 : 0.0;
  }
  return ObservationMask(mesh, std::move(chi));
}

void DesignParams::validate() const {
  interpolation.validate();
  if (!(regularization.epsilon > 0.0)) throw InvalidArgument("epsilon must be positive");
  if (!(regularization.gamma >= 0.0)) throw InvalidArgument("gamma must be nonnegative");
}

namespace {

std::string target_key(const FlowSolver& solver, const PhaseField& phi_d,
                       const InterpolationParams& params) {
  const auto& mesh = solver.mesh();
  std::ostringstream key;
  key << std::setprecision(17) << mesh.nx() << 'x' << mesh.ny() << ';' << mesh.width() << ';'
      << mesh.height() << ";mu=" << solver.data().viscosity << ";abar=" << params.alpha_bar
      << ";eps=" << params.epsilon << ";target=" << params.target_scale << ";phi=";
  for (Eigen::Index i = 0; i < phi_d.values().size(); ++i) key << phi_d.values()[i] << ',';
  const Eigen::VectorXd g = solver.boundary_vector(-1.0);
  key << ";g=";
  for (Eigen::Index i = 0; i < g.size(); ++i) key << g[i] << ',';
  return hash_string(key.str());
}

// Velocity at each quadrature point of triangle t.
using PointValues = std::array<Eigen::Vector2d, TriangleRule::kPoints>;

PointValues velocity_at_points(const FlowDiscretization& disc, std::size_t t, const Eigen::VectorXd& u) {
  const auto dofs = disc.element_dofs(t);
  const ElementBasis& eb = disc.basis()[t];
  PointValues out;
  for (std::size_t q = 0; q < TriangleRule::kPoints; ++q) {
    Eigen::Vector2d v = Eigen::Vector2d::Zero();
    for (std::size_t a = 0; a < kVelocityShapes; ++a)
      v += eb.points[q].shape[a] * Eigen::Vector2d(u[dofs[2 * a]], u[dofs[2 * a + 1]]);
    out[q] = v;
  }
  return out;
}

double p1_at(const ScalarFieldP1& f, const std::array<int, 3>& tri, const QuadPoint& qp) {
  return qp.lambda[0] * f[static_cast<std::size_t>(tri[0])] +
         qp.lambda[1] * f[static_cast<std::size_t>(tri[1])] +
         qp.lambda[2] * f[static_cast<std::size_t>(tri[2])];
}

// scale * int [(phi+1)(u-u_d) chi + 2 beta u] . N_j, the derivative of the
// tracking and porous integrands with respect to the velocity coefficients.
Eigen::VectorXd adjoint_source(const FlowDiscretization& disc, const ScalarFieldP1& phi,
                               const ScalarFieldP1& beta, const Eigen::VectorXd& u,
                               const Eigen::VectorXd& ud, const ObservationMask& mask, double scale) {
  const auto& mesh = disc.mesh();
  Eigen::VectorXd g = Eigen::VectorXd::Zero(u.size());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto dofs = disc.element_dofs(t);
    const auto& tri = mesh.triangle(t);
    const ElementBasis& eb = disc.basis()[t];
    const PointValues uq = velocity_at_points(disc, t, u);
    const PointValues dq = velocity_at_points(disc, t, ud);
    for (std::size_t q = 0; q < TriangleRule::kPoints; ++q) {
      const QuadPoint& qp = eb.points[q];
      const Eigen::Vector2d w =
          qp.weight * scale *
          ((p1_at(phi, tri, qp) + 1.0) * mask[t] * (uq[q] - dq[q]) + 2.0 * p1_at(beta, tri, qp) * uq[q]);
      for (std::size_t a = 0; a < kVelocityShapes; ++a) {
        g[dofs[2 * a]] += qp.shape[a] * w.x();
        g[dofs[2 * a + 1]] += qp.shape[a] * w.y();
      }
    }
  }
  return g;
}

// Adds scale * int [1/2 |u-u_d|^2 chi + beta' |u|^2] b_k - alpha' int (u . adj) b_k
// to the nodal dual vector `grad`. `adjoint` may be null.
void accumulate_design_terms(const FlowDiscretization& disc, const Eigen::VectorXd& u,
                             const Eigen::VectorXd& ud, const Eigen::VectorXd* adjoint,
                             const ObservationMask& mask, double alpha_slope, double beta_slope,
                             double scale, Eigen::VectorXd& grad) {
  const auto& mesh = disc.mesh();
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    const ElementBasis& eb = disc.basis()[t];
    const PointValues uq = velocity_at_points(disc, t, u);
    const PointValues dq = velocity_at_points(disc, t, ud);
    PointValues aq{};
    if (adjoint) aq = velocity_at_points(disc, t, *adjoint);
    for (std::size_t q = 0; q < TriangleRule::kPoints; ++q) {
      const QuadPoint& qp = eb.points[q];
      double density = scale * (0.5 * mask[t] * (uq[q] - dq[q]).squaredNorm() + beta_slope * uq[q].squaredNorm());
      if (adjoint) density -= alpha_slope * uq[q].dot(aq[q]);
      for (int v = 0; v < 3; ++v) grad[tri[v]] += qp.weight * qp.lambda[v] * density;
    }
  }
}

InterpolationFields design_fields(const PhaseField& phi, const DesignParams& params) {
  return interpolation_fields(phi, params.interpolation, false);
}

void check_same_mesh(const FlowSolver& solver, const PhaseField& phi, const VelocityFieldMini& target) {
  if (&phi.mesh() != &solver.mesh() && !phi.mesh().same_grid(solver.mesh()))
    throw InvalidArgument("phase field lives on a different mesh");
  if (target.coefficients().size() != static_cast<Eigen::Index>(solver.discretization().layout().velocity_dofs()))
    throw InvalidArgument("target velocity has the wrong size");
}

}  // namespace

StateIntegrals state_integrals(const FlowDiscretization& disc, const ScalarFieldP1& phi,
                               const ScalarFieldP1& beta, const VelocityFieldMini& u,
                               const VelocityFieldMini& target, const ObservationMask& mask) {
  const auto& mesh = disc.mesh();
  StateIntegrals s;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangle(t);
    const ElementBasis& eb = disc.basis()[t];
    const PointValues uq = velocity_at_points(disc, t, u.coefficients());
    const PointValues dq = velocity_at_points(disc, t, target.coefficients());
    for (std::size_t q = 0; q < TriangleRule::kPoints; ++q) {
      const QuadPoint& qp = eb.points[q];
      s.tracking += qp.weight * mask[t] * 0.5 * (p1_at(phi, tri, qp) + 1.0) * (uq[q] - dq[q]).squaredNorm();
      s.porous += qp.weight * p1_at(beta, tri, qp) * uq[q].squaredNorm();
    }
  }
  return s;
}

VelocityFieldMini make_target_velocity(const FlowSolver& solver, const PhaseField& phi_d,
                                       const InterpolationParams& params,
                                       const std::string& cache_path, const NewtonOptions& newton,
                                       const Provenance& provenance) {
  params.validate();
  const std::string key = target_key(solver, phi_d, params);
  if (!cache_path.empty() && std::filesystem::exists(cache_path)) {
    for (const auto& [k, v] : read_provenance(cache_path)) {
      if (k == "target_key" && v == key) return read_velocity_csv(solver.mesh(), cache_path);
    }
  }
  const InterpolationFields fields = interpolation_fields(phi_d, params, true);
  VelocityFieldMini ud = solver.solve_stationary(fields.alpha, newton).state.velocity;
  if (!cache_path.empty()) {
    Provenance tags{{"target_key", key}};
    tags.insert(tags.end(), provenance.begin(), provenance.end());
    write_velocity_csv(ud, cache_path, tags);
  }
  return ud;
}

StationaryObjective::StationaryObjective(const FlowSolver& solver, VelocityFieldMini target,
                                         ObservationMask mask, DesignParams params,
                                         NewtonOptions newton)
    : solver_(&solver), target_(std::move(target)), mask_(std::move(mask)), params_(params),
      newton_(newton) {
  params_.validate();
}

void StationaryObjective::ensure_state(const PhaseField& phi) {
  check_same_mesh(*solver_, phi, target_);
  if (phi_ && *phi_ == phi.values()) return;
  const InterpolationFields f = design_fields(phi, params_);
  state_ = solver_->solve_stationary(f.alpha, newton_).state;
  phi_ = phi.values();
}

ObjectiveBreakdown StationaryObjective::evaluate(const PhaseField& phi) {
  ensure_state(phi);
  const InterpolationFields f = design_fields(phi, params_);
  const StateIntegrals s = state_integrals(solver_->discretization(), phi.field(), f.beta,
                                           state_->velocity, target_, mask_);
  ObjectiveBreakdown b;
  b.tracking = s.tracking;
  b.porous_penalty = s.porous;
  b.regularization = params_.regularization.gamma * gl_energy(phi.field(), params_.regularization);
  b.total = b.tracking + b.porous_penalty + b.regularization;
  return b;
}

Eigen::VectorXd StationaryObjective::gradient(const PhaseField& phi) {
  ensure_state(phi);
  const auto& disc = solver_->discretization();
  const InterpolationFields f = design_fields(phi, params_);
  const Eigen::VectorXd& v = state_->velocity.coefficients();
  const Eigen::VectorXd source =
      adjoint_source(disc, phi.field(), f.beta, v, target_.coefficients(), mask_, 1.0);
  const FlowState adj = solver_->solve_stationary_adjoint(f.alpha, state_->velocity, source);
  Eigen::VectorXd grad = gl_derivative(phi.field(), params_.regularization);
  accumulate_design_terms(disc, v, target_.coefficients(), &adj.velocity.coefficients(), mask_,
                          params_.interpolation.alpha_slope(), params_.interpolation.beta_slope(), 1.0,
                          grad);
  return grad;
}

TransientObjective::TransientObjective(const FlowSolver& solver, VelocityFieldMini target,
                                       ObservationMask mask, DesignParams params, double horizon,
                                       double dt)
    : solver_(&solver), target_(std::move(target)), mask_(std::move(mask)), params_(params),
      horizon_(horizon), dt_(dt) {
  params_.validate();
  step_count(horizon, dt);
}

void TransientObjective::ensure_state(const PhaseField& phi) {
  check_same_mesh(*solver_, phi, target_);
  if (phi_ && *phi_ == phi.values()) return;
  trajectory_.reset();  // release the old trajectory before allocating the new one
  const InterpolationFields f = design_fields(phi, params_);
  trajectory_ = solver_->solve_transient(f.alpha, horizon_, dt_);
  phi_ = phi.values();
}

ObjectiveBreakdown TransientObjective::evaluate(const PhaseField& phi) {
  ensure_state(phi);
  const InterpolationFields f = design_fields(phi, params_);
  ObjectiveBreakdown b;
  const double w = dt_ / horizon_;
  // right-endpoint rule: n = 1..N
  for (std::size_t n = 1; n < trajectory_->states.size(); ++n) {
    const StateIntegrals s = state_integrals(solver_->discretization(), phi.field(), f.beta,
                                             trajectory_->states[n].velocity, target_, mask_);
    b.tracking += w * s.tracking;
    b.porous_penalty += w * s.porous;
  }
  b.regularization = params_.regularization.gamma * gl_energy(phi.field(), params_.regularization);
  b.total = b.tracking + b.porous_penalty + b.regularization;
  return b;
}

Eigen::VectorXd TransientObjective::gradient(const PhaseField& phi) {
  ensure_state(phi);
  const auto& disc = solver_->discretization();
  const InterpolationFields f = design_fields(phi, params_);
  const double w = dt_ / horizon_;
  const std::size_t steps = trajectory_->steps();
  std::vector<Eigen::VectorXd> sources(steps + 1);
  sources[0] = Eigen::VectorXd::Zero(target_.coefficients().size());
  for (std::size_t n = 1; n <= steps; ++n) {
    sources[n] = adjoint_source(disc, phi.field(), f.beta, trajectory_->states[n].velocity.coefficients(),
                                target_.coefficients(), mask_, w);
  }
  const Trajectory adj = solver_->solve_transient_adjoint(f.alpha, *trajectory_, sources);
  Eigen::VectorXd grad = gl_derivative(phi.field(), params_.regularization);
  const double a_slope = params_.interpolation.alpha_slope();
  const double b_slope = params_.interpolation.beta_slope();
  for (std::size_t n = 1; n <= steps; ++n) {
    // the adjoint already carries the dt/T weight through its sources
    accumulate_design_terms(disc, trajectory_->states[n].velocity.coefficients(), target_.coefficients(),
                            nullptr, mask_, a_slope, b_slope, w, grad);
    accumulate_design_terms(disc, trajectory_->states[n].velocity.coefficients(), target_.coefficients(),
                            &adj.states[n].velocity.coefficients(), mask_, a_slope, 0.0, 0.0, grad);
  }
  return grad;
}

ObjectiveBreakdown eval_stationary_objective(const FlowSolver& solver, const PhaseField& phi,
                                             const VelocityFieldMini& target,
                                             const ObservationMask& mask, const DesignParams& params) {
  StationaryObjective j(solver, target, mask, params);
  return j.evaluate(phi);
}

ObjectiveBreakdown eval_transient_objective(const FlowSolver& solver, const PhaseField& phi,
                                            const VelocityFieldMini& target,
                                            const ObservationMask& mask, const DesignParams& params,
                                            double horizon, double dt) {
  TransientObjective j(solver, target, mask, params, horizon, dt);
  return j.evaluate(phi);
}

Eigen::VectorXd reduced_gradient_stationary(const FlowSolver& solver, const PhaseField& phi,
                                            const VelocityFieldMini& target,
                                            const ObservationMask& mask, const DesignParams& params) {
  StationaryObjective j(solver, target, mask, params);
  return j.gradient(phi);
}

Eigen::VectorXd reduced_gradient_transient(const FlowSolver& solver, const PhaseField& phi,
                                           const VelocityFieldMini& target,
                                           const ObservationMask& mask, const DesignParams& params,
                                           double horizon, double dt) {
  TransientObjective j(solver, target, mask, params, horizon, dt);
  return j.gradient(phi);
}

double fd_directional_derivative(const std::function<double(const PhaseField&)>& objective,
                                 const PhaseField& phi, const Eigen::VectorXd& direction, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite-difference step must be positive");
  if (direction.size() != phi.values().size()) throw InvalidArgument("direction size mismatch");
  const Eigen::VectorXd plus = phi.values() + h * direction;
  const Eigen::VectorXd minus = phi.values() - h * direction;
  if (plus.cwiseAbs().maxCoeff() > 1.0 || minus.cwiseAbs().maxCoeff() > 1.0)
    throw InvalidArgument("finite-difference probe leaves [-1, 1]");
  const double jp = objective(PhaseField(ScalarFieldP1(phi.mesh(), plus)));
  const double jm = objective(PhaseField(ScalarFieldP1(phi.mesh(), minus)));
  return (jp - jm) / (2.0 * h);
}

}  // namespace flowtopo
