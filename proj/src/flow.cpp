#include "flowtopo/flow.hpp"

#include <cmath>
#include <sstream>

#include "flowtopo/errors.hpp"

namespace flowtopo {

FlowProblemData FlowProblemData::channel(double viscosity, double height, double ramp_rate) {
  FlowProblemData d;
  d.viscosity = viscosity;
  d.boundary_profile = [height](const Point2& x) -> Eigen::Vector2d {
    // the caller hands in boundary vertices only; walls are no-slip, and the
    // parabola vanishes at the corners so both branches agree there
    const double s = x.y() / height - 0.5;
    return {1.0 - 4.0 * s * s, 0.0};
  };
  d.ramp = [ramp_rate](double t) { return 1.0 - std::exp(-ramp_rate * t); };
  return d;
}

FlowProblemData FlowProblemData::quiescent(double viscosity) {
  FlowProblemData d;
  d.viscosity = viscosity;
  d.boundary_profile = [](const Point2&) -> Eigen::Vector2d { return Eigen::Vector2d::Zero(); };
  d.ramp = [](double) { return 1.0; };
  return d;
}

std::size_t step_count(double horizon, double dt) {
  if (!(horizon > 0.0) || !(dt > 0.0)) throw InvalidArgument("horizon and time step must be positive");
  const double ratio = horizon / dt;
  const double rounded = std::round(ratio);
  if (rounded < 1.0 || std::abs(ratio - rounded) > 1e-9) {
    std::ostringstream msg;
    msg << "T/dt = " << ratio << " is not an integer";
    throw InvalidArgument(msg.str());
  }
  return static_cast<std::size_t>(rounded);
}

SmallnessReport check_smallness(const FlowDiscretization& disc, const FlowProblemData& data,
                                double c_poincare, double c_ladyzhenskaya) {
  double force_norm = 0.0;
  if (data.stationary_force.size() > 0) force_norm = disc.l2_norm(data.stationary_force);
  SmallnessReport r{c_poincare, c_ladyzhenskaya,
                    2.0 * c_poincare * c_poincare * c_ladyzhenskaya * force_norm,
                    data.viscosity * data.viscosity, false};
  r.holds = r.lhs < r.rhs;
  return r;
}

namespace {

void require_nonnegative(const ScalarFieldP1& alpha) {
  const auto& v = alpha.values();
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (!(v[i] >= 0.0)) {
      std::ostringstream msg;
      msg << "porous coefficient " << v[i] << " at node " << i << " is negative";
      throw InvalidArgument(msg.str());
    }
  }
}

}  // namespace

SaddleSystem assemble_penalized_operator(const FlowDiscretization& disc, const ScalarFieldP1& alpha,
                                         double viscosity, ConvectionMode mode,
                                         const VelocityFieldMini* advecting) {
  require_nonnegative(alpha);
  if ((mode == ConvectionMode::None) != (advecting == nullptr)) {
    throw InvalidArgument("an advecting field is required exactly when convection is on");
  }
  OperatorTerms terms;
  terms.alpha = &alpha.values();
  terms.viscosity = viscosity;
  set_convection(terms, mode, advecting ? &advecting->coefficients() : nullptr);
  SaddleSystem sys;
  sys.matrix = disc.assemble(terms);
  sys.rhs = Eigen::VectorXd::Zero(sys.matrix.rows());
  return sys;
}

FlowSolver::FlowSolver(const StructuredMesh& mesh, FlowProblemData data)
    : disc_(mesh), data_(std::move(data)) {
  if (!(data_.viscosity > 0.0)) throw InvalidArgument("viscosity must be positive");
  if (!data_.boundary_profile) throw InvalidArgument("boundary profile missing");
  if (!data_.ramp) data_.ramp = [](double) { return 1.0; };
  const auto ndof = static_cast<Eigen::Index>(disc_.layout().velocity_dofs());
  for (const auto* f : {&data_.stationary_force, &data_.initial_velocity}) {
    if (f->size() != 0 && f->size() != ndof) throw InvalidArgument("force/initial field has wrong size");
  }

  // discrete flux balance of g_s: sum over boundary edges of the trapezoidal
  // normal flux must vanish relative to the inflow flux
  double net = 0.0;
  double inflow = 0.0;
  for (const auto& e : mesh.boundary_edges()) {
    const Point2& a = mesh.vertex(static_cast<std::size_t>(e.v0));
    const Point2& b = mesh.vertex(static_cast<std::size_t>(e.v1));
    const Eigen::Vector2d edge = b - a;
    Eigen::Vector2d normal;
    switch (e.tag) {
      case BoundaryTag::Inflow: normal = {-1.0, 0.0}; break;
      case BoundaryTag::Outflow: normal = {1.0, 0.0}; break;
      case BoundaryTag::Wall: normal = {0.0, a.y() == 0.0 ? -1.0 : 1.0}; break;
    }
    const double flux = 0.5 * edge.norm() *
                        (data_.boundary_profile(a) + data_.boundary_profile(b)).dot(normal);
    net += flux;
    if (flux < 0.0) inflow -= flux;
  }
  if (std::abs(net) > 1e-10 * inflow + 1e-14) {
    std::ostringstream msg;
    msg << "Dirichlet data is not flux balanced: net " << net << " vs inflow " << inflow;
    throw InvalidArgument(msg.str());
  }
}

Eigen::VectorXd FlowSolver::boundary_vector(double t) const {
  const double factor = t < 0.0 ? 1.0 : data_.ramp(t);
  return disc_.dirichlet_vector(data_.boundary_profile, factor);
}

void FlowSolver::validate_alpha(const ScalarFieldP1& alpha) const {
  if (alpha.size() != mesh().num_vertices()) throw InvalidArgument("alpha field size mismatch");
  require_nonnegative(alpha);
}

FlowState FlowSolver::make_state(const Eigen::VectorXd& velocity, const Eigen::VectorXd& pressure,
                                 double multiplier) const {
  return {VelocityFieldMini(mesh(), velocity), ScalarFieldP1(mesh(), pressure), multiplier};
}

CondensedLu FlowSolver::make_solver() const {
  const auto& layout = disc_.layout();
  const std::size_t nv = mesh().num_vertices();
  std::vector<std::vector<int>> groups;
  groups.reserve(mesh().num_triangles());
  for (std::size_t t = 0; t < mesh().num_triangles(); ++t) {
    const std::size_t d = 2 * (nv + t);
    groups.push_back({layout.free_index(d), layout.free_index(d + 1)});
  }
  return CondensedLu(std::move(groups));
}

StationaryResult FlowSolver::solve_stationary(const ScalarFieldP1& alpha,
                                              const NewtonOptions& options) const {
  validate_alpha(alpha);
  if (!(options.tolerance > 0.0)) throw InvalidArgument("Newton tolerance must be positive");
  const auto& layout = disc_.layout();
  const Eigen::VectorXd g = boundary_vector(-1.0);
  const Eigen::VectorXd force = data_.stationary_force.size() > 0
                                    ? disc_.load_vector(data_.stationary_force)
                                    : Eigen::VectorXd::Zero(g.size());
  const Eigen::VectorXd zero_p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout.pressure_dofs()));

  CondensedLu lu = make_solver();
  OperatorTerms stokes;
  stokes.alpha = &alpha.values();
  stokes.viscosity = data_.viscosity;

  // Stokes initial guess
  Eigen::VectorXd rhs = -disc_.saddle_residual(disc_.apply(stokes, g), g, zero_p, 0.0, force,
                                               Eigen::VectorXd::Zero(zero_p.size()));
  auto sol = disc_.unpack(lu.solve(disc_.assemble(stokes), rhs, false));
  Eigen::VectorXd v = g + sol.velocity;
  Eigen::VectorXd p = sol.pressure;
  double lambda = sol.multiplier;

  StationaryResult result;
  const Eigen::VectorXd zero_div = Eigen::VectorXd::Zero(zero_p.size());
  for (int it = 0;; ++it) {
    OperatorTerms nonlinear = stokes;
    nonlinear.advecting = &v;
    const Eigen::VectorXd residual =
        disc_.saddle_residual(disc_.apply(nonlinear, v), v, p, lambda, force, zero_div);
    result.residual_history.push_back(residual.norm());
    if (it >= options.max_iterations) {
      throw NonconvergenceError("Newton did not converge in " + std::to_string(options.max_iterations) +
                                    " iterations",
                                result.residual_history);
    }
    OperatorTerms jacobian = nonlinear;
    jacobian.derivative_about = &v;
    const auto delta = disc_.unpack(lu.solve(disc_.assemble(jacobian), -residual, false));
    v += delta.velocity;
    p += delta.pressure;
    lambda += delta.multiplier;
    result.newton_steps = it + 1;
    const double step = disc_.h1_seminorm(delta.velocity);
    if (!std::isfinite(step)) {
      throw NonconvergenceError("Newton iterate became non-finite", result.residual_history);
    }
    if (step <= options.tolerance) {
      nonlinear.advecting = &v;
      result.residual_history.push_back(
          disc_.saddle_residual(disc_.apply(nonlinear, v), v, p, lambda, force, zero_div).norm());
      break;
    }
  }
  result.state = make_state(v, p, lambda);
  return result;
}

FlowState FlowSolver::solve_stationary_linearized(const ScalarFieldP1& alpha,
                                                  const VelocityFieldMini& v1,
                                                  const VelocityFieldMini& v2,
                                                  const Eigen::VectorXd& load) const {
  validate_alpha(alpha);
  OperatorTerms terms;
  terms.alpha = &alpha.values();
  terms.viscosity = data_.viscosity;
  terms.advecting = &v2.coefficients();
  terms.derivative_about = &v1.coefficients();
  const Eigen::VectorXd zero_p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh().num_vertices()));
  const Eigen::VectorXd rhs = disc_.pack(load, zero_p, 0.0);
  CondensedLu lu = make_solver();
  const auto sol = disc_.unpack(lu.solve(disc_.assemble(terms), rhs, false));
  return make_state(sol.velocity, sol.pressure, sol.multiplier);
}

FlowState FlowSolver::solve_stationary_adjoint(const ScalarFieldP1& alpha, const VelocityFieldMini& v,
                                               const Eigen::VectorXd& load) const {
  validate_alpha(alpha);
  OperatorTerms terms;
  terms.alpha = &alpha.values();
  terms.viscosity = data_.viscosity;
  terms.advecting = &v.coefficients();
  terms.derivative_about = &v.coefficients();
  const Eigen::VectorXd zero_p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh().num_vertices()));
  const Eigen::VectorXd rhs = disc_.pack(load, zero_p, 0.0);
  CondensedLu lu = make_solver();
  const auto sol = disc_.unpack(lu.solve(disc_.assemble(terms), rhs, true));
  return make_state(sol.velocity, sol.pressure, sol.multiplier);
}

Trajectory FlowSolver::solve_transient(const ScalarFieldP1& alpha, double horizon, double dt) const {
  validate_alpha(alpha);
  const std::size_t steps = step_count(horizon, dt);
  const auto ndof = static_cast<Eigen::Index>(disc_.layout().velocity_dofs());
  const auto np = static_cast<Eigen::Index>(mesh().num_vertices());
  const Eigen::VectorXd zero_p = Eigen::VectorXd::Zero(np);

  Trajectory traj;
  traj.dt = dt;
  traj.states.reserve(steps + 1);
  Eigen::VectorXd u = data_.initial_velocity.size() > 0 ? data_.initial_velocity
                                                         : Eigen::VectorXd::Zero(ndof);
  {
    // Dirichlet entries of u^0 carry g(0)
    const Eigen::VectorXd g0 = boundary_vector(0.0);
    for (Eigen::Index d = 0; d < ndof; ++d)
      if (disc_.layout().is_dirichlet(static_cast<std::size_t>(d))) u[d] = g0[d];
  }
  traj.states.push_back(make_state(u, zero_p, 0.0));

  OperatorTerms mass;
  mass.mass = 1.0 / dt;
  CondensedLu lu = make_solver();
  for (std::size_t n = 1; n <= steps; ++n) {
    const double t = static_cast<double>(n) * dt;
    OperatorTerms step;
    step.mass = 1.0 / dt;
    step.alpha = &alpha.values();
    step.viscosity = data_.viscosity;
    step.advecting = &u;
    const Eigen::VectorXd g = boundary_vector(t);
    Eigen::VectorXd load = disc_.apply(mass, u);
    if (data_.transient_force) load += disc_.load_vector(data_.transient_force(t));
    const Eigen::VectorXd rhs =
        -disc_.saddle_residual(disc_.apply(step, g), g, zero_p, 0.0, load, Eigen::VectorXd::Zero(np));
    const auto sol = disc_.unpack(lu.solve(disc_.assemble(step), rhs, false));
    Eigen::VectorXd next = g + sol.velocity;
    traj.states.push_back(make_state(next, sol.pressure, sol.multiplier));
    u = std::move(next);
  }
  return traj;
}

Trajectory FlowSolver::solve_transient_linearized(const ScalarFieldP1& alpha, const Trajectory& forward,
                                                  const std::vector<Eigen::VectorXd>& loads) const {
  validate_alpha(alpha);
  const std::size_t steps = forward.steps();
  if (loads.size() != steps + 1) throw InvalidArgument("need one load per time level");
  const double dt = forward.dt;
  const auto np = static_cast<Eigen::Index>(mesh().num_vertices());
  const Eigen::VectorXd zero_p = Eigen::VectorXd::Zero(np);
  const auto ndof = static_cast<Eigen::Index>(disc_.layout().velocity_dofs());

  Trajectory out;
  out.dt = dt;
  out.states.push_back(make_state(Eigen::VectorXd::Zero(ndof), zero_p, 0.0));
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(ndof);
  CondensedLu lu = make_solver();
  for (std::size_t n = 1; n <= steps; ++n) {
    OperatorTerms step;
    step.mass = 1.0 / dt;
    step.alpha = &alpha.values();
    step.viscosity = data_.viscosity;
    step.advecting = &forward.states[n - 1].velocity.coefficients();
    // d F_n / d u^{n-1} = c(. ; u^n, .) - M / dt
    OperatorTerms coupling;
    coupling.mass = -1.0 / dt;
    coupling.derivative_about = &forward.states[n].velocity.coefficients();
    const Eigen::VectorXd source = loads[n] - disc_.apply(coupling, prev);
    const auto sol =
        disc_.unpack(lu.solve(disc_.assemble(step), disc_.pack(source, zero_p, 0.0), false));
    out.states.push_back(make_state(sol.velocity, sol.pressure, sol.multiplier));
    prev = sol.velocity;
  }
  return out;
}

Trajectory FlowSolver::solve_transient_adjoint(const ScalarFieldP1& alpha, const Trajectory& forward,
                                               const std::vector<Eigen::VectorXd>& loads) const {
  validate_alpha(alpha);
  const std::size_t steps = forward.steps();
  if (loads.size() != steps + 1) throw InvalidArgument("need one load per time level");
  if (!(forward.dt > 0.0)) throw InvalidArgument("forward trajectory has no time step");
  const double dt = forward.dt;
  const auto np = static_cast<Eigen::Index>(mesh().num_vertices());
  const Eigen::VectorXd zero_p = Eigen::VectorXd::Zero(np);
  const auto ndof = static_cast<Eigen::Index>(disc_.layout().velocity_dofs());

  Trajectory out;
  out.dt = dt;
  out.states.assign(steps + 1, make_state(Eigen::VectorXd::Zero(ndof), zero_p, 0.0));
  Eigen::VectorXd later = Eigen::VectorXd::Zero(ndof);  // adjoint velocity at n+1
  CondensedLu lu = make_solver();
  for (std::size_t n = steps; n >= 1; --n) {
    Eigen::VectorXd source = loads[n];
    if (n < steps) {
      OperatorTerms coupling;
      coupling.mass = -1.0 / dt;
      coupling.derivative_about = &forward.states[n + 1].velocity.coefficients();
      coupling.transposed = true;
      source -= disc_.apply(coupling, later);
    }
    OperatorTerms step;
    step.mass = 1.0 / dt;
    step.alpha = &alpha.values();
    step.viscosity = data_.viscosity;
    step.advecting = &forward.states[n - 1].velocity.coefficients();
    const auto sol =
        disc_.unpack(lu.solve(disc_.assemble(step), disc_.pack(source, zero_p, 0.0), true));
    out.states[n] = make_state(sol.velocity, sol.pressure, sol.multiplier);
    later = sol.velocity;
  }
  return out;
}

}  // namespace flowtopo
