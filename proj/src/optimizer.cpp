#include "flowtopo/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>

#include <Eigen/SparseCholesky>

#include "flowtopo/errors.hpp"
#include "flowtopo/p1_operators.hpp"

namespace flowtopo {

void VmptConfig::validate() const {
  if (!(mass_weight > 0.0) || !(gradient_weight > 0.0)) throw InvalidArgument("metric weights must be positive");
  if (!(initial_step > 0.0)) throw InvalidArgument("initial step must be positive");
  if (!(armijo > 0.0 && armijo < 1.0)) throw InvalidArgument("Armijo constant must lie in (0, 1)");
  if (max_backtracks < 0) throw InvalidArgument("max backtracks must be nonnegative");
  if (!(tolerance > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (max_iterations < 1) throw InvalidArgument("max iterations must be positive");
  if (step_growth < 0.0) throw InvalidArgument("step growth must be nonnegative");
  if (max_step != 0.0 && !(max_step >= initial_step))
    throw InvalidArgument("max step must be zero or at least the initial step");
  if (pdas_max_iterations < 1) throw InvalidArgument("PDAS iteration limit must be positive");
}

namespace {

// -1 lower, 0 inactive, +1 upper
using SetState = std::vector<signed char>;

SparseMatrix principal_submatrix(const SparseMatrix& a, const std::vector<int>& map, int size) {
  std::vector<Eigen::Triplet<double>> trip;
  for (int c = 0; c < a.outerSize(); ++c) {
    if (map[static_cast<std::size_t>(c)] < 0) continue;
    for (SparseMatrix::InnerIterator it(a, c); it; ++it) {
      const int r = map[static_cast<std::size_t>(it.row())];
      if (r >= 0) trip.emplace_back(r, map[static_cast<std::size_t>(c)], it.value());
    }
  }
  SparseMatrix sub(size, size);
  sub.setFromTriplets(trip.begin(), trip.end());
  return sub;
}

// Solves A_FF d_F = -(tau_g + A_{F,fixed} d_fixed) for the free entries of d.
void solve_free(const SparseMatrix& a, const Eigen::VectorXd& tau_g, const SetState& fixed,
                Eigen::VectorXd& d) {
  const auto n = static_cast<int>(d.size());
  std::vector<int> map(static_cast<std::size_t>(n), -1);
  int nf = 0;
  Eigen::VectorXd d_fixed = d;
  for (int i = 0; i < n; ++i) {
    if (fixed[static_cast<std::size_t>(i)] == 0) {
      map[static_cast<std::size_t>(i)] = nf++;
      d_fixed[i] = 0.0;
    }
  }
  if (nf == 0) return;
  const Eigen::VectorXd rhs_full = -(tau_g + a * d_fixed);
  Eigen::VectorXd rhs(nf);
  for (int i = 0; i < n; ++i)
    if (map[static_cast<std::size_t>(i)] >= 0) rhs[map[static_cast<std::size_t>(i)]] = rhs_full[i];
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(principal_submatrix(a, map, nf));
  if (ldlt.info() != Eigen::Success) throw InvalidArgument("metric block is not positive definite");
  const Eigen::VectorXd x = ldlt.solve(rhs);
  for (int i = 0; i < n; ++i)
    if (map[static_cast<std::size_t>(i)] >= 0) d[i] = x[map[static_cast<std::size_t>(i)]];
}

void require_spd(const SparseMatrix& a) {
  if (a.rows() != a.cols()) throw InvalidArgument("metric must be square");
  const SparseMatrix at = a.transpose();
  const double norm = a.norm();
  if (!((a - at).norm() <= 1e-12 * norm)) throw InvalidArgument("metric must be symmetric");
  Eigen::SimplicialLDLT<SparseMatrix> ldlt(a);
  if (ldlt.info() != Eigen::Success || !(ldlt.vectorD().minCoeff() > 0.0))
    throw InvalidArgument("metric must be positive definite");
}

// d-space bounds: -1 - phi_k <= d <= 1 - phi_k
struct Box {
  Eigen::VectorXd lo, hi;
};

PdasResult finish(const SparseMatrix& a, const Eigen::VectorXd& phi_k, const Eigen::VectorXd& tau_g,
                  const Eigen::VectorXd& d, const SetState& state, int iterations, bool fallback) {
  PdasResult r;
  r.phi_new = phi_k + d;
  const Eigen::VectorXd residual = a * d + tau_g;
  r.lambda = Eigen::VectorXd::Zero(d.size());
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const auto s = state[static_cast<std::size_t>(i)];
    if (s > 0) {
      r.phi_new[i] = 1.0;
      r.upper.push_back(static_cast<int>(i));
      r.lambda[i] = -residual[i];
    } else if (s < 0) {
      r.phi_new[i] = -1.0;
      r.lower.push_back(static_cast<int>(i));
      r.lambda[i] = -residual[i];
    } else {
      r.phi_new[i] = std::clamp(r.phi_new[i], -1.0, 1.0);
    }
  }
  r.iterations = iterations;
  r.used_fallback = fallback;
  return r;
}

// Primal active-set method for the box QP in d; finite for strictly convex
// problems. Used only when the PDAS sets cycle.
PdasResult primal_active_set(const SparseMatrix& a, const Eigen::VectorXd& phi_k,
                             const Eigen::VectorXd& tau_g, int pdas_iterations) {
  const auto n = static_cast<int>(phi_k.size());
  Box box{Eigen::VectorXd::Constant(n, -1.0) - phi_k, Eigen::VectorXd::Constant(n, 1.0) - phi_k};
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  SetState state(static_cast<std::size_t>(n), 0);
  const double scale = 1.0 + tau_g.lpNorm<Eigen::Infinity>();
  const int limit = 20 * n + 100;
  for (int it = 1; it <= limit; ++it) {
    Eigen::VectorXd target = d;
    solve_free(a, tau_g, state, target);
    const Eigen::VectorXd p = target - d;
    double step = 1.0;
    int blocking = -1;
    for (int i = 0; i < n; ++i) {
      if (state[static_cast<std::size_t>(i)] != 0) continue;
      double t = 1.0;
      if (p[i] > 0.0) t = (box.hi[i] - d[i]) / p[i];
      else if (p[i] < 0.0) t = (box.lo[i] - d[i]) / p[i];
      if (t < step) {
        step = std::max(t, 0.0);
        blocking = i;
      }
    }
    if (blocking >= 0) {
      d += step * p;
      state[static_cast<std::size_t>(blocking)] = p[blocking] > 0.0 ? 1 : -1;
      d[blocking] = p[blocking] > 0.0 ? box.hi[blocking] : box.lo[blocking];
      continue;
    }
    d = target;
    const Eigen::VectorXd residual = a * d + tau_g;
    int worst = -1;
    double worst_value = 1e-14 * scale;
    for (int i = 0; i < n; ++i) {
      const auto s = state[static_cast<std::size_t>(i)];
      // lambda = -residual must be >= 0 at the upper and <= 0 at the lower bound
      const double violation = s > 0 ? residual[i] : (s < 0 ? -residual[i] : 0.0);
      if (violation > worst_value) {
        worst_value = violation;
        worst = i;
      }
    }
    if (worst < 0) return finish(a, phi_k, tau_g, d, state, pdas_iterations + it, true);
    state[static_cast<std::size_t>(worst)] = 0;
  }
  throw NonconvergenceError("primal active-set method did not terminate", {});
}

}  // namespace

PdasResult pdas_project(const SparseMatrix& metric, const Eigen::VectorXd& phi_k,
                        const Eigen::VectorXd& tau_g, const PdasOptions& options) {
  const auto n = static_cast<int>(phi_k.size());
  if (metric.rows() != n || tau_g.size() != n) throw InvalidArgument("PDAS dimension mismatch");
  if (n > 0 && phi_k.cwiseAbs().maxCoeff() > 1.0) throw InvalidArgument("phi_k must lie in [-1, 1]");
  require_spd(metric);
  if (n == 0) return {};

  SetState state(static_cast<std::size_t>(n), 0);
  std::set<SetState> seen{state};
  std::vector<double> change_history;
  Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
  for (int it = 1; it <= options.max_iterations; ++it) {
    for (int i = 0; i < n; ++i) {
      const auto s = state[static_cast<std::size_t>(i)];
      if (s > 0) d[i] = 1.0 - phi_k[i];
      if (s < 0) d[i] = -1.0 - phi_k[i];
    }
    solve_free(metric, tau_g, state, d);
    const Eigen::VectorXd residual = metric * d + tau_g;
    SetState next(static_cast<std::size_t>(n), 0);
    int changes = 0;
    for (int i = 0; i < n; ++i) {
      const auto s = state[static_cast<std::size_t>(i)];
      const double lambda = s == 0 ? 0.0 : -residual[i];
      const double v = phi_k[i] + d[i];
      if (lambda + (v - 1.0) > 0.0) next[static_cast<std::size_t>(i)] = 1;
      else if (lambda + (v + 1.0) < 0.0) next[static_cast<std::size_t>(i)] = -1;
      changes += next[static_cast<std::size_t>(i)] != s;
    }
    change_history.push_back(changes);
    if (changes == 0) return finish(metric, phi_k, tau_g, d, state, it, false);
    if (!seen.insert(next).second) {
      if (!options.fallback) throw NonconvergenceError("PDAS active sets cycle", change_history);
      return primal_active_set(metric, phi_k, tau_g, it);
    }
    state = std::move(next);
  }
  if (!options.fallback) throw NonconvergenceError("PDAS iteration limit reached", change_history);
  return primal_active_set(metric, phi_k, tau_g, options.max_iterations);
}

KktReport pdas_kkt(const SparseMatrix& metric, const Eigen::VectorXd& phi_k,
                   const Eigen::VectorXd& tau_g, const PdasResult& result) {
  KktReport k;
  const Eigen::VectorXd d = result.phi_new - phi_k;
  k.stationarity = (metric * d + tau_g + result.lambda).lpNorm<Eigen::Infinity>();
  double a_inf = 0.0;
  {
    Eigen::VectorXd row_sums = Eigen::VectorXd::Zero(metric.rows());
    for (int c = 0; c < metric.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(metric, c); it; ++it) row_sums[it.row()] += std::abs(it.value());
    if (row_sums.size() > 0) a_inf = row_sums.maxCoeff();
  }
  k.scale = 1.0 + (tau_g.size() > 0 ? tau_g.lpNorm<Eigen::Infinity>() : 0.0) + a_inf;
  std::vector<signed char> state(static_cast<std::size_t>(d.size()), 0);
  for (int i : result.upper) state[static_cast<std::size_t>(i)] = 1;
  for (int i : result.lower) state[static_cast<std::size_t>(i)] = -1;
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    const double l = result.lambda[i];
    const double v = result.phi_new[i];
    const auto s = state[static_cast<std::size_t>(i)];
    double violation = 0.0;
    if (s > 0) violation = std::max(-l, std::abs(v - 1.0));
    else if (s < 0) violation = std::max(l, std::abs(v + 1.0));
    else violation = std::abs(l);
    k.sign_violation = std::max(k.sign_violation, violation);
    k.bound_violation = std::max(k.bound_violation, std::abs(v) - 1.0);
  }
  k.bound_violation = std::max(k.bound_violation, 0.0);
  return k;
}

SparseMatrix vmpt_metric(const StructuredMesh& mesh, const VmptConfig& config) {
  config.validate();
  SparseMatrix a = config.mass_weight * p1_mass_matrix(mesh) + config.gradient_weight * p1_stiffness_matrix(mesh);
  a.makeCompressed();
  return a;
}

void write_history_csv(const OptimizationHistory& history, const std::string& path,
                       const std::vector<std::pair<std::string, std::string>>& provenance) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& [k, v] : provenance) out << "# " << k << '=' << v << '\n';
  out << "iter,total,tracking,porous,regularization,step,h1_increment\n";
  out << std::setprecision(17);
  const auto row = [&](int iter, const ObjectiveBreakdown& b, double step, double inc) {
    out << iter << ',' << b.total << ',' << b.tracking << ',' << b.porous_penalty << ','
        << b.regularization << ',' << step << ',' << inc << '\n';
  };
  row(0, history.initial, 0.0, 0.0);
  for (const auto& r : history.iterations) row(r.iter, r.objective, r.step, r.h1_increment);
  if (!out) throw IoError("failed writing " + path);
}

VmptStep vmpt_iterate(const VmptState& state, ReducedObjective& objective, const SparseMatrix& metric,
                      const SparseMatrix& h1_gram, const VmptConfig& config) {
  config.validate();
  const Eigen::VectorXd& phi_k = state.phi.values();
  const Eigen::VectorXd g = objective.gradient(state.phi);
  double tau = config.initial_step;
  if (config.step_growth > 0.0 && state.last_step > 0.0)
    tau = std::min(config.max_step > 0.0 ? config.max_step : config.initial_step,
                   config.step_growth * state.last_step);

  PdasOptions pdas;
  pdas.max_iterations = config.pdas_max_iterations;
  std::vector<double> rejected;
  double increment = 0.0;
  for (int b = 0; b <= config.max_backtracks; ++b, tau *= 0.5) {
    const Eigen::VectorXd tau_g = tau * g;
    const PdasResult proj = pdas_project(metric, phi_k, tau_g, pdas);
    const Eigen::VectorXd d = proj.phi_new - phi_k;
    increment = std::sqrt(std::max(0.0, d.dot(h1_gram * d)));

    VmptStep out{state, {}, false};
    out.record.step = tau;
    out.record.h1_increment = increment;
    out.record.backtracks = b;
    out.record.pdas_iterations = proj.iterations;
    out.record.lower_active = proj.lower.size();
    out.record.upper_active = proj.upper.size();
    out.record.kkt = pdas_kkt(metric, phi_k, tau_g, proj);
    if (increment == 0.0) {
      // projected gradient vanishes: phi_k is stationary
      out.record.objective = state.objective;
      out.record.step = tau;
      out.converged = true;
      return out;
    }
    PhaseField trial(ScalarFieldP1(state.phi.mesh(), proj.phi_new));
    const ObjectiveBreakdown jt = objective.evaluate(trial);
    if (jt.total <= state.objective.total + config.armijo * g.dot(d)) {
      out.next = VmptState{std::move(trial), jt, tau};
      out.record.objective = jt;
      out.converged = increment <= config.tolerance;
      return out;
    }
    rejected.push_back(jt.total);
  }
  if (increment <= config.tolerance) {
    VmptStep out{state, {}, true};
    out.record.objective = state.objective;
    out.record.h1_increment = 0.0;
    out.record.backtracks = config.max_backtracks;
    return out;
  }
  throw StalledLineSearchError("no Armijo step after " + std::to_string(config.max_backtracks) +
                                   " backtracks",
                               rejected);
}

OptimizationHistory run_vmpt(ReducedObjective& objective, const PhaseField& phi0,
                             const VmptConfig& config, const IterationCallback& on_iteration) {
  config.validate();
  OptimizationHistory history;
  history.final_phi = phi0.values();
  try {
    const SparseMatrix metric = vmpt_metric(phi0.mesh(), config);
    SparseMatrix gram = p1_mass_matrix(phi0.mesh()) + p1_stiffness_matrix(phi0.mesh());
    gram.makeCompressed();
    VmptState state{phi0, objective.evaluate(phi0), 0.0};
    history.initial = state.objective;
    for (int k = 1; k <= config.max_iterations; ++k) {
      VmptStep step = vmpt_iterate(state, objective, metric, gram, config);
      step.record.iter = k;
      history.iterations.push_back(step.record);
      if (on_iteration) on_iteration(step.record, step.next.phi);
      state = std::move(step.next);
      history.final_phi = state.phi.values();
      if (step.converged) {
        history.converged = true;
        break;
      }
    }
  } catch (const std::exception& e) {
    throw OptimizationFailure(e.what(), history, std::current_exception());
  }
  return history;
}

}  // namespace flowtopo
