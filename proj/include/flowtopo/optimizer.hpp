#pragma once

#include <exception>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "flowtopo/objective.hpp"
#include "flowtopo/phasefield.hpp"

namespace flowtopo {

struct VmptConfig {
  double mass_weight = 1.0;
  double gradient_weight = 0.0075;  // epsilon
  double initial_step = 1.0;
  double armijo = 1e-4;
  int max_backtracks = 30;
  double tolerance = 1e-6;  // on the H1 norm of consecutive iterates
  int max_iterations = 200;
  /// When positive, an iteration starts its line search at
  /// min(cap, step_growth * previous accepted step) instead of initial_step,
  /// where cap is max_step, or initial_step when max_step is zero.
  double step_growth = 0.0;
  double max_step = 0.0;
  int pdas_max_iterations = 100;

  void validate() const;
};

struct PdasOptions {
  int max_iterations = 100;
  /// Switch to the primal active-set method when the PDAS sets cycle. When
  /// false, cycling raises NonconvergenceError.
  bool fallback = true;
};

/// Minimizer of 1/2 (v - phi_k)^T A (v - phi_k) + tau_g^T (v - phi_k) over
/// [-1, 1]^N with its multipliers lambda = lambda_up - lambda_low, so that
/// A (v - phi_k) + tau_g + lambda = 0.
struct PdasResult {
  Eigen::VectorXd phi_new;
  Eigen::VectorXd lambda;
  std::vector<int> lower;  // nodes at -1
  std::vector<int> upper;  // nodes at +1
  int iterations = 0;
  bool used_fallback = false;
};

/// Throws InvalidArgument for a non-symmetric or non-positive-definite A and
/// for phi_k outside the box; NonconvergenceError when PDAS cycles with the
/// fallback disabled.
PdasResult pdas_project(const SparseMatrix& metric, const Eigen::VectorXd& phi_k,
                        const Eigen::VectorXd& tau_g, const PdasOptions& options = {});

struct KktReport {
  double stationarity = 0.0;      // ||A (v - phi_k) + tau_g + lambda||_inf
  double scale = 1.0;             // 1 + ||tau_g||_inf + ||A||_inf
  double sign_violation = 0.0;    // worst multiplier sign / complementarity violation
  double bound_violation = 0.0;   // max(|v| - 1, 0)
  bool holds(double stationarity_tol = 1e-10, double sign_tol = 1e-12) const {
    return stationarity <= stationarity_tol * scale && sign_violation <= sign_tol &&
           bound_violation == 0.0;
  }
};

KktReport pdas_kkt(const SparseMatrix& metric, const Eigen::VectorXd& phi_k,
                   const Eigen::VectorXd& tau_g, const PdasResult& result);

/// Metric m_w M + g_w K on the P1 space.
SparseMatrix vmpt_metric(const StructuredMesh& mesh, const VmptConfig& config);

struct IterationRecord {
  int iter = 0;
  ObjectiveBreakdown objective;  // at the accepted iterate
  double step = 0.0;             // accepted tau
  double h1_increment = 0.0;
  int backtracks = 0;
  int pdas_iterations = 0;
  std::size_t lower_active = 0;
  std::size_t upper_active = 0;
  KktReport kkt;
};

struct OptimizationHistory {
  ObjectiveBreakdown initial;
  std::vector<IterationRecord> iterations;
  Eigen::VectorXd final_phi;
  bool converged = false;
};

/// `iter,total,tracking,porous,regularization,step,h1_increment`; row 0 is the
/// initial point.
void write_history_csv(const OptimizationHistory& history, const std::string& path,
                       const std::vector<std::pair<std::string, std::string>>& provenance = {});

struct VmptState {
  PhaseField phi;
  ObjectiveBreakdown objective;
  double last_step = 0.0;
};

struct VmptStep {
  VmptState next;
  IterationRecord record;
  bool converged = false;
};

/// One projected step with Armijo backtracking. Throws StalledLineSearchError
/// when no trial is accepted and the last trial increment is above tolerance.
VmptStep vmpt_iterate(const VmptState& state, ReducedObjective& objective, const SparseMatrix& metric,
                      const SparseMatrix& h1_gram, const VmptConfig& config);

/// Failure inside `run`; carries the iterations completed so far and the
/// original exception.
class OptimizationFailure : public std::runtime_error {
 public:
  OptimizationFailure(const std::string& what, OptimizationHistory partial, std::exception_ptr cause)
      : std::runtime_error(what), partial_(std::move(partial)), cause_(std::move(cause)) {}
  const OptimizationHistory& partial() const noexcept { return partial_; }
  std::exception_ptr cause() const noexcept { return cause_; }

 private:
  OptimizationHistory partial_;
  std::exception_ptr cause_;
};

/// Receives each record together with the accepted iterate.
using IterationCallback = std::function<void(const IterationRecord&, const PhaseField&)>;

OptimizationHistory run_vmpt(ReducedObjective& objective, const PhaseField& phi0,
                             const VmptConfig& config, const IterationCallback& on_iteration = {});

}  // namespace flowtopo
