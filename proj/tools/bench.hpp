#pragma once

#include <array>
#include <cstdint>
#include <exception>
#include <iosfwd>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "flowtopo/field_io.hpp"
#include "flowtopo/flow.hpp"
#include "flowtopo/objective.hpp"
#include "flowtopo/optimizer.hpp"

namespace flowtopo::bench {

enum ExitCode : int {
  kSuccess = 0,
  kFailure = 1,
  kVerificationFailure = 2,
  kNonconvergence = 3,
  kConfigError = 4,
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Segment {
  Point2 p0;
  Point2 p1;
};

/// Defaults are the full-scale setup; configs/desk.cfg holds the reduced one.
struct BenchConfig {
  int nx = 600;
  int ny = 200;
  double width = 3.0;
  double height = 1.0;

  double viscosity = 0.5;
  double ramp_rate = 30.0;

  DesignParams design;  // epsilon is shared by interpolation and regularization

  Point2 target_center{1.5, 0.5};
  Eigen::Vector2d target_axes{30.0, 80.0};

  double dt = 0.0125;
  std::vector<double> horizons{0.5, 1.0, 2.0, 4.0, 8.0, 16.0};

  VmptConfig optimizer;  // gradient_weight follows epsilon unless given
  NewtonOptions newton{1e-10, 30};

  std::string output_dir = "out";
  std::string target_cache;  // empty: <output_dir>/u_d.csv

  /// x0, x1, y0, y1; empty means the whole domain.
  std::optional<std::array<double, 4>> observation_box;
  int snapshot_stride = 0;

  std::vector<Segment> cross_sections{{Point2(1.5, 0.6), Point2(1.5, 0.65)},
                                      {Point2(1.7125, 0.5), Point2(1.755, 0.5)}};
  int cross_section_samples = 101;

  double gradient_check_horizon = 0.5;
  int gradient_check_directions = 5;
  std::vector<double> gradient_check_steps{1e-4, 1e-5};

  std::uint64_t seed = 1;

  /// Throws ConfigError.
  void validate() const;
  /// Every key with its resolved value, one `key = value` per line in a fixed
  /// order. Hashing this text gives the config hash.
  std::string canonical() const;
  std::string hash() const;
};

/// Flat `key = value` lines; '#' starts a comment. Unknown or repeated keys
/// and malformed values throw ConfigError.
BenchConfig parse_config(const std::string& text);
BenchConfig load_config(const std::string& path);

/// Least-squares slope of log(gap) against log(T). Needs two points or more
/// with positive entries and at least two distinct T.
double fit_loglog_slope(const std::vector<std::pair<double, double>>& points);

struct GapRow {
  double horizon;
  double transient_value;
  double stationary_value;
  double gap;
};

struct GapTable {
  std::vector<GapRow> rows;
  double slope = 0.0;  // NaN with fewer than two positive gaps
};

GapTable make_gap_table(const std::vector<std::pair<double, double>>& transient_values,
                        double stationary_value);
/// `T,J_T,J_s,gap` with the slope in a provenance comment.
void write_gap_table_csv(const GapTable& table, const std::string& path,
                         const Provenance& provenance = {});

struct RunOptions {
  std::string output_dir;  // overrides the config value when non-empty
  bool deterministic = false;
  std::ostream* log = nullptr;
};

/// Everything the commands share: mesh, solver, target and mask. Built once
/// per command; not movable because the solver keeps a pointer to the mesh.
class Problem {
 public:
  Problem(const BenchConfig& config, const RunOptions& options);
  Problem(const Problem&) = delete;
  Problem& operator=(const Problem&) = delete;

  const BenchConfig& config() const { return config_; }
  const StructuredMesh& mesh() const { return mesh_; }
  const FlowSolver& solver() const { return solver_; }
  const std::string& out() const { return out_; }
  std::ostream& log() const;
  Provenance base_provenance() const;

  /// phi_d and u_d, computed (or loaded from the cache) on first use.
  const PhaseField& target_phase();
  const VelocityFieldMini& target_velocity();
  const std::string& target_hash();
  const ObservationMask& mask() const { return mask_; }

 private:
  BenchConfig config_;
  RunOptions options_;
  std::string out_;
  std::string config_hash_;
  StructuredMesh mesh_;
  FlowSolver solver_;
  ObservationMask mask_;
  std::optional<PhaseField> phi_d_;
  std::optional<VelocityFieldMini> u_d_;
  std::string target_hash_;
};

struct RunSummary {
  OptimizationHistory history;
  ObjectiveBreakdown final_objective;
  std::string phi_path;
};

void cmd_target(Problem& problem);
/// `phi0_path` empty starts from phi = 1. Partial outputs are written before
/// a failure is rethrown.
RunSummary cmd_opt_stationary(Problem& problem, const std::string& phi0_path = "");
RunSummary cmd_opt_transient(Problem& problem, double horizon, const std::string& phi0_path = "");

struct SweepResult {
  GapTable table;
  std::vector<std::pair<double, std::string>> failures;
};
SweepResult cmd_sweep(Problem& problem);
/// Rebuilds the gap table from the outputs of earlier runs.
GapTable cmd_gap_table(Problem& problem);

/// Without an explicit segment every configured segment is written.
std::vector<std::string> cmd_cross_section(Problem& problem, const std::string& field_path,
                                           const std::optional<Segment>& segment, int samples);

enum class GradientMode { Stationary, Transient };

struct GradientCheckRow {
  int direction;
  double step;
  double adjoint;
  double finite_difference;
  double relative_error;
};

struct GradientCheckReport {
  GradientMode mode;
  std::vector<GradientCheckRow> rows;
  std::vector<double> direction_errors;  // best over the step list
  double threshold;
  bool passed;
  std::string csv_path;
};

/// Throws ConfigError when nx * ny exceeds 2048 and InvalidArgument for a
/// zero direction.
GradientCheckReport cmd_gradient_check(Problem& problem, GradientMode mode, int directions,
                                       const std::vector<double>& steps);

/// Same check with caller-supplied directions.
GradientCheckReport gradient_check_directions(Problem& problem, GradientMode mode,
                                              const PhaseField& base,
                                              const std::vector<Eigen::VectorXd>& directions,
                                              const std::vector<double>& steps);

/// Maps an exception from a command to the documented exit code.
int exit_code_for(std::exception_ptr error);

}  // namespace flowtopo::bench
