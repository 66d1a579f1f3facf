#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "bench.hpp"

using namespace flowtopo::bench;

namespace {

std::vector<double> parse_numbers(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(std::stod(item));
  return out;
}

flowtopo::Point2 parse_point(const std::string& text) {
  const auto xs = parse_numbers(text);
  if (xs.size() != 2) throw ConfigError("expected a point 'x,y', got '" + text + "'");
  return flowtopo::Point2(xs[0], xs[1]);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Phase-field flow topology optimization benchmarks"};
  app.require_subcommand(1);
  std::string config_path;
  std::string out_dir;
  bool deterministic = false;
  app.add_option("--config", config_path, "flat key = value config file");
  app.add_option("--out", out_dir, "output directory (overrides paths.output)");
  app.add_flag("--deterministic", deterministic, "sequential reductions only");

  auto* target = app.add_subcommand("target", "build phi_d and solve for u_d");
  std::string phi0;
  auto* stationary = app.add_subcommand("opt-stationary", "minimize the stationary objective");
  stationary->add_option("--phi0", phi0, "warm start (phase CSV)");
  double horizon = 0.0;
  auto* transient = app.add_subcommand("opt-transient", "minimize the transient objective for one T");
  transient->add_option("--T", horizon, "horizon")->required();
  transient->add_option("--phi0", phi0, "warm start (phase CSV)");
  auto* sweep = app.add_subcommand("sweep", "stationary run plus the warm-started T chain");
  auto* gap = app.add_subcommand("gap-table", "rebuild the gap table from earlier runs");

  std::string field_path, p0_text, p1_text;
  int samples = 0;
  auto* section = app.add_subcommand("cross-section", "sample a phase CSV along segments");
  section->add_option("--field", field_path, "phase CSV on the config mesh")->required();
  auto* p0_opt = section->add_option("--p0", p0_text, "segment start x,y");
  section->add_option("--p1", p1_text, "segment end x,y")->needs(p0_opt);
  section->add_option("--n", samples, "samples per segment (default from config)");

  std::string mode_text = "transient", steps_text;
  int directions = 0;
  auto* check = app.add_subcommand("gradient-check", "adjoint gradient against central differences");
  check->add_option("mode", mode_text, "stationary or transient")->check(CLI::IsMember({"stationary", "transient"}));
  check->add_option("--directions", directions, "number of random directions (default from config)");
  check->add_option("--steps", steps_text, "comma-separated finite-difference steps h (default from config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kSuccess : kConfigError;
  }

  try {
    const BenchConfig config = config_path.empty() ? BenchConfig{} : load_config(config_path);
    RunOptions options{out_dir, deterministic, &std::cerr};
    Problem problem(config, options);

    if (target->parsed()) {
      cmd_target(problem);
    } else if (stationary->parsed()) {
      const RunSummary r = cmd_opt_stationary(problem, phi0);
      std::cout << "J_s " << r.final_objective.total << " iterations " << r.history.iterations.size()
                << (r.history.converged ? " converged" : " not converged") << "\n";
      if (!r.history.converged) return kNonconvergence;
    } else if (transient->parsed()) {
      const RunSummary r = cmd_opt_transient(problem, horizon, phi0);
      std::cout << "J_T " << r.final_objective.total << " iterations " << r.history.iterations.size()
                << (r.history.converged ? " converged" : " not converged") << "\n";
      if (!r.history.converged) return kNonconvergence;
    } else if (sweep->parsed()) {
      const SweepResult r = cmd_sweep(problem);
      std::cout << "T,J_T,J_s,gap\n";
      for (const auto& row : r.table.rows)
        std::cout << row.horizon << "," << row.transient_value << "," << row.stationary_value << ","
                  << row.gap << "\n";
      std::cout << "slope " << r.table.slope << "\n";
      if (!r.failures.empty()) return kNonconvergence;
    } else if (gap->parsed()) {
      const GapTable t = cmd_gap_table(problem);
      std::cout << "slope " << t.slope << "\n";
    } else if (section->parsed()) {
      std::optional<Segment> segment;
      if (!p0_text.empty()) {
        if (p1_text.empty()) throw ConfigError("--p0 needs --p1");
        segment = Segment{parse_point(p0_text), parse_point(p1_text)};
      }
      const int n = samples > 0 ? samples : config.cross_section_samples;
      for (const auto& path : cmd_cross_section(problem, field_path, segment, n)) std::cout << path << "\n";
    } else if (check->parsed()) {
      const GradientMode mode = mode_text == "stationary" ? GradientMode::Stationary : GradientMode::Transient;
      const int n = directions > 0 ? directions : config.gradient_check_directions;
      const std::vector<double> steps = steps_text.empty() ? config.gradient_check_steps : parse_numbers(steps_text);
      const GradientCheckReport report = cmd_gradient_check(problem, mode, n, steps);
      for (std::size_t k = 0; k < report.direction_errors.size(); ++k)
        std::cout << "direction " << k << " relative error " << report.direction_errors[k] << "\n";
      std::cout << (report.passed ? "PASS" : "FAIL") << " (threshold " << report.threshold << ")\n";
      if (!report.passed) return kVerificationFailure;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(std::current_exception());
  }
  return kSuccess;
}
