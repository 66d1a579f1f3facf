#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bench.hpp"
#include "flowtopo/errors.hpp"

using namespace flowtopo;
using namespace flowtopo::bench;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("flowtopo_test_bench_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// 8 x 4 channel, small enough for a full optimization inside a unit test.
BenchConfig small_config(const fs::path& out) {
  BenchConfig c = parse_config(
      "mesh.nx = 8\n"
      "mesh.ny = 4\n"
      "phasefield.epsilon = 0.1\n"
      "time.dt = 0.05\n"
      "time.T = 0.1, 0.2\n"
      "optimizer.max_iterations = 5\n"
      "gradient_check.T = 0.1\n"
      "gradient_check.directions = 2\n");
  c.output_dir = out.string();
  return c;
}

std::ostringstream quiet;

RunOptions options() { return {"", true, &quiet}; }

}  // namespace

TEST_CASE("config parsing") {
  const BenchConfig c = parse_config(
      "# comment line\n"
      "mesh.nx = 12   # trailing comment\n"
      "  mesh.ny=6\n"
      "\n"
      "time.T = 1, 2, 4\n"
      "observation.box = 1, 2, 0.25, 0.75\n"
      "cross_section.segments = 0, 0, 1, 1; 1, 0.5, 2, 0.5\n");
  CHECK(c.nx == 12);
  CHECK(c.ny == 6);
  CHECK(c.horizons == std::vector<double>{1, 2, 4});
  REQUIRE(c.observation_box);
  CHECK((*c.observation_box)[2] == 0.25);
  REQUIRE(c.cross_sections.size() == 2);
  CHECK(c.cross_sections[1].p0[1] == 0.5);
  CHECK_FALSE(parse_config("observation.box = all\n").observation_box);

  SUBCASE("gradient weight follows epsilon unless set") {
    CHECK(parse_config("phasefield.epsilon = 0.07\n").optimizer.gradient_weight == 0.07);
    CHECK(parse_config("phasefield.epsilon = 0.07\noptimizer.gradient_weight = 0.5\n")
              .optimizer.gradient_weight == 0.5);
  }
}

TEST_CASE("config errors") {
  CHECK_THROWS_AS(parse_config("mesh.nz = 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("mesh.nx = 3\nmesh.nx = 4\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("mesh.nx 3\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("mesh.nx = three\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("mesh.nx = 2.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("mesh.nx = 0\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("time.T = 2, 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("target.center = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("observation.box = 2, 1, 0, 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config("seed = -1\n"), ConfigError);
  CHECK_THROWS_AS(load_config("/nonexistent/flowtopo.cfg"), ConfigError);
  try {
    parse_config("mesh.nx = 4\n\nbogus = 1\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}

TEST_CASE("canonical form and hash") {
  const BenchConfig a = parse_config("mesh.nx = 12\ntime.T = 1, 2\n");
  const BenchConfig b = parse_config("time.T = 1,2\n  mesh.nx=12 # same\n");
  CHECK(a.canonical() == b.canonical());
  CHECK(a.hash() == b.hash());
  CHECK(a.hash() != parse_config("mesh.nx = 13\ntime.T = 1, 2\n").hash());
  // canonical text parses back to the same configuration
  CHECK(parse_config(a.canonical()).canonical() == a.canonical());
}

TEST_CASE("desk config loads") {
  const BenchConfig c = load_config(std::string(FLOWTOPO_SOURCE_DIR) + "/configs/desk.cfg");
  CHECK(c.nx == 120);
  CHECK(c.ny == 40);
  CHECK(c.design.interpolation.epsilon == 0.03);
  CHECK(c.horizons == std::vector<double>{0.5, 1, 2, 4, 8});
}

TEST_CASE("log-log slope") {
  const double c = 0.3;
  CHECK(fit_loglog_slope({{1, c}, {2, c / 2}, {4, c / 4}}) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(fit_loglog_slope({{1, c}, {4, c / 2}}) == doctest::Approx(-0.5).epsilon(1e-12));

  // a mixture of T^-1/2 and T^-1 has a fitted slope between the two, nearer
  // -1 where the T^-1 part dominates
  auto mixed = [c](double t) { return c * (1 / std::sqrt(t) + 1 / t); };
  const double wide = fit_loglog_slope({{1, mixed(1)}, {4, mixed(4)}, {16, mixed(16)}, {64, mixed(64)}});
  const double early = fit_loglog_slope({{0.01, mixed(0.01)}, {0.02, mixed(0.02)}});
  CHECK(wide > -1.0);
  CHECK(wide < -0.5);
  CHECK(early < wide);
  CHECK(early > -1.0);

  CHECK_THROWS_AS(fit_loglog_slope({{1, c}}), InvalidArgument);
  CHECK_THROWS_AS(fit_loglog_slope({{1, c}, {2, 0.0}}), InvalidArgument);
  CHECK_THROWS_AS(fit_loglog_slope({{-1, c}, {2, c}}), InvalidArgument);
  CHECK_THROWS_AS(fit_loglog_slope({{2, c}, {2, c / 2}}), InvalidArgument);
}

TEST_CASE("gap table") {
  const double js = 0.5;
  std::vector<std::pair<double, double>> values;
  for (double t : {0.5, 1.0, 2.0, 4.0, 8.0}) values.emplace_back(t, js + 0.02 / t);
  const GapTable table = make_gap_table(values, js);
  REQUIRE(table.rows.size() == 5);
  CHECK(table.rows[1].gap == doctest::Approx(0.02));
  CHECK(table.slope == doctest::Approx(-1.0).epsilon(1e-9));

  // one positive gap leaves the slope undefined
  CHECK(std::isnan(make_gap_table({{1, js}, {2, js + 0.1}}, js).slope));

  const fs::path dir = scratch("gap");
  write_gap_table_csv(table, (dir / "gap.csv").string(), {{"config", "abc"}});
  std::istringstream csv(slurp(dir / "gap.csv"));
  std::string line;
  std::getline(csv, line);
  CHECK(line == "# config=abc");
  std::getline(csv, line);
  CHECK(line.rfind("# slope=", 0) == 0);
  CHECK(std::stod(line.substr(8)) == doctest::Approx(-1.0).epsilon(1e-9));
  std::getline(csv, line);
  CHECK(line == "T,J_T,J_s,gap");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 5);
  CHECK_THROWS_AS(write_gap_table_csv(table, "/nonexistent/dir/gap.csv"), IoError);
}

TEST_CASE("exit codes") {
  auto code = [](auto e) { return exit_code_for(std::make_exception_ptr(e)); };
  CHECK(code(ConfigError("x")) == kConfigError);
  CHECK(code(InvalidArgument("x")) == kConfigError);
  CHECK(code(NonconvergenceError("x", {})) == kNonconvergence);
  CHECK(code(StalledLineSearchError("x", {})) == kNonconvergence);
  CHECK(code(SingularSystemError("x", 3)) == kNonconvergence);
  CHECK(code(IoError("x")) == kFailure);
  CHECK(code(OptimizationFailure("x", {}, nullptr)) == kNonconvergence);
  CHECK(code(OptimizationFailure("x", {}, std::make_exception_ptr(IoError("y")))) == kFailure);
}

TEST_CASE("gradient check limits") {
  const fs::path dir = scratch("limits");
  BenchConfig big = small_config(dir);
  big.nx = 64;
  big.ny = 64;
  Problem large(big, options());
  CHECK_THROWS_AS(cmd_gradient_check(large, GradientMode::Stationary, 1, {1e-5}), ConfigError);

  Problem problem(small_config(dir), options());
  CHECK_THROWS_AS(cmd_gradient_check(problem, GradientMode::Stationary, 0, {1e-5}), ConfigError);
  CHECK_THROWS_AS(cmd_gradient_check(problem, GradientMode::Stationary, 1, {}), ConfigError);
  const PhaseField base(problem.mesh(), 0.0);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(base.size()));
  CHECK_THROWS_AS(gradient_check_directions(problem, GradientMode::Stationary, base, {zero}, {1e-5}),
                  InvalidArgument);
}

TEST_CASE("gradient check on a small mesh") {
  const fs::path dir = scratch("gradient");
  Problem problem(small_config(dir), options());
  for (GradientMode mode : {GradientMode::Stationary, GradientMode::Transient}) {
    const GradientCheckReport report = cmd_gradient_check(problem, mode, 2, {1e-4, 1e-5});
    CHECK(report.rows.size() == 4);
    REQUIRE(report.direction_errors.size() == 2);
    CHECK(report.passed);
    CHECK(fs::exists(report.csv_path));
    CHECK(slurp(report.csv_path).find("direction,h,adjoint,fd,rel_error") != std::string::npos);
  }
}

TEST_CASE("target cache reload") {
  const fs::path dir = scratch("target");
  Eigen::VectorXd first;
  std::string hash;
  {
    Problem problem(small_config(dir), options());
    cmd_target(problem);
    first = problem.target_velocity().coefficients();
    hash = problem.target_hash();
  }
  CHECK(fs::exists(dir / "u_d.csv"));
  CHECK(fs::exists(dir / "phi_d.csv"));
  CHECK(fs::exists(dir / "target.vtk"));
  const auto stamp = fs::last_write_time(dir / "u_d.csv");
  Problem again(small_config(dir), options());
  CHECK(again.target_velocity().coefficients() == first);
  CHECK(again.target_hash() == hash);
  CHECK(fs::last_write_time(dir / "u_d.csv") == stamp);
}

TEST_CASE("sweep, gap table and cross sections") {
  const fs::path dir = scratch("sweep");
  Problem problem(small_config(dir), options());
  const SweepResult sweep = cmd_sweep(problem);
  CHECK(sweep.failures.empty());
  REQUIRE(sweep.table.rows.size() == 2);
  for (const char* f : {"stationary/phi.csv", "stationary/history.csv", "stationary/phi.vtk",
                        "transient_T0.1/phi.csv", "transient_T0.2/phi.csv", "gap_table.csv"})
    CHECK_MESSAGE(fs::exists(dir / f), f);

  // the rebuilt table matches the one from the sweep
  const GapTable rebuilt = cmd_gap_table(problem);
  REQUIRE(rebuilt.rows.size() == 2);
  for (std::size_t i = 0; i < 2; ++i)
    CHECK(rebuilt.rows[i].gap == doctest::Approx(sweep.table.rows[i].gap).epsilon(1e-12));

  const Provenance tags = read_provenance((dir / "stationary" / "phi.csv").string());
  bool has_config = false;
  for (const auto& [k, v] : tags) has_config = has_config || (k == "config" && v == problem.config().hash());
  CHECK(has_config);

  const auto written = cmd_cross_section(problem, (dir / "stationary" / "phi.csv").string(), std::nullopt, 11);
  CHECK(written.size() == problem.config().cross_sections.size());
  const auto one = cmd_cross_section(problem, (dir / "stationary" / "phi.csv").string(),
                                     Segment{Point2(0.5, 0.5), Point2(2.5, 0.5)}, 5);
  REQUIRE(one.size() == 1);
  CHECK(fs::exists(one[0]));
}

TEST_CASE("gap table without results") {
  const fs::path dir = scratch("empty");
  Problem problem(small_config(dir), options());
  CHECK_THROWS_AS(cmd_gap_table(problem), IoError);
}
