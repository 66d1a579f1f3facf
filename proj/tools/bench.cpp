#include "bench.hpp"

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "flowtopo/errors.hpp"

namespace fs = std::filesystem;

namespace flowtopo::bench {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_number(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

std::string format_horizon(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty() || !std::isfinite(v))
    throw ConfigError(key + ": not a number: '" + text + "'");
  return v;
}

long parse_int(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  long v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty())
    throw ConfigError(key + ": not an integer: '" + text + "'");
  return v;
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  if (out.empty()) throw ConfigError(key + ": empty list");
  return out;
}

std::string join(const std::vector<double>& values, const std::string& sep = ", ") {
  std::string out;
  for (std::size_t i = 0; i < values.size(); ++i) out += (i ? sep : "") + format_number(values[i]);
  return out;
}

template <typename T>
T narrow(const std::string& key, long v) {
  if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max())
    throw ConfigError(key + ": value out of range");
  return static_cast<T>(v);
}

struct Key {
  std::string name;
  std::function<void(BenchConfig&, const std::string&)> set;
  std::function<std::string(const BenchConfig&)> get;
};

Key real_key(std::string name, double BenchConfig::*member) {
  return {name, [member, name](BenchConfig& c, const std::string& v) { c.*member = parse_double(name, v); },
          [member](const BenchConfig& c) { return format_number(c.*member); }};
}

template <typename Get>
Key real_ref(std::string name, Get ref) {
  return {name, [ref, name](BenchConfig& c, const std::string& v) { ref(c) = parse_double(name, v); },
          [ref](const BenchConfig& c) { return format_number(ref(const_cast<BenchConfig&>(c))); }};
}

template <typename Get>
Key int_ref(std::string name, Get ref) {
  return {name,
          [ref, name](BenchConfig& c, const std::string& v) {
            auto& slot = ref(c);
            slot = narrow<std::remove_reference_t<decltype(slot)>>(name, parse_int(name, v));
          },
          [ref](const BenchConfig& c) { return std::to_string(ref(const_cast<BenchConfig&>(c))); }};
}

Key point_key(std::string name, Point2 BenchConfig::*member) {
  return {name,
          [member, name](BenchConfig& c, const std::string& v) {
            const auto xs = parse_list(name, v);
            if (xs.size() != 2) throw ConfigError(name + ": expected two numbers");
            c.*member = Point2(xs[0], xs[1]);
          },
          [member](const BenchConfig& c) { return join({(c.*member)[0], (c.*member)[1]}); }};
}

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      int_ref("mesh.nx", [](BenchConfig& c) -> int& { return c.nx; }),
      int_ref("mesh.ny", [](BenchConfig& c) -> int& { return c.ny; }),
      real_key("mesh.width", &BenchConfig::width),
      real_key("mesh.height", &BenchConfig::height),
      real_key("physics.mu", &BenchConfig::viscosity),
      real_key("physics.ramp_rate", &BenchConfig::ramp_rate),
      {"phasefield.epsilon",
       [](BenchConfig& c, const std::string& v) {
         const double eps = parse_double("phasefield.epsilon", v);
         c.design.interpolation.epsilon = eps;
         c.design.regularization.epsilon = eps;
       },
       [](const BenchConfig& c) { return format_number(c.design.interpolation.epsilon); }},
      real_ref("phasefield.gamma", [](BenchConfig& c) -> double& { return c.design.regularization.gamma; }),
      real_ref("phasefield.alpha_bar", [](BenchConfig& c) -> double& { return c.design.interpolation.alpha_bar; }),
      real_ref("phasefield.alpha_scale", [](BenchConfig& c) -> double& { return c.design.interpolation.alpha_scale; }),
      real_ref("phasefield.beta_scale", [](BenchConfig& c) -> double& { return c.design.interpolation.beta_scale; }),
      real_ref("phasefield.target_scale", [](BenchConfig& c) -> double& { return c.design.interpolation.target_scale; }),
      point_key("target.center", &BenchConfig::target_center),
      {"target.axis_weights",
       [](BenchConfig& c, const std::string& v) {
         const auto xs = parse_list("target.axis_weights", v);
         if (xs.size() != 2) throw ConfigError("target.axis_weights: expected two numbers");
         c.target_axes = {xs[0], xs[1]};
       },
       [](const BenchConfig& c) { return join({c.target_axes[0], c.target_axes[1]}); }},
      real_key("time.dt", &BenchConfig::dt),
      {"time.T", [](BenchConfig& c, const std::string& v) { c.horizons = parse_list("time.T", v); },
       [](const BenchConfig& c) { return join(c.horizons); }},
      real_ref("optimizer.mass_weight", [](BenchConfig& c) -> double& { return c.optimizer.mass_weight; }),
      real_ref("optimizer.gradient_weight", [](BenchConfig& c) -> double& { return c.optimizer.gradient_weight; }),
      real_ref("optimizer.initial_step", [](BenchConfig& c) -> double& { return c.optimizer.initial_step; }),
      real_ref("optimizer.step_growth", [](BenchConfig& c) -> double& { return c.optimizer.step_growth; }),
      real_ref("optimizer.max_step", [](BenchConfig& c) -> double& { return c.optimizer.max_step; }),
      real_ref("optimizer.armijo", [](BenchConfig& c) -> double& { return c.optimizer.armijo; }),
      int_ref("optimizer.max_backtracks", [](BenchConfig& c) -> int& { return c.optimizer.max_backtracks; }),
      real_ref("optimizer.tolerance", [](BenchConfig& c) -> double& { return c.optimizer.tolerance; }),
      int_ref("optimizer.max_iterations", [](BenchConfig& c) -> int& { return c.optimizer.max_iterations; }),
      int_ref("optimizer.pdas_max_iterations", [](BenchConfig& c) -> int& { return c.optimizer.pdas_max_iterations; }),
      real_ref("newton.tolerance", [](BenchConfig& c) -> double& { return c.newton.tolerance; }),
      int_ref("newton.max_iterations", [](BenchConfig& c) -> int& { return c.newton.max_iterations; }),
      {"paths.output", [](BenchConfig& c, const std::string& v) { c.output_dir = trim(v); },
       [](const BenchConfig& c) { return c.output_dir; }},
      {"paths.target_cache", [](BenchConfig& c, const std::string& v) { c.target_cache = trim(v); },
       [](const BenchConfig& c) { return c.target_cache; }},
      {"observation.box",
       [](BenchConfig& c, const std::string& v) {
         if (trim(v) == "all") {
           c.observation_box.reset();
           return;
         }
         const auto xs = parse_list("observation.box", v);
         if (xs.size() != 4) throw ConfigError("observation.box: expected 'all' or x0, x1, y0, y1");
         c.observation_box = std::array<double, 4>{xs[0], xs[1], xs[2], xs[3]};
       },
       [](const BenchConfig& c) {
         if (!c.observation_box) return std::string("all");
         const auto& b = *c.observation_box;
         return join({b[0], b[1], b[2], b[3]});
       }},
      int_ref("output.snapshot_stride", [](BenchConfig& c) -> int& { return c.snapshot_stride; }),
      {"cross_section.segments",
       [](BenchConfig& c, const std::string& v) {
         c.cross_sections.clear();
         std::stringstream ss(v);
         std::string item;
         while (std::getline(ss, item, ';')) {
           const auto xs = parse_list("cross_section.segments", item);
           if (xs.size() != 4) throw ConfigError("cross_section.segments: each segment needs x0, y0, x1, y1");
           c.cross_sections.push_back({Point2(xs[0], xs[1]), Point2(xs[2], xs[3])});
         }
       },
       [](const BenchConfig& c) {
         std::string out;
         for (std::size_t i = 0; i < c.cross_sections.size(); ++i) {
           const auto& s = c.cross_sections[i];
           out += (i ? "; " : "") + join({s.p0[0], s.p0[1], s.p1[0], s.p1[1]});
         }
         return out;
       }},
      int_ref("cross_section.samples", [](BenchConfig& c) -> int& { return c.cross_section_samples; }),
      real_key("gradient_check.T", &BenchConfig::gradient_check_horizon),
      int_ref("gradient_check.directions", [](BenchConfig& c) -> int& { return c.gradient_check_directions; }),
      {"gradient_check.h", [](BenchConfig& c, const std::string& v) { c.gradient_check_steps = parse_list("gradient_check.h", v); },
       [](const BenchConfig& c) { return join(c.gradient_check_steps); }},
      {"seed",
       [](BenchConfig& c, const std::string& v) {
         const long s = parse_int("seed", v);
         if (s < 0) throw ConfigError("seed: must be nonnegative");
         c.seed = static_cast<std::uint64_t>(s);
       },
       [](const BenchConfig& c) { return std::to_string(c.seed); }},
  };
  return table;
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

Provenance provenance_of(const std::string& path) {
  return fs::exists(path) ? read_provenance(path) : Provenance{};
}

std::string one_line(std::string s) {
  for (char& c : s)
    if (c == '\n' || c == '\r') c = ' ';
  return s;
}

std::string lookup(const Provenance& p, const std::string& key) {
  for (const auto& [k, v] : p)
    if (k == key) return v;
  return "";
}

}  // namespace

void BenchConfig::validate() const {
  require(nx > 0 && ny > 0, "mesh.nx and mesh.ny must be positive");
  require(width > 0 && height > 0, "mesh.width and mesh.height must be positive");
  require(viscosity > 0, "physics.mu must be positive");
  require(ramp_rate > 0, "physics.ramp_rate must be positive");
  require(dt > 0, "time.dt must be positive");
  for (std::size_t i = 0; i < horizons.size(); ++i) {
    require(horizons[i] > 0, "time.T entries must be positive");
    require(i == 0 || horizons[i] > horizons[i - 1], "time.T must be strictly increasing");
  }
  require(target_axes[0] > 0 && target_axes[1] > 0, "target.axis_weights must be positive");
  require(snapshot_stride >= 0, "output.snapshot_stride must be nonnegative");
  require(cross_section_samples >= 2, "cross_section.samples must be at least 2");
  require(gradient_check_horizon > 0, "gradient_check.T must be positive");
  require(gradient_check_directions > 0, "gradient_check.directions must be positive");
  for (double h : gradient_check_steps) require(h > 0, "gradient_check.h entries must be positive");
  if (observation_box) {
    const auto& b = *observation_box;
    require(b[0] < b[1] && b[2] < b[3], "observation.box must satisfy x0 < x1 and y0 < y1");
  }
  require(newton.tolerance > 0 && newton.max_iterations > 0, "newton settings must be positive");
  try {
    design.validate();
    optimizer.validate();
  } catch (const InvalidArgument& e) {
    throw ConfigError(e.what());
  }
}

std::string BenchConfig::canonical() const {
  std::string out;
  for (const auto& k : keys()) out += k.name + " = " + k.get(*this) + "\n";
  return out;
}

std::string BenchConfig::hash() const { return hash_string(canonical()); }

BenchConfig parse_config(const std::string& text) {
  std::map<std::string, const Key*> index;
  for (const auto& k : keys()) index[k.name] = &k;
  BenchConfig config;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(number) + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = index.find(key);
    if (it == index.end()) throw ConfigError("line " + std::to_string(number) + ": unknown key '" + key + "'");
    if (!seen.insert(key).second) throw ConfigError("line " + std::to_string(number) + ": repeated key '" + key + "'");
    it->second->set(config, value);
  }
  if (!seen.count("optimizer.gradient_weight")) config.optimizer.gradient_weight = config.design.interpolation.epsilon;
  config.validate();
  return config;
}

BenchConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_config(buffer.str());
}

double fit_loglog_slope(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 2) throw InvalidArgument("slope fit needs at least two points");
  double sx = 0, sy = 0;
  for (const auto& [t, g] : points) {
    if (!(t > 0) || !(g > 0)) throw InvalidArgument("slope fit needs positive T and gap values");
    sx += std::log(t);
    sy += std::log(g);
  }
  const double n = static_cast<double>(points.size());
  const double mx = sx / n, my = sy / n;
  double sxx = 0, sxy = 0;
  for (const auto& [t, g] : points) {
    sxx += (std::log(t) - mx) * (std::log(t) - mx);
    sxy += (std::log(t) - mx) * (std::log(g) - my);
  }
  if (!(sxx > 0)) throw InvalidArgument("slope fit needs two distinct T values");
  return sxy / sxx;
}

GapTable make_gap_table(const std::vector<std::pair<double, double>>& transient_values,
                        double stationary_value) {
  GapTable table;
  std::vector<std::pair<double, double>> points;
  for (const auto& [t, jt] : transient_values) {
    const double gap = std::abs(jt - stationary_value);
    table.rows.push_back({t, jt, stationary_value, gap});
    if (gap > 0) points.emplace_back(t, gap);
  }
  table.slope = points.size() >= 2 ? fit_loglog_slope(points) : std::numeric_limits<double>::quiet_NaN();
  return table;
}

void write_gap_table_csv(const GapTable& table, const std::string& path, const Provenance& provenance) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (const auto& [k, v] : provenance) out << "# " << k << "=" << v << "\n";
  out << "# slope=" << format_number(table.slope) << "\n";
  out << "T,J_T,J_s,gap\n" << std::setprecision(17);
  for (const auto& r : table.rows)
    out << r.horizon << "," << r.transient_value << "," << r.stationary_value << "," << r.gap << "\n";
  if (!out) throw IoError("write failed for " + path);
}

// ---------------------------------------------------------------------------

Problem::Problem(const BenchConfig& config, const RunOptions& options)
    : config_(config),
      options_(options),
      out_(options.output_dir.empty() ? config.output_dir : options.output_dir),
      config_hash_(config.hash()),
      mesh_(config.nx, config.ny, config.width, config.height),
      solver_(mesh_, FlowProblemData::channel(config.viscosity, config.height, config.ramp_rate)),
      mask_(mesh_) {
  if (config.observation_box) {
    const auto b = *config.observation_box;
    mask_ = ObservationMask::from_predicate(
        mesh_, [b](const Point2& p) { return p[0] >= b[0] && p[0] <= b[1] && p[1] >= b[2] && p[1] <= b[3]; });
  }
  fs::create_directories(out_);
}

std::ostream& Problem::log() const { return options_.log ? *options_.log : std::clog; }

Provenance Problem::base_provenance() const {
  Provenance p{{"config", config_hash_}};
  if (options_.deterministic) p.emplace_back("deterministic", "1");
  return p;
}

const PhaseField& Problem::target_phase() {
  if (!phi_d_) {
    phi_d_ = build_target_phasefield(mesh_, config_.target_center, config_.target_axes,
                                     config_.design.interpolation.epsilon);
  }
  return *phi_d_;
}

const VelocityFieldMini& Problem::target_velocity() {
  if (!u_d_) {
    const std::string cache =
        config_.target_cache.empty() ? (fs::path(out_) / "u_d.csv").string() : config_.target_cache;
    u_d_ = make_target_velocity(solver_, target_phase(), config_.design.interpolation, cache,
                                config_.newton, base_provenance());
    target_hash_ = hash_file(cache);
  }
  return *u_d_;
}

const std::string& Problem::target_hash() {
  target_velocity();
  return target_hash_;
}

namespace {

void write_run_outputs(Problem& problem, const fs::path& dir, const OptimizationHistory& history,
                       const ObjectiveBreakdown& final_objective, Provenance provenance,
                       const VelocityFieldMini* state) {
  fs::create_directories(dir);
  provenance.emplace_back("objective", format_number(final_objective.total));
  provenance.emplace_back("tracking", format_number(final_objective.tracking));
  provenance.emplace_back("porous", format_number(final_objective.porous_penalty));
  provenance.emplace_back("regularization", format_number(final_objective.regularization));
  provenance.emplace_back("iterations", std::to_string(history.iterations.size()));
  provenance.emplace_back("converged", history.converged ? "1" : "0");
  const ScalarFieldP1 phi(problem.mesh(), history.final_phi);
  write_phase_csv(phi, (dir / "phi.csv").string(), provenance);
  write_history_csv(history, (dir / "history.csv").string(), provenance);
  std::vector<NamedField> fields{{"phi", phi}};
  if (state) fields.push_back({"velocity", *state});
  std::string title;
  for (const auto& [k, v] : provenance) title += k + "=" + v + " ";
  export_fields(problem.mesh(), fields, (dir / "phi.vtk").string(), title);
}

ObjectiveBreakdown final_breakdown(const OptimizationHistory& h) {
  return h.iterations.empty() ? h.initial : h.iterations.back().objective;
}

PhaseField starting_point(Problem& problem, const std::string& phi0_path, Provenance& provenance) {
  if (phi0_path.empty()) return PhaseField(problem.mesh(), 1.0);
  provenance.emplace_back("warm_start", hash_file(phi0_path));
  provenance.emplace_back("warm_start_path", phi0_path);
  return PhaseField(read_phase_csv(problem.mesh(), phi0_path));
}

void log_iteration(Problem& problem, const std::string& label, const IterationRecord& r) {
  problem.log() << label << " it " << r.iter << " J " << std::setprecision(8) << r.objective.total
                << " tracking " << r.objective.tracking << " step " << r.step << " inc "
                << r.h1_increment << "\n";
}

RunSummary run_optimization(Problem& problem, ReducedObjective& objective, const fs::path& dir,
                            const std::string& label, const std::string& phi0_path,
                            Provenance provenance, const std::function<const VelocityFieldMini*()>& state) {
  const PhaseField phi0 = starting_point(problem, phi0_path, provenance);
  const int stride = problem.config().snapshot_stride;
  fs::create_directories(dir);
  auto on_iteration = [&](const IterationRecord& r, const PhaseField& phi) {
    log_iteration(problem, label, r);
    if (stride > 0 && r.iter % stride == 0) {
      std::ostringstream name;
      name << "snapshot_" << std::setw(4) << std::setfill('0') << r.iter << ".vtk";
      export_fields(problem.mesh(), {{"phi", phi.field()}}, (dir / name.str()).string(),
                    "config=" + lookup(provenance, "config"));
    }
  };
  try {
    OptimizationHistory history = run_vmpt(objective, phi0, problem.config().optimizer, on_iteration);
    const ObjectiveBreakdown final_objective = final_breakdown(history);
    // Make the cached state correspond to the final iterate.
    objective.evaluate(PhaseField(ScalarFieldP1(problem.mesh(), history.final_phi)));
    write_run_outputs(problem, dir, history, final_objective, provenance, state());
    return {history, final_objective, (dir / "phi.csv").string()};
  } catch (const OptimizationFailure& failure) {
    Provenance partial = provenance;
    partial.emplace_back("failure", one_line(failure.what()));
    write_run_outputs(problem, dir, failure.partial(), final_breakdown(failure.partial()), partial, nullptr);
    throw;
  }
}

}  // namespace

void cmd_target(Problem& problem) {
  const PhaseField& phi_d = problem.target_phase();
  const VelocityFieldMini& u_d = problem.target_velocity();
  Provenance p = problem.base_provenance();
  p.emplace_back("target", problem.target_hash());
  write_phase_csv(phi_d.field(), (fs::path(problem.out()) / "phi_d.csv").string(), p);
  export_fields(problem.mesh(), {{"phi_d", phi_d.field()}, {"u_d", u_d}},
                (fs::path(problem.out()) / "target.vtk").string(),
                "config=" + problem.base_provenance().front().second + " target=" + problem.target_hash());
  problem.log() << "target written to " << problem.out() << "\n";
}

RunSummary cmd_opt_stationary(Problem& problem, const std::string& phi0_path) {
  StationaryObjective objective(problem.solver(), problem.target_velocity(), problem.mask(),
                                problem.config().design, problem.config().newton);
  Provenance p = problem.base_provenance();
  p.emplace_back("target", problem.target_hash());
  p.emplace_back("mode", "stationary");
  return run_optimization(problem, objective, fs::path(problem.out()) / "stationary", "stationary",
                          phi0_path, p, [&objective]() { return &objective.state(); });
}

RunSummary cmd_opt_transient(Problem& problem, double horizon, const std::string& phi0_path) {
  TransientObjective objective(problem.solver(), problem.target_velocity(), problem.mask(),
                               problem.config().design, horizon, problem.config().dt);
  Provenance p = problem.base_provenance();
  p.emplace_back("target", problem.target_hash());
  p.emplace_back("mode", "transient");
  p.emplace_back("T", format_number(horizon));
  const fs::path dir = fs::path(problem.out()) / ("transient_T" + format_horizon(horizon));
  return run_optimization(problem, objective, dir, "T=" + format_horizon(horizon), phi0_path, p,
                          [&objective]() { return &objective.trajectory().states.back().velocity; });
}

SweepResult cmd_sweep(Problem& problem) {
  SweepResult result;
  const RunSummary stationary = cmd_opt_stationary(problem);
  std::vector<std::pair<double, double>> values;
  std::string previous;
  for (double t : problem.config().horizons) {
    try {
      const RunSummary run = cmd_opt_transient(problem, t, previous);
      values.emplace_back(t, run.final_objective.total);
      previous = run.phi_path;
    } catch (const std::exception& e) {
      problem.log() << "T=" << format_horizon(t) << " failed: " << e.what() << "\n";
      result.failures.emplace_back(t, e.what());
      // the partial iterate, if one was written, seeds the next horizon
      const fs::path partial = fs::path(problem.out()) / ("transient_T" + format_horizon(t)) / "phi.csv";
      if (fs::exists(partial)) previous = partial.string();
    }
  }
  result.table = make_gap_table(values, stationary.final_objective.total);
  Provenance p = problem.base_provenance();
  p.emplace_back("stationary", hash_file(stationary.phi_path));
  for (const auto& [t, msg] : result.failures) p.emplace_back("failed_T" + format_horizon(t), one_line(msg));
  for (const auto& row : result.table.rows) {
    const fs::path f = fs::path(problem.out()) / ("transient_T" + format_horizon(row.horizon)) / "phi.csv";
    p.emplace_back("T" + format_horizon(row.horizon), hash_file(f.string()));
  }
  write_gap_table_csv(result.table, (fs::path(problem.out()) / "gap_table.csv").string(), p);
  problem.log() << "gap slope " << result.table.slope << "\n";
  return result;
}

GapTable cmd_gap_table(Problem& problem) {
  const fs::path stat = fs::path(problem.out()) / "stationary" / "phi.csv";
  if (!fs::exists(stat)) throw IoError("missing stationary result " + stat.string());
  const std::string js = lookup(read_provenance(stat.string()), "objective");
  if (js.empty()) throw IoError(stat.string() + " carries no objective value");
  Provenance p = problem.base_provenance();
  p.emplace_back("stationary", hash_file(stat.string()));
  std::vector<std::pair<double, double>> values;
  for (double t : problem.config().horizons) {
    const fs::path f = fs::path(problem.out()) / ("transient_T" + format_horizon(t)) / "phi.csv";
    const Provenance tags = provenance_of(f.string());
    const std::string jt = lookup(tags, "objective");
    if (jt.empty() || !lookup(tags, "failure").empty()) {
      problem.log() << "no result for T=" << format_horizon(t) << ", skipped\n";
      continue;
    }
    values.emplace_back(t, std::stod(jt));
    p.emplace_back("T" + format_horizon(t), hash_file(f.string()));
  }
  GapTable table = make_gap_table(values, std::stod(js));
  write_gap_table_csv(table, (fs::path(problem.out()) / "gap_table.csv").string(), p);
  problem.log() << "gap slope " << table.slope << "\n";
  return table;
}

std::vector<std::string> cmd_cross_section(Problem& problem, const std::string& field_path,
                                           const std::optional<Segment>& segment, int samples) {
  const ScalarFieldP1 field = read_phase_csv(problem.mesh(), field_path);
  std::vector<Segment> segments = segment ? std::vector<Segment>{*segment} : problem.config().cross_sections;
  std::vector<std::string> written;
  for (std::size_t k = 0; k < segments.size(); ++k) {
    const auto rows = sample_cross_section(field, segments[k].p0, segments[k].p1, samples);
    const std::string stem = fs::path(field_path).stem().string();
    const fs::path path = fs::path(problem.out()) / (stem + "_section" + std::to_string(k) + ".csv");
    write_cross_section_csv(rows, path.string());
    written.push_back(path.string());
  }
  return written;
}

GradientCheckReport gradient_check_directions(Problem& problem, GradientMode mode,
                                              const PhaseField& base,
                                              const std::vector<Eigen::VectorXd>& directions,
                                              const std::vector<double>& steps) {
  const BenchConfig& c = problem.config();
  if (static_cast<long>(c.nx) * c.ny > 2048)
    throw ConfigError("gradient check needs nx * ny <= 2048, got " + std::to_string(c.nx * c.ny));
  if (steps.empty()) throw ConfigError("gradient check needs at least one step size");
  for (const auto& d : directions)
    if (d.size() != static_cast<Eigen::Index>(base.size()) || d.lpNorm<Eigen::Infinity>() == 0.0)
      throw InvalidArgument("gradient check direction must be nonzero and match the mesh");

  std::unique_ptr<ReducedObjective> objective;
  if (mode == GradientMode::Stationary) {
    objective = std::make_unique<StationaryObjective>(problem.solver(), problem.target_velocity(),
                                                      problem.mask(), c.design, c.newton);
  } else {
    objective = std::make_unique<TransientObjective>(problem.solver(), problem.target_velocity(),
                                                     problem.mask(), c.design,
                                                     c.gradient_check_horizon, c.dt);
  }
  GradientCheckReport report;
  report.mode = mode;
  report.threshold = mode == GradientMode::Stationary ? 1e-5 : 1e-6;
  const Eigen::VectorXd gradient = objective->gradient(base);
  auto value = [&](const PhaseField& p) { return objective->evaluate(p).total; };
  for (std::size_t k = 0; k < directions.size(); ++k) {
    const double adjoint = gradient.dot(directions[k]);
    double best = std::numeric_limits<double>::infinity();
    for (double h : steps) {
      const double fd = fd_directional_derivative(value, base, directions[k], h);
      const double err = std::abs(adjoint - fd) / std::max(std::abs(fd), std::numeric_limits<double>::min());
      report.rows.push_back({static_cast<int>(k), h, adjoint, fd, err});
      best = std::min(best, err);
    }
    report.direction_errors.push_back(best);
  }
  report.passed = true;
  for (double e : report.direction_errors) report.passed = report.passed && e < report.threshold;

  const std::string name = mode == GradientMode::Stationary ? "stationary" : "transient";
  report.csv_path = (fs::path(problem.out()) / ("gradient_check_" + name + ".csv")).string();
  std::ofstream out(report.csv_path);
  if (!out) throw IoError("cannot write " + report.csv_path);
  for (const auto& [k, v] : problem.base_provenance()) out << "# " << k << "=" << v << "\n";
  out << "# target=" << problem.target_hash() << "\n# threshold=" << report.threshold << "\n";
  out << "direction,h,adjoint,fd,rel_error\n" << std::setprecision(17);
  for (const auto& r : report.rows)
    out << r.direction << "," << r.step << "," << r.adjoint << "," << r.finite_difference << ","
        << r.relative_error << "\n";
  return report;
}

GradientCheckReport cmd_gradient_check(Problem& problem, GradientMode mode, int directions,
                                       const std::vector<double>& steps) {
  const BenchConfig& c = problem.config();
  if (static_cast<long>(c.nx) * c.ny > 2048)
    throw ConfigError("gradient check needs nx * ny <= 2048, got " + std::to_string(c.nx * c.ny));
  if (directions <= 0) throw ConfigError("gradient check needs a positive direction count");
  // interior base point and directions so that every probe stays admissible
  std::mt19937_64 rng(c.seed);
  std::uniform_real_distribution<double> uniform(-0.8, 0.8);
  const auto n = static_cast<Eigen::Index>(problem.mesh().num_vertices());
  Eigen::VectorXd values(n);
  for (auto& v : values) v = uniform(rng);
  const PhaseField base(ScalarFieldP1(problem.mesh(), values));
  std::vector<Eigen::VectorXd> dirs;
  for (int k = 0; k < directions; ++k) {
    Eigen::VectorXd d(n);
    for (auto& v : d) v = uniform(rng);
    dirs.push_back(std::move(d));
  }
  return gradient_check_directions(problem, mode, base, dirs, steps);
}

int exit_code_for(std::exception_ptr error) {
  try {
    std::rethrow_exception(error);
  } catch (const ConfigError&) {
    return kConfigError;
  } catch (const std::invalid_argument&) {
    return kConfigError;
  } catch (const OptimizationFailure& f) {
    return f.cause() ? exit_code_for(f.cause()) : kNonconvergence;
  } catch (const NonconvergenceError&) {
    return kNonconvergence;
  } catch (const SingularSystemError&) {
    return kNonconvergence;
  } catch (const std::exception&) {
    return kFailure;
  }
}

}  // namespace flowtopo::bench
