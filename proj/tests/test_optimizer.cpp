#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include <Eigen/Dense>

#include "flowtopo/errors.hpp"
#include "flowtopo/optimizer.hpp"
#include "flowtopo/p1_operators.hpp"
#include "test_support.hpp"

using namespace flowtopo;
using flowtopo::testing::random_vector;

namespace {

SparseMatrix sparse(const Eigen::MatrixXd& a) { return a.sparseView(); }

Eigen::MatrixXd random_spd(int n, std::uint64_t seed) {
  const Eigen::VectorXd v = random_vector(n * n, seed);
  const Eigen::MatrixXd b = Eigen::Map<const Eigen::MatrixXd>(v.data(), n, n);
  return b.transpose() * b + 0.1 * Eigen::MatrixXd::Identity(n, n);
}

/// Minimizer of 1/2 d^T A d + tau_g^T d over -1 - phi_k <= d <= 1 - phi_k by
/// trying every lower/free/upper pattern and keeping the best feasible
/// face minimizer.
Eigen::VectorXd brute_force_projection(const Eigen::MatrixXd& a, const Eigen::VectorXd& phi_k,
                                       const Eigen::VectorXd& tau_g) {
  const auto n = static_cast<int>(phi_k.size());
  const Eigen::VectorXd lo = -Eigen::VectorXd::Ones(n) - phi_k, hi = Eigen::VectorXd::Ones(n) - phi_k;
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_d;
  long total = 1;
  for (int i = 0; i < n; ++i) total *= 3;
  for (long code = 0; code < total; ++code) {
    long c = code;
    std::vector<int> free;
    Eigen::VectorXd d = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i, c /= 3) {
      if (c % 3 == 0) free.push_back(i);
      else d[i] = c % 3 == 1 ? lo[i] : hi[i];
    }
    if (!free.empty()) {
      const auto nf = static_cast<Eigen::Index>(free.size());
      Eigen::MatrixXd aff(nf, nf);
      Eigen::VectorXd rhs(nf);
      for (Eigen::Index p = 0; p < nf; ++p) {
        rhs[p] = -(tau_g[free[p]] + a.row(free[p]).dot(d));
        for (Eigen::Index q = 0; q < nf; ++q) aff(p, q) = a(free[p], free[q]);
      }
      const Eigen::VectorXd x = aff.ldlt().solve(rhs);
      bool feasible = true;
      for (Eigen::Index p = 0; p < nf; ++p) {
        d[free[p]] = x[p];
        feasible = feasible && x[p] >= lo[free[p]] - 1e-13 && x[p] <= hi[free[p]] + 1e-13;
      }
      if (!feasible) continue;
    }
    const double value = 0.5 * d.dot(a * d) + tau_g.dot(d);
    if (value < best) {
      best = value;
      best_d = d;
    }
  }
  return phi_k + best_d;
}

/// J(phi) = 1/2 (phi - c)^T Q (phi - c), reported entirely as tracking.
class QuadraticObjective : public ReducedObjective {
 public:
  QuadraticObjective(SparseMatrix q, Eigen::VectorXd c) : q_(std::move(q)), c_(std::move(c)) {}
  ObjectiveBreakdown evaluate(const PhaseField& phi) override {
    ++evaluations;
    const Eigen::VectorXd r = phi.values() - c_;
    ObjectiveBreakdown b;
    b.tracking = 0.5 * r.dot(q_ * r);
    b.total = b.tracking;
    return b;
  }
  Eigen::VectorXd gradient(const PhaseField& phi) override { return sign * (q_ * (phi.values() - c_)); }

  int evaluations = 0;
  double sign = 1.0;  // -1 hands out ascent directions

 private:
  SparseMatrix q_;
  Eigen::VectorXd c_;
};

/// Nonconvex separable double well sum_i m_i (phi_i^4 / 4 - phi_i^2 / 2 + b_i phi_i).
class DoubleWell : public ReducedObjective {
 public:
  DoubleWell(const StructuredMesh& mesh, Eigen::VectorXd b) : m_(p1_mass_vector(mesh)), b_(std::move(b)) {}
  ObjectiveBreakdown evaluate(const PhaseField& phi) override {
    const auto p = phi.values().array();
    ObjectiveBreakdown out;
    out.tracking = (m_.array() * (p.pow(4) / 4 - p.square() / 2 + b_.array() * p)).sum();
    out.total = out.tracking;
    return out;
  }
  Eigen::VectorXd gradient(const PhaseField& phi) override {
    const auto p = phi.values().array();
    return m_.array() * (p.cube() - p + b_.array());
  }

 private:
  Eigen::VectorXd m_, b_;
};

}  // namespace

TEST_CASE("PDAS on the identity metric") {
  const SparseMatrix a = sparse(Eigen::MatrixXd::Identity(2, 2));
  const PdasResult r = pdas_project(a, Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(3.0, -0.2));
  CHECK(r.phi_new[0] == -1.0);
  CHECK(std::abs(r.phi_new[1] - 0.2) < 1e-15);
  // lambda = lambda_up - lambda_low with lambda_low = 2 on the first node
  CHECK(std::abs(r.lambda[0] + 2.0) < 1e-15);
  CHECK(r.lambda[1] == 0.0);
  CHECK(r.lower == std::vector<int>{0});
  CHECK(r.upper.empty());
  CHECK(pdas_kkt(a, Eigen::Vector2d::Zero(), Eigen::Vector2d(3.0, -0.2), r).holds());
  const Eigen::VectorXd oracle =
      brute_force_projection(Eigen::MatrixXd::Identity(2, 2), Eigen::Vector2d::Zero(), Eigen::Vector2d(3.0, -0.2));
  CHECK((r.phi_new - oracle).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("PDAS with a zero step returns the start") {
  const StructuredMesh mesh(4, 2, 3.0, 1.0);
  const SparseMatrix a = vmpt_metric(mesh, VmptConfig{});
  const Eigen::VectorXd phi = random_vector(a.rows(), 3);
  const PdasResult r = pdas_project(a, phi, Eigen::VectorXd::Zero(a.rows()));
  CHECK(r.phi_new == phi);
  CHECK(r.lower.empty());
  CHECK(r.upper.empty());
  CHECK(r.lambda.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("PDAS interior case takes one unconstrained solve") {
  const StructuredMesh mesh(6, 2, 3.0, 1.0);
  const SparseMatrix a = vmpt_metric(mesh, VmptConfig{});
  const Eigen::VectorXd phi = random_vector(a.rows(), 4, -0.5, 0.5);
  const Eigen::VectorXd tau_g = 1e-3 * random_vector(a.rows(), 5);
  const Eigen::VectorXd expect = phi - Eigen::MatrixXd(a).lu().solve(tau_g);
  REQUIRE(expect.cwiseAbs().maxCoeff() < 1.0);
  const PdasResult r = pdas_project(a, phi, tau_g);
  CHECK(r.iterations == 1);
  CHECK((r.phi_new - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK_FALSE(r.used_fallback);
}

TEST_CASE("PDAS matches active-set enumeration") {
  for (int inst = 0; inst < 20; ++inst) {
    const int n = 2 + inst % 8;
    const Eigen::MatrixXd a = random_spd(n, 100 + inst);
    const Eigen::VectorXd phi = random_vector(n, 200 + inst);
    const Eigen::VectorXd tau_g = 3.0 * random_vector(n, 300 + inst);
    const PdasResult r = pdas_project(sparse(a), phi, tau_g);
    CHECK(r.phi_new.cwiseAbs().maxCoeff() <= 1.0);
    CHECK((r.phi_new - brute_force_projection(a, phi, tau_g)).cwiseAbs().maxCoeff() < 1e-10);
    const KktReport k = pdas_kkt(sparse(a), phi, tau_g, r);
    CHECK(k.holds());
  }
}

TEST_CASE("PDAS fallback certifies") {
  // a cap of 3 PDAS iterations pushes most instances into the primal fallback
  int fallbacks = 0;
  for (int inst = 0; inst < 40; ++inst) {
    const int n = 8;
    Eigen::MatrixXd a = random_spd(n, 400 + inst);
    a += 5.0 * Eigen::MatrixXd::Ones(n, n);
    const Eigen::VectorXd phi = random_vector(n, 500 + inst);
    const Eigen::VectorXd tau_g = 20.0 * random_vector(n, 600 + inst);
    PdasOptions strict;
    strict.fallback = false;
    strict.max_iterations = 3;
    PdasResult r;
    try {
      r = pdas_project(sparse(a), phi, tau_g, strict);
    } catch (const NonconvergenceError&) {
      PdasOptions lenient;
      lenient.max_iterations = 3;
      r = pdas_project(sparse(a), phi, tau_g, lenient);
      CHECK(r.used_fallback);
      ++fallbacks;
    }
    CHECK(pdas_kkt(sparse(a), phi, tau_g, r).holds());
    CHECK((r.phi_new - brute_force_projection(a, phi, tau_g)).cwiseAbs().maxCoeff() < 1e-10);
  }
  MESSAGE("fallbacks " << fallbacks);
}

TEST_CASE("PDAS input validation") {
  Eigen::MatrixXd indefinite = Eigen::MatrixXd::Identity(2, 2);
  indefinite(1, 1) = -1.0;
  CHECK_THROWS_AS(pdas_project(sparse(indefinite), Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones()),
                  InvalidArgument);
  Eigen::MatrixXd unsymmetric = Eigen::MatrixXd::Identity(2, 2);
  unsymmetric(0, 1) = 0.5;
  CHECK_THROWS_AS(pdas_project(sparse(unsymmetric), Eigen::Vector2d::Zero(), Eigen::Vector2d::Ones()),
                  InvalidArgument);
  const SparseMatrix id = sparse(Eigen::MatrixXd::Identity(2, 2));
  CHECK_THROWS_AS(pdas_project(id, Eigen::Vector2d(1.5, 0.0), Eigen::Vector2d::Ones()), InvalidArgument);
  CHECK_THROWS_AS(pdas_project(id, Eigen::Vector3d::Zero(), Eigen::Vector3d::Ones()), InvalidArgument);
}

TEST_CASE("config validation") {
  VmptConfig c;
  CHECK_NOTHROW(c.validate());
  c.armijo = 1.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = VmptConfig{};
  c.gradient_weight = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = VmptConfig{};
  c.initial_step = 10.0;
  c.max_step = 5.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
  c = VmptConfig{};
  c.tolerance = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidArgument);
}

TEST_CASE("quadratic surrogate reaches the clamped minimizer") {
  const StructuredMesh mesh(4, 2, 3.0, 1.0);
  VmptConfig config;
  const SparseMatrix a = vmpt_metric(mesh, config);
  for (double c0 : {0.3, 1.7, -2.5}) {
    const auto n = a.rows();
    QuadraticObjective j(a, Eigen::VectorXd::Constant(n, c0));
    const OptimizationHistory h = run_vmpt(j, PhaseField(mesh, 0.0), config);
    CHECK(h.converged);
    CHECK(h.iterations.size() <= 3);
    CHECK((h.final_phi.array() - std::clamp(c0, -1.0, 1.0)).abs().maxCoeff() < 1e-12);
  }

  // non-constant target: compare with the enumerated constrained minimizer
  const StructuredMesh tiny(2, 1, 3.0, 1.0);
  const SparseMatrix at = vmpt_metric(tiny, config);
  const Eigen::VectorXd c = 2.0 * random_vector(at.rows(), 7);
  QuadraticObjective j(at, c);
  const OptimizationHistory h = run_vmpt(j, PhaseField(tiny, 0.0), config);
  const Eigen::VectorXd oracle =
      brute_force_projection(Eigen::MatrixXd(at), Eigen::VectorXd::Zero(at.rows()), -Eigen::MatrixXd(at) * c);
  CHECK(h.converged);
  CHECK(h.iterations.size() <= 3);
  CHECK((h.final_phi - oracle).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("already stationary start stops after one iteration") {
  const StructuredMesh mesh(4, 2, 3.0, 1.0);
  VmptConfig config;
  const SparseMatrix a = vmpt_metric(mesh, config);
  // minimizer at +1 everywhere, which is where we start
  QuadraticObjective j(a, Eigen::VectorXd::Constant(a.rows(), 3.0));
  const PhaseField one(mesh, 1.0);
  const OptimizationHistory h = run_vmpt(j, one, config);
  REQUIRE(h.iterations.size() == 1);
  CHECK(h.converged);
  CHECK(h.iterations[0].h1_increment == 0.0);
  CHECK(h.final_phi == one.values());
  CHECK(j.evaluations == 1);
}

TEST_CASE("nonconvex run: feasible, monotone, certified") {
  const StructuredMesh mesh(8, 4, 3.0, 1.0);
  VmptConfig config;
  config.initial_step = 2000.0;
  config.tolerance = 1e-8;
  const Eigen::VectorXd b = 0.5 * random_vector(static_cast<Eigen::Index>(mesh.num_vertices()), 11);
  DoubleWell j(mesh, b);
  const SparseMatrix metric = vmpt_metric(mesh, config);
  std::vector<double> totals;
  int callbacks = 0;
  const PhaseField phi0(ScalarFieldP1(mesh, random_vector(b.size(), 12, -0.3, 0.3)));
  const OptimizationHistory h = run_vmpt(j, phi0, config, [&](const IterationRecord& r, const PhaseField& phi) {
    ++callbacks;
    CHECK(phi.values().cwiseAbs().maxCoeff() <= 1.0);
    CHECK(r.kkt.holds());
    totals.push_back(r.objective.total);
  });
  CHECK(h.converged);
  CHECK(callbacks == static_cast<int>(h.iterations.size()));
  double previous = h.initial.total;
  for (double t : totals) {
    CHECK(t <= previous);
    previous = t;
  }
  CHECK(totals.back() < h.initial.total);
  // some nodes end at each bound of the double well
  CHECK(h.iterations.back().lower_active + h.iterations.back().upper_active > 0);
}

TEST_CASE("a single iterate honours Armijo") {
  const StructuredMesh mesh(4, 2, 3.0, 1.0);
  VmptConfig config;
  config.initial_step = 1e4;
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
  DoubleWell j(mesh, 0.2 * random_vector(n, 13));
  const PhaseField phi0(ScalarFieldP1(mesh, random_vector(n, 14, -0.2, 0.2)));
  const SparseMatrix metric = vmpt_metric(mesh, config);
  SparseMatrix gram = p1_mass_matrix(mesh) + p1_stiffness_matrix(mesh);
  const VmptState s{phi0, j.evaluate(phi0), 0.0};
  const VmptStep step = vmpt_iterate(s, j, metric, gram, config);
  const Eigen::VectorXd d = step.next.phi.values() - phi0.values();
  CHECK(step.next.objective.total <= s.objective.total + config.armijo * j.gradient(phi0).dot(d));
  CHECK(step.record.step == doctest::Approx(1e4 / std::pow(2.0, step.record.backtracks)));
  CHECK(std::abs(step.record.h1_increment - std::sqrt(d.dot(gram * d))) < 1e-14);
}

TEST_CASE("overshooting steps are halved") {
  // gradient 4 A (phi - c): tau = 1 overshoots by 4, tau = 1/2 lands on an
  // equal value, tau = 1/4 is exact
  const StructuredMesh mesh(4, 2, 3.0, 1.0);
  VmptConfig config;
  const SparseMatrix metric = vmpt_metric(mesh, config);
  QuadraticObjective j(SparseMatrix(4.0 * metric), Eigen::VectorXd::Constant(metric.rows(), 0.1));
  SparseMatrix gram = p1_mass_matrix(mesh) + p1_stiffness_matrix(mesh);
  const PhaseField zero(mesh, 0.0);
  const VmptStep step = vmpt_iterate({zero, j.evaluate(zero), 0.0}, j, metric, gram, config);
  CHECK(step.record.backtracks == 2);
  CHECK(step.record.step == 0.25);
  CHECK((step.next.phi.values().array() - 0.1).abs().maxCoeff() < 1e-13);
}

TEST_CASE("step growth restarts from the previous step") {
  const StructuredMesh mesh(4, 2, 3.0, 1.0);
  VmptConfig config;
  config.initial_step = 8.0;
  config.step_growth = 2.0;
  config.max_step = 16.0;
  const auto n = static_cast<Eigen::Index>(mesh.num_vertices());
  DoubleWell j(mesh, 0.2 * random_vector(n, 15));
  const SparseMatrix metric = vmpt_metric(mesh, config);
  SparseMatrix gram = p1_mass_matrix(mesh) + p1_stiffness_matrix(mesh);
  const PhaseField phi0(ScalarFieldP1(mesh, random_vector(n, 16, -0.2, 0.2)));
  for (double last : {1.0, 4.0, 100.0}) {
    const VmptState s{phi0, j.evaluate(phi0), last};
    const VmptStep step = vmpt_iterate(s, j, metric, gram, config);
    const double first = std::min(16.0, 2.0 * last);
    CHECK(step.record.step == doctest::Approx(first / std::pow(2.0, step.record.backtracks)));
  }
}

TEST_CASE("ascent directions stall the line search") {
  const StructuredMesh mesh(4, 2, 3.0, 1.0);
  VmptConfig config;
  config.max_backtracks = 5;
  const SparseMatrix a = vmpt_metric(mesh, config);
  QuadraticObjective j(a, Eigen::VectorXd::Constant(a.rows(), 0.5));
  j.sign = -1.0;
  try {
    run_vmpt(j, PhaseField(mesh, 0.0), config);
    FAIL("expected a failure");
  } catch (const OptimizationFailure& e) {
    CHECK(e.partial().iterations.empty());
    CHECK_THROWS_AS(std::rethrow_exception(e.cause()), StalledLineSearchError);
  }
}

TEST_CASE("history CSV") {
  OptimizationHistory h;
  h.initial = {3.0, 2.0, 0.5, 0.5};
  IterationRecord r;
  r.iter = 1;
  r.objective = {2.0, 1.0, 0.5, 0.5};
  r.step = 0.25;
  r.h1_increment = 0.125;
  h.iterations.push_back(r);
  const auto path = (std::filesystem::temp_directory_path() / "flowtopo_history.csv").string();
  write_history_csv(h, path, {{"mode", "test"}});
  std::ifstream in(path);
  std::string line;
  std::vector<std::string> lines;
  while (std::getline(in, line)) lines.push_back(line);
  REQUIRE(lines.size() == 4);
  CHECK(lines[0] == "# mode=test");
  CHECK(lines[1] == "iter,total,tracking,porous,regularization,step,h1_increment");
  CHECK(lines[2].rfind("0,3,2,0.5,0.5,0,0", 0) == 0);
  CHECK(lines[3].rfind("1,2,1,0.5,0.5,0.25,0.125", 0) == 0);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(write_history_csv(h, "/nonexistent/dir/h.csv"), IoError);
}
