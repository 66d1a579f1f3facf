#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "flowtopo/fields.hpp"
#include "flowtopo/linear_solver.hpp"
#include "flowtopo/mesh.hpp"
#include "flowtopo/quadrature.hpp"

namespace flowtopo {

/// How the trilinear term b(w, v, q) = int (w . grad) v . q enters an operator.
///   None       - no convection
///   Standard   - b(w, trial, test)
///   Skew       - c(w; trial, test) = 1/2 [b(w, trial, test) - b(w, test, trial)]
///   Linearized - skew form differentiated in both slots: c(w; trial, .) + c(trial; v1, .)
///   Adjoint    - transpose of Linearized
enum class ConvectionMode { None, Standard, Skew, Linearized, Adjoint };

enum class ConvectionForm { Standard, Skew };

/// Ingredients of a velocity operator
///   mass * M + M_alpha + viscosity * K + c(w; trial, test) + c(trial; v1, test)
/// where the convection slots are active when `advecting` (w) or
/// `derivative_about` (v1) is set. All vectors are full MINI coefficient
/// vectors; `alpha` is nodal.
struct OperatorTerms {
  double mass = 0.0;
  const Eigen::VectorXd* alpha = nullptr;
  double viscosity = 0.0;
  ConvectionForm form = ConvectionForm::Skew;
  const Eigen::VectorXd* advecting = nullptr;
  const Eigen::VectorXd* derivative_about = nullptr;
  bool transposed = false;
};

/// Fill the convection slots of `terms` for a public convection mode.
void set_convection(OperatorTerms& terms, ConvectionMode mode, const Eigen::VectorXd* advecting,
                    const Eigen::VectorXd* frozen = nullptr);

/// Unknown numbering of the saddle systems. Velocity shapes follow
/// VelocityFieldMini (dof 2*s+c). Dirichlet dofs are the vertex dofs on the
/// boundary; the system unknowns are [free velocity | pressure | multiplier].
class DofLayout {
 public:
  explicit DofLayout(const StructuredMesh& mesh);

  std::size_t velocity_dofs() const { return free_index_.size(); }
  std::size_t free_velocity() const { return free_to_full_.size(); }
  std::size_t pressure_dofs() const { return pressure_dofs_; }
  std::size_t pressure_offset() const { return free_velocity(); }
  std::size_t multiplier_index() const { return free_velocity() + pressure_dofs_; }
  std::size_t system_size() const { return multiplier_index() + 1; }

  /// -1 for Dirichlet dofs.
  int free_index(std::size_t full_dof) const { return free_index_[full_dof]; }
  bool is_dirichlet(std::size_t full_dof) const { return free_index_[full_dof] < 0; }
  const std::vector<int>& free_to_full() const { return free_to_full_; }

  Eigen::VectorXd restrict_free(const Eigen::VectorXd& full_velocity) const;
  /// Adds the free entries of `system_vector` into a full velocity vector.
  void scatter_free(const Eigen::VectorXd& system_vector, Eigen::VectorXd& full_velocity) const;

 private:
  std::vector<int> free_index_;
  std::vector<int> free_to_full_;
  std::size_t pressure_dofs_;
};

constexpr int kLocalVelocity = 8;  // 4 shapes x 2 components, local dof 2*a+c
using LocalMatrix = Eigen::Matrix<double, kLocalVelocity, kLocalVelocity>;
using LocalDivergence = Eigen::Matrix<double, 3, kLocalVelocity>;

/// Element kernels and global assembly for the penalized Navier-Stokes forms on
/// the MINI pair. The sparsity pattern of the saddle system is built once and
/// shared by every operator so factorizations can reuse their analysis.
class FlowDiscretization {
 public:
  explicit FlowDiscretization(const StructuredMesh& mesh);

  const StructuredMesh& mesh() const { return *mesh_; }
  const DofLayout& layout() const { return layout_; }
  const BasisCache& basis() const { return basis_; }

  /// Global velocity dof of local dof l on triangle t.
  std::array<int, kLocalVelocity> element_dofs(std::size_t t) const;

  LocalMatrix local_velocity_matrix(std::size_t t, const OperatorTerms& terms) const;
  /// -int q_i div(v) for P1 pressure q_i and local velocity dofs.
  const LocalDivergence& local_divergence(std::size_t t) const { return divergence_[t % 2]; }

  /// Saddle matrix on [free velocity | pressure | multiplier].
  SparseMatrix assemble(const OperatorTerms& terms) const;

  /// y = A x for the velocity operator on full velocity vectors (no Dirichlet
  /// elimination).
  Eigen::VectorXd apply(const OperatorTerms& terms, const Eigen::VectorXd& x) const;

  /// B v: pressure-length vector -int q_i div v.
  Eigen::VectorXd divergence(const Eigen::VectorXd& velocity) const;
  /// B^T p: full velocity-length vector.
  Eigen::VectorXd gradient(const Eigen::VectorXd& pressure) const;
  /// int q_i dx.
  const Eigen::VectorXd& pressure_mass() const { return pressure_mass_; }

  /// int f . N_j over full velocity dofs for a MINI field f.
  Eigen::VectorXd load_vector(const Eigen::VectorXd& field) const;

  /// Full velocity vector holding `profile` at boundary vertices, zero elsewhere.
  template <typename Profile>
  Eigen::VectorXd dirichlet_vector(Profile&& profile, double factor = 1.0) const {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout_.velocity_dofs()));
    for (std::size_t i = 0; i < mesh_->num_vertices(); ++i) {
      if (!mesh_->on_boundary(i)) continue;
      const Eigen::Vector2d v = factor * profile(mesh_->vertex(i));
      g[static_cast<Eigen::Index>(2 * i)] = v.x();
      g[static_cast<Eigen::Index>(2 * i + 1)] = v.y();
    }
    return g;
  }

  /// Pack full velocity + pressure + multiplier into a system vector and back.
  Eigen::VectorXd pack(const Eigen::VectorXd& full_velocity, const Eigen::VectorXd& pressure,
                       double multiplier) const;
  struct Unpacked {
    Eigen::VectorXd velocity;  // full, Dirichlet entries zero
    Eigen::VectorXd pressure;
    double multiplier;
  };
  Unpacked unpack(const Eigen::VectorXd& system_vector) const;

  /// Saddle residual of (velocity, pressure, multiplier) for a velocity
  /// operator applied to the full velocity vector minus a velocity load,
  /// returned on the system unknowns.
  Eigen::VectorXd saddle_residual(const Eigen::VectorXd& velocity_action,
                                  const Eigen::VectorXd& full_velocity,
                                  const Eigen::VectorXd& pressure, double multiplier,
                                  const Eigen::VectorXd& velocity_load,
                                  const Eigen::VectorXd& divergence_load) const;

  /// ||grad v||_{L2} of a full velocity vector.
  double h1_seminorm(const Eigen::VectorXd& velocity) const;
  double l2_norm(const Eigen::VectorXd& velocity) const;

 private:
  const StructuredMesh* mesh_;
  BasisCache basis_;
  DofLayout layout_;
  // per-shape constant blocks (scalar 4x4 over shapes)
  std::array<Eigen::Matrix4d, 2> stiffness_;
  std::array<Eigen::Matrix4d, 2> mass_;
  std::array<std::array<Eigen::Matrix4d, 3>, 2> weighted_mass_;  // weight = lambda_v
  std::array<LocalDivergence, 2> divergence_;
  Eigen::VectorXd pressure_mass_;

  SparseMatrix pattern_;
  // per element: positions in pattern_ values, -1 where not free-free
  std::vector<std::array<int, kLocalVelocity * kLocalVelocity>> velocity_pos_;
  std::vector<std::array<int, 3 * kLocalVelocity>> div_pos_;   // (pressure row, vel col)
  std::vector<std::array<int, 3 * kLocalVelocity>> grad_pos_;  // (vel row, pressure col)
  std::vector<int> multiplier_row_pos_;                        // (mult row, pressure col)
  std::vector<int> multiplier_col_pos_;                        // (pressure row, mult col)
};

}  // namespace flowtopo
