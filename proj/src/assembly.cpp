#include "flowtopo/assembly.hpp"

#include <algorithm>
#include <cmath>

#include "flowtopo/errors.hpp"

namespace flowtopo {

void set_convection(OperatorTerms& terms, ConvectionMode mode, const Eigen::VectorXd* advecting,
                    const Eigen::VectorXd* frozen) {
  terms.advecting = nullptr;
  terms.derivative_about = nullptr;
  terms.transposed = false;
  terms.form = ConvectionForm::Skew;
  if (mode == ConvectionMode::None) return;
  if (advecting == nullptr) throw InvalidArgument("convection requested without an advecting field");
  switch (mode) {
    case ConvectionMode::Standard:
      terms.form = ConvectionForm::Standard;
      terms.advecting = advecting;
      break;
    case ConvectionMode::Skew:
      terms.advecting = advecting;
      break;
    case ConvectionMode::Linearized:
    case ConvectionMode::Adjoint:
      terms.advecting = advecting;
      terms.derivative_about = frozen ? frozen : advecting;
      terms.transposed = mode == ConvectionMode::Adjoint;
      break;
    case ConvectionMode::None:
      break;
  }
}

DofLayout::DofLayout(const StructuredMesh& mesh)
    : free_index_(VelocityFieldMini::dof_count(mesh), 0), pressure_dofs_(mesh.num_vertices()) {
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    if (mesh.on_boundary(i)) {
      free_index_[2 * i] = -1;
      free_index_[2 * i + 1] = -1;
    }
  }
  for (std::size_t d = 0; d < free_index_.size(); ++d) {
    if (free_index_[d] < 0) continue;
    free_index_[d] = static_cast<int>(free_to_full_.size());
    free_to_full_.push_back(static_cast<int>(d));
  }
}

Eigen::VectorXd DofLayout::restrict_free(const Eigen::VectorXd& full_velocity) const {
  Eigen::VectorXd out(static_cast<Eigen::Index>(free_to_full_.size()));
  for (std::size_t k = 0; k < free_to_full_.size(); ++k) out[static_cast<Eigen::Index>(k)] = full_velocity[free_to_full_[k]];
  return out;
}

void DofLayout::scatter_free(const Eigen::VectorXd& system_vector, Eigen::VectorXd& full_velocity) const {
  for (std::size_t k = 0; k < free_to_full_.size(); ++k) full_velocity[free_to_full_[k]] += system_vector[static_cast<Eigen::Index>(k)];
}

namespace {

int find_position(const SparseMatrix& m, int row, int col) {
  const int* begin = m.innerIndexPtr() + m.outerIndexPtr()[col];
  const int* end = m.innerIndexPtr() + m.outerIndexPtr()[col + 1];
  const int* it = std::lower_bound(begin, end, row);
  if (it == end || *it != row) return -1;
  return static_cast<int>(it - m.innerIndexPtr());
}

}  // namespace

FlowDiscretization::FlowDiscretization(const StructuredMesh& mesh)
    : mesh_(&mesh), basis_(mesh), layout_(mesh) {
  for (int shape = 0; shape < 2; ++shape) {
    const ElementBasis& eb = basis_[static_cast<std::size_t>(shape)];
    Eigen::Matrix4d k = Eigen::Matrix4d::Zero();
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    std::array<Eigen::Matrix4d, 3> wm{Eigen::Matrix4d::Zero(), Eigen::Matrix4d::Zero(),
                                      Eigen::Matrix4d::Zero()};
    LocalDivergence div = LocalDivergence::Zero();
    for (const auto& qp : eb.points) {
      for (std::size_t a = 0; a < kVelocityShapes; ++a) {
        for (std::size_t b = 0; b < kVelocityShapes; ++b) {
          const double nn = qp.weight * qp.shape[a] * qp.shape[b];
          k(a, b) += qp.weight * qp.grad[a].dot(qp.grad[b]);
          m(a, b) += nn;
          for (int v = 0; v < 3; ++v) wm[v](a, b) += nn * qp.lambda[v];
        }
      }
      for (int i = 0; i < 3; ++i)
        for (std::size_t b = 0; b < kVelocityShapes; ++b)
          for (int c = 0; c < 2; ++c) div(i, 2 * b + c) -= qp.weight * qp.lambda[i] * qp.grad[b][c];
    }
    stiffness_[shape] = k;
    mass_[shape] = m;
    weighted_mass_[shape] = wm;
    divergence_[shape] = div;
  }
  pressure_mass_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh.num_vertices()));
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t)
    for (int v : mesh.triangle(t)) pressure_mass_[v] += basis_[t].area / 3.0;

  // sparsity pattern shared by every saddle operator
  const auto np = static_cast<int>(layout_.pressure_offset());
  const auto nm = static_cast<int>(layout_.multiplier_index());
  std::vector<Eigen::Triplet<double>> trip;
  trip.reserve(mesh.num_triangles() * (64 + 48) + 2 * mesh.num_vertices());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto dofs = element_dofs(t);
    const auto& tri = mesh.triangle(t);
    for (int r = 0; r < kLocalVelocity; ++r) {
      const int fr = layout_.free_index(static_cast<std::size_t>(dofs[r]));
      if (fr < 0) continue;
      for (int c = 0; c < kLocalVelocity; ++c) {
        const int fc = layout_.free_index(static_cast<std::size_t>(dofs[c]));
        if (fc >= 0) trip.emplace_back(fr, fc, 0.0);
      }
      for (int i = 0; i < 3; ++i) {
        trip.emplace_back(np + tri[i], fr, 0.0);
        trip.emplace_back(fr, np + tri[i], 0.0);
      }
    }
  }
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    trip.emplace_back(nm, np + static_cast<int>(i), 0.0);
    trip.emplace_back(np + static_cast<int>(i), nm, 0.0);
  }
  const auto n = static_cast<Eigen::Index>(layout_.system_size());
  pattern_.resize(n, n);
  pattern_.setFromTriplets(trip.begin(), trip.end());
  pattern_.makeCompressed();

  velocity_pos_.resize(mesh.num_triangles());
  div_pos_.resize(mesh.num_triangles());
  grad_pos_.resize(mesh.num_triangles());
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const auto dofs = element_dofs(t);
    const auto& tri = mesh.triangle(t);
    for (int r = 0; r < kLocalVelocity; ++r) {
      const int fr = layout_.free_index(static_cast<std::size_t>(dofs[r]));
      for (int c = 0; c < kLocalVelocity; ++c) {
        const int fc = layout_.free_index(static_cast<std::size_t>(dofs[c]));
        velocity_pos_[t][r * kLocalVelocity + c] =
            (fr >= 0 && fc >= 0) ? find_position(pattern_, fr, fc) : -1;
      }
      for (int i = 0; i < 3; ++i) {
        div_pos_[t][i * kLocalVelocity + r] = fr >= 0 ? find_position(pattern_, np + tri[i], fr) : -1;
        grad_pos_[t][i * kLocalVelocity + r] = fr >= 0 ? find_position(pattern_, fr, np + tri[i]) : -1;
      }
    }
  }
  multiplier_row_pos_.resize(mesh.num_vertices());
  multiplier_col_pos_.resize(mesh.num_vertices());
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    multiplier_row_pos_[i] = find_position(pattern_, nm, np + static_cast<int>(i));
    multiplier_col_pos_[i] = find_position(pattern_, np + static_cast<int>(i), nm);
  }
}

std::array<int, kLocalVelocity> FlowDiscretization::element_dofs(std::size_t t) const {
  const auto& tri = mesh_->triangle(t);
  const int bubble = static_cast<int>(mesh_->num_vertices() + t);
  const std::array<int, 4> shapes{tri[0], tri[1], tri[2], bubble};
  std::array<int, kLocalVelocity> d{};
  for (int a = 0; a < 4; ++a) {
    d[2 * a] = 2 * shapes[a];
    d[2 * a + 1] = 2 * shapes[a] + 1;
  }
  return d;
}

LocalMatrix FlowDiscretization::local_velocity_matrix(std::size_t t,
                                                      const OperatorTerms& terms) const {
  const int shape = static_cast<int>(t % 2);
  Eigen::Matrix4d scalar = terms.mass * mass_[shape] + terms.viscosity * stiffness_[shape];
  if (terms.alpha) {
    const auto& tri = mesh_->triangle(t);
    for (int v = 0; v < 3; ++v) scalar += (*terms.alpha)[tri[v]] * weighted_mass_[shape][v];
  }
  const ElementBasis& eb = basis_[t];
  const auto dofs = element_dofs(t);
  const bool skew = terms.form == ConvectionForm::Skew;

  if (terms.advecting) {
    const auto& w = *terms.advecting;
    Eigen::Matrix4d conv = Eigen::Matrix4d::Zero();
    for (const auto& qp : eb.points) {
      Eigen::Vector2d wq = Eigen::Vector2d::Zero();
      for (int a = 0; a < 4; ++a) wq += qp.shape[a] * Eigen::Vector2d(w[dofs[2 * a]], w[dofs[2 * a + 1]]);
      for (int b = 0; b < 4; ++b) {
        const double adv = qp.weight * wq.dot(qp.grad[b]);
        for (int a = 0; a < 4; ++a) conv(a, b) += adv * qp.shape[a];
      }
    }
    scalar += skew ? Eigen::Matrix4d(0.5 * (conv - conv.transpose())) : conv;
  }

  LocalMatrix local = LocalMatrix::Zero();
  for (int a = 0; a < 4; ++a)
    for (int b = 0; b < 4; ++b) {
      local(2 * a, 2 * b) = scalar(a, b);
      local(2 * a + 1, 2 * b + 1) = scalar(a, b);
    }

  if (terms.derivative_about) {
    // c(trial; v1, test): row (a, c') test, column (b, c) trial
    const auto& v1 = *terms.derivative_about;
    for (const auto& qp : eb.points) {
      Eigen::Vector2d vq = Eigen::Vector2d::Zero();
      Eigen::Matrix2d grad = Eigen::Matrix2d::Zero();  // grad(cp, c) = d_c v_cp
      for (int s = 0; s < 4; ++s) {
        const Eigen::Vector2d vs(v1[dofs[2 * s]], v1[dofs[2 * s + 1]]);
        vq += qp.shape[s] * vs;
        grad += vs * qp.grad[s].transpose();
      }
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          const double nn = qp.weight * qp.shape[a] * qp.shape[b];
          for (int cp = 0; cp < 2; ++cp)
            for (int c = 0; c < 2; ++c) {
              double value = nn * grad(cp, c);
              if (skew) value = 0.5 * (value - qp.weight * qp.shape[b] * qp.grad[a][c] * vq[cp]);
              local(2 * a + cp, 2 * b + c) += value;
            }
        }
    }
  }
  if (terms.transposed) local.transposeInPlace();
  return local;
}

SparseMatrix FlowDiscretization::assemble(const OperatorTerms& terms) const {
  SparseMatrix m = pattern_;
  double* values = m.valuePtr();
  std::fill(values, values + m.nonZeros(), 0.0);
  for (std::size_t t = 0; t < mesh_->num_triangles(); ++t) {
    const LocalMatrix local = local_velocity_matrix(t, terms);
    const auto& pos = velocity_pos_[t];
    for (int r = 0; r < kLocalVelocity; ++r)
      for (int c = 0; c < kLocalVelocity; ++c) {
        const int p = pos[r * kLocalVelocity + c];
        if (p >= 0) values[p] += local(r, c);
      }
    const LocalDivergence& div = divergence_[t % 2];
    for (int i = 0; i < 3; ++i)
      for (int r = 0; r < kLocalVelocity; ++r) {
        const int pd = div_pos_[t][i * kLocalVelocity + r];
        if (pd >= 0) values[pd] += div(i, r);
        const int pg = grad_pos_[t][i * kLocalVelocity + r];
        if (pg >= 0) values[pg] += div(i, r);
      }
  }
  for (std::size_t i = 0; i < mesh_->num_vertices(); ++i) {
    values[multiplier_row_pos_[i]] += pressure_mass_[static_cast<Eigen::Index>(i)];
    values[multiplier_col_pos_[i]] += pressure_mass_[static_cast<Eigen::Index>(i)];
  }
  return m;
}

Eigen::VectorXd FlowDiscretization::apply(const OperatorTerms& terms, const Eigen::VectorXd& x) const {
  Eigen::VectorXd y = Eigen::VectorXd::Zero(x.size());
  Eigen::Matrix<double, kLocalVelocity, 1> xl;
  for (std::size_t t = 0; t < mesh_->num_triangles(); ++t) {
    const auto dofs = element_dofs(t);
    for (int l = 0; l < kLocalVelocity; ++l) xl[l] = x[dofs[l]];
    const Eigen::Matrix<double, kLocalVelocity, 1> yl = local_velocity_matrix(t, terms) * xl;
    for (int l = 0; l < kLocalVelocity; ++l) y[dofs[l]] += yl[l];
  }
  return y;
}

Eigen::VectorXd FlowDiscretization::divergence(const Eigen::VectorXd& velocity) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(mesh_->num_vertices()));
  for (std::size_t t = 0; t < mesh_->num_triangles(); ++t) {
    const auto dofs = element_dofs(t);
    const auto& tri = mesh_->triangle(t);
    const LocalDivergence& div = divergence_[t % 2];
    for (int i = 0; i < 3; ++i) {
      double s = 0.0;
      for (int l = 0; l < kLocalVelocity; ++l) s += div(i, l) * velocity[dofs[l]];
      out[tri[i]] += s;
    }
  }
  return out;
}

Eigen::VectorXd FlowDiscretization::gradient(const Eigen::VectorXd& pressure) const {
  Eigen::VectorXd out = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout_.velocity_dofs()));
  for (std::size_t t = 0; t < mesh_->num_triangles(); ++t) {
    const auto dofs = element_dofs(t);
    const auto& tri = mesh_->triangle(t);
    const LocalDivergence& div = divergence_[t % 2];
    for (int l = 0; l < kLocalVelocity; ++l) {
      double s = 0.0;
      for (int i = 0; i < 3; ++i) s += div(i, l) * pressure[tri[i]];
      out[dofs[l]] += s;
    }
  }
  return out;
}

Eigen::VectorXd FlowDiscretization::load_vector(const Eigen::VectorXd& field) const {
  OperatorTerms mass;
  mass.mass = 1.0;
  return apply(mass, field);
}

Eigen::VectorXd FlowDiscretization::pack(const Eigen::VectorXd& full_velocity,
                                         const Eigen::VectorXd& pressure, double multiplier) const {
  Eigen::VectorXd x(static_cast<Eigen::Index>(layout_.system_size()));
  x.head(static_cast<Eigen::Index>(layout_.free_velocity())) = layout_.restrict_free(full_velocity);
  x.segment(static_cast<Eigen::Index>(layout_.pressure_offset()), pressure.size()) = pressure;
  x[static_cast<Eigen::Index>(layout_.multiplier_index())] = multiplier;
  return x;
}

FlowDiscretization::Unpacked FlowDiscretization::unpack(const Eigen::VectorXd& x) const {
  Unpacked u;
  u.velocity = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(layout_.velocity_dofs()));
  layout_.scatter_free(x, u.velocity);
  u.pressure = x.segment(static_cast<Eigen::Index>(layout_.pressure_offset()),
                         static_cast<Eigen::Index>(layout_.pressure_dofs()));
  u.multiplier = x[static_cast<Eigen::Index>(layout_.multiplier_index())];
  return u;
}

Eigen::VectorXd FlowDiscretization::saddle_residual(const Eigen::VectorXd& velocity_action,
                                                    const Eigen::VectorXd& full_velocity,
                                                    const Eigen::VectorXd& pressure,
                                                    double multiplier,
                                                    const Eigen::VectorXd& velocity_load,
                                                    const Eigen::VectorXd& divergence_load) const {
  Eigen::VectorXd r(static_cast<Eigen::Index>(layout_.system_size()));
  const Eigen::VectorXd momentum = velocity_action + gradient(pressure) - velocity_load;
  r.head(static_cast<Eigen::Index>(layout_.free_velocity())) = layout_.restrict_free(momentum);
  r.segment(static_cast<Eigen::Index>(layout_.pressure_offset()), pressure.size()) =
      divergence(full_velocity) + multiplier * pressure_mass_ - divergence_load;
  r[static_cast<Eigen::Index>(layout_.multiplier_index())] = pressure_mass_.dot(pressure);
  return r;
}

double FlowDiscretization::h1_seminorm(const Eigen::VectorXd& velocity) const {
  OperatorTerms k;
  k.viscosity = 1.0;
  return std::sqrt(std::max(0.0, velocity.dot(apply(k, velocity))));
}

double FlowDiscretization::l2_norm(const Eigen::VectorXd& velocity) const {
  OperatorTerms m;
  m.mass = 1.0;
  return std::sqrt(std::max(0.0, velocity.dot(apply(m, velocity))));
}

}  // namespace flowtopo
