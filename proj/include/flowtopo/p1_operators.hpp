#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "flowtopo/mesh.hpp"

namespace flowtopo {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// Consistent P1 mass matrix int b_i b_j.
SparseMatrix p1_mass_matrix(const StructuredMesh& mesh);

/// P1 stiffness matrix int grad b_i . grad b_j.
SparseMatrix p1_stiffness_matrix(const StructuredMesh& mesh);

/// int b_i dx per vertex.
Eigen::VectorXd p1_mass_vector(const StructuredMesh& mesh);

}  // namespace flowtopo
