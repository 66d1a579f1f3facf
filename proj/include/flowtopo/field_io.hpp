#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "flowtopo/fields.hpp"
#include "flowtopo/mesh.hpp"

namespace flowtopo {

struct NamedField {
  std::string name;
  std::variant<ScalarFieldP1, VelocityFieldMini> field;
};

/// Legacy ASCII VTK unstructured grid with POINT_DATA. Velocities are written
/// from their vertex values, padded to three components. `title` lands in the
/// header line (used for provenance hashes).
void export_fields(const StructuredMesh& mesh, const std::vector<NamedField>& fields,
                   const std::string& path, const std::string& title = "flowtopo");

/// Minimal reader for files written by export_fields: point coordinates plus
/// every SCALARS / VECTORS array, keyed by name. Vectors are flattened xyz.
struct VtkPointData {
  std::vector<Eigen::Vector3d> points;
  std::size_t cell_count = 0;
  std::map<std::string, std::vector<double>> arrays;
  std::map<std::string, int> components;
};
VtkPointData read_vtk_point_data(const std::string& path);

/// Comment lines starting with '#' carry provenance key=value pairs.
using Provenance = std::vector<std::pair<std::string, std::string>>;

/// `node_index,phi` restart format.
void write_phase_csv(const ScalarFieldP1& phi, const std::string& path,
                     const Provenance& provenance = {});
ScalarFieldP1 read_phase_csv(const StructuredMesh& mesh, const std::string& path);

/// Full MINI coefficient dump `dof,value` (vertex shapes first, then bubbles).
void write_velocity_csv(const VelocityFieldMini& u, const std::string& path,
                        const Provenance& provenance = {});
VelocityFieldMini read_velocity_csv(const StructuredMesh& mesh, const std::string& path);

/// Provenance comments of a CSV file written by this library.
Provenance read_provenance(const std::string& path);

/// FNV-1a over a byte string, rendered as 16 hex digits.
std::string hash_string(const std::string& bytes);
std::string hash_file(const std::string& path);

}  // namespace flowtopo
