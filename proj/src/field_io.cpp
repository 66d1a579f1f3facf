#include "flowtopo/field_io.hpp"

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "flowtopo/errors.hpp"

namespace flowtopo {

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << std::setprecision(17);
  return os;
}

void write_provenance(std::ostream& os, const Provenance& provenance) {
  for (const auto& [key, value] : provenance) os << "# " << key << '=' << value << '\n';
}

// Reads "index,value" rows after the header, skipping provenance comments.
std::vector<std::pair<long, double>> read_indexed_csv(const std::string& path,
                                                     const std::string& header) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  std::string line;
  bool seen_header = false;
  std::vector<std::pair<long, double>> rows;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    if (!seen_header) {
      if (line != header) throw IoError(path + ": expected header '" + header + "'");
      seen_header = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw IoError(path + ": malformed row '" + line + "'");
    try {
      rows.emplace_back(std::stol(line.substr(0, comma)), std::stod(line.substr(comma + 1)));
    } catch (const std::exception&) {
      throw IoError(path + ": malformed row '" + line + "'");
    }
  }
  if (!seen_header) throw IoError(path + ": missing header");
  return rows;
}

Eigen::VectorXd rows_to_vector(const std::vector<std::pair<long, double>>& rows, std::size_t n,
                               const std::string& path) {
  if (rows.size() != n) {
    throw InvalidArgument(path + ": has " + std::to_string(rows.size()) + " rows, mesh needs " +
                          std::to_string(n));
  }
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (std::size_t k = 0; k < n; ++k) {
    if (rows[k].first != static_cast<long>(k)) throw IoError(path + ": indices out of order");
    v[static_cast<Eigen::Index>(k)] = rows[k].second;
  }
  return v;
}

}  // namespace

void export_fields(const StructuredMesh& mesh, const std::vector<NamedField>& fields,
                   const std::string& path, const std::string& title) {
  for (const auto& nf : fields) {
    const bool ok = std::visit([&](const auto& f) { return f.has_mesh() && &f.mesh() == &mesh; },
                               nf.field);
    if (!ok) throw InvalidArgument("field '" + nf.name + "' does not live on the export mesh");
  }
  auto os = open_out(path);
  os << "# vtk DataFile Version 3.0\n" << title << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  os << "POINTS " << mesh.num_vertices() << " double\n";
  for (const auto& p : mesh.vertices()) os << p.x() << ' ' << p.y() << " 0\n";
  os << "CELLS " << mesh.num_triangles() << ' ' << 4 * mesh.num_triangles() << '\n';
  for (const auto& t : mesh.triangles()) os << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  os << "CELL_TYPES " << mesh.num_triangles() << '\n';
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) os << "5\n";
  if (!fields.empty()) os << "POINT_DATA " << mesh.num_vertices() << '\n';
  for (const auto& nf : fields) {
    if (const auto* s = std::get_if<ScalarFieldP1>(&nf.field)) {
      os << "SCALARS " << nf.name << " double 1\nLOOKUP_TABLE default\n";
      for (std::size_t i = 0; i < s->size(); ++i) os << (*s)[i] << '\n';
    } else {
      const auto& u = std::get<VelocityFieldMini>(nf.field);
      os << "VECTORS " << nf.name << " double\n";
      for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
        const auto v = u.nodal(i);
        os << v.x() << ' ' << v.y() << " 0\n";
      }
    }
  }
  if (!os) throw IoError("write failed: " + path);
}

VtkPointData read_vtk_point_data(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  VtkPointData out;
  std::string token;
  std::size_t npoints = 0;
  while (is >> token) {
    if (token == "POINTS") {
      std::string type;
      is >> npoints >> type;
      out.points.resize(npoints);
      for (auto& p : out.points) is >> p.x() >> p.y() >> p.z();
    } else if (token == "CELLS") {
      std::size_t size = 0;
      is >> out.cell_count >> size;
      for (std::size_t k = 0; k < size; ++k) is >> token;
    } else if (token == "SCALARS" || token == "VECTORS") {
      const bool vec = token == "VECTORS";
      std::string name, type;
      is >> name >> type;
      int ncomp = 3;
      if (!vec) {
        std::string rest;
        std::getline(is, rest);
        std::istringstream rs(rest);
        if (!(rs >> ncomp)) ncomp = 1;
        is >> token >> token;  // LOOKUP_TABLE default
      }
      auto& arr = out.arrays[name];
      arr.resize(npoints * static_cast<std::size_t>(ncomp));
      for (auto& x : arr) is >> x;
      out.components[name] = ncomp;
    }
  }
  return out;
}

void write_phase_csv(const ScalarFieldP1& phi, const std::string& path,
                     const Provenance& provenance) {
  auto os = open_out(path);
  write_provenance(os, provenance);
  os << "node_index,phi\n";
  for (std::size_t i = 0; i < phi.size(); ++i) os << i << ',' << phi[i] << '\n';
  if (!os) throw IoError("write failed: " + path);
}

ScalarFieldP1 read_phase_csv(const StructuredMesh& mesh, const std::string& path) {
  const auto rows = read_indexed_csv(path, "node_index,phi");
  return ScalarFieldP1(mesh, rows_to_vector(rows, mesh.num_vertices(), path));
}

void write_velocity_csv(const VelocityFieldMini& u, const std::string& path,
                        const Provenance& provenance) {
  auto os = open_out(path);
  write_provenance(os, provenance);
  os << "dof,value\n";
  const auto& c = u.coefficients();
  for (Eigen::Index i = 0; i < c.size(); ++i) os << i << ',' << c[i] << '\n';
  if (!os) throw IoError("write failed: " + path);
}

VelocityFieldMini read_velocity_csv(const StructuredMesh& mesh, const std::string& path) {
  const auto rows = read_indexed_csv(path, "dof,value");
  return VelocityFieldMini(mesh, rows_to_vector(rows, VelocityFieldMini::dof_count(mesh), path));
}

Provenance read_provenance(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path);
  Provenance out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.rfind("# ", 0) != 0) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    out.emplace_back(line.substr(2, eq - 2), line.substr(eq + 1));
  }
  return out;
}

std::string hash_string(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

std::string hash_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return hash_string(ss.str());
}

}  // namespace flowtopo
