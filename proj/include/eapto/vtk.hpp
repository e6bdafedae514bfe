#pragma once

#include "eapto/mesh.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <span>
#include <string>
#include <vector>

namespace eapto::vtk {

struct Field {
  std::string name;
  int components = 1;
  std::vector<Real> values;  ///< size = entities * components
};

/// Legacy ASCII unstructured grid of hexahedra (cell type 12). When
/// `displacement` (3 per node) is given the points are written deformed.
inline void write(const std::filesystem::path& path, const Mesh& mesh, const std::vector<Field>& point_data = {},
                  const std::vector<Field>& cell_data = {}, std::span<const Real> displacement = {}) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << std::setprecision(12);
  out << "# vtk DataFile Version 3.0\neapto mesh\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.n_nodes() << " double\n";
  for (const Node& n : mesh.nodes) {
    Vec3 x = n.X;
    if (!displacement.empty()) {
      for (int d = 0; d < 3; ++d) x(d) += displacement[static_cast<std::size_t>(3 * n.id + d)];
    }
    out << x(0) << ' ' << x(1) << ' ' << x(2) << '\n';
  }
  out << "CELLS " << mesh.n_elements() << ' ' << 9 * mesh.n_elements() << '\n';
  for (const Element& e : mesh.elements) {
    out << 8;
    for (Index id : e.node_ids) out << ' ' << id;
    out << '\n';
  }
  out << "CELL_TYPES " << mesh.n_elements() << '\n';
  for (Index e = 0; e < mesh.n_elements(); ++e) out << "12\n";

  auto write_fields = [&](const std::vector<Field>& fields, Index count, const char* header) {
    if (fields.empty()) return;
    out << header << ' ' << count << '\n';
    for (const Field& f : fields) {
      if (f.values.size() != static_cast<std::size_t>(count * f.components))
        throw Error("VTK field '" + f.name + "' has wrong length");
      if (f.components == 1) {
        out << "SCALARS " << f.name << " double 1\nLOOKUP_TABLE default\n";
      } else {
        out << "VECTORS " << f.name << " double\n";
      }
      for (Index i = 0; i < count; ++i) {
        for (int c = 0; c < f.components; ++c) {
          out << f.values[static_cast<std::size_t>(i * f.components + c)] << (c + 1 == f.components ? '\n' : ' ');
        }
      }
    }
  };
  write_fields(cell_data, mesh.n_elements(), "CELL_DATA");
  write_fields(point_data, mesh.n_nodes(), "POINT_DATA");
  if (!out) throw Error("write failed for '" + path.string() + "'");
}

}  // namespace eapto::vtk
