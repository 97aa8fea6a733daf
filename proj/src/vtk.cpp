#include "biotstokes/vtk.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>

namespace bstok {

namespace {

// fixed formatting so identical runs produce bitwise-identical files
std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void check_size(size_t have, size_t want, const std::string& name,
                const char* what) {
  if (have != want) {
    throw VtkError("field \"" + name + "\" has " + std::to_string(have) +
                   " values but the mesh has " + std::to_string(want) + " " +
                   what);
  }
}

}  // namespace

void write_vtk(const Mesh& mesh, const VtkSnapshot& snapshot,
               std::ostream& out) {
  const size_t n_points = static_cast<size_t>(mesh.num_vertices());
  const size_t n_cells = static_cast<size_t>(mesh.num_cells());

  out << "# vtk DataFile Version 2.0\n";
  out << "biotstokes snapshot\n";
  out << "ASCII\n";
  out << "DATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << n_points << " double\n";
  for (const Vec2& p : mesh.vertices) {
    out << fmt(p.x) << ' ' << fmt(p.y) << " 0\n";
  }
  out << "CELLS " << n_cells << ' ' << 4 * n_cells << '\n';
  for (const auto& c : mesh.cells) {
    out << "3 " << c[0] << ' ' << c[1] << ' ' << c[2] << '\n';
  }
  out << "CELL_TYPES " << n_cells << '\n';
  for (size_t i = 0; i < n_cells; ++i) {
    out << "5\n";
  }

  if (!snapshot.point_scalars.empty() || !snapshot.point_vectors.empty()) {
    out << "POINT_DATA " << n_points << '\n';
    for (const auto& [name, values] : snapshot.point_scalars) {
      check_size(values.size(), n_points, name, "points");
      out << "SCALARS " << name << " double 1\n";
      out << "LOOKUP_TABLE default\n";
      for (double v : values) {
        out << fmt(v) << '\n';
      }
    }
    for (const auto& [name, values] : snapshot.point_vectors) {
      check_size(values.size(), n_points, name, "points");
      out << "VECTORS " << name << " double\n";
      for (const Vec2& v : values) {
        out << fmt(v.x) << ' ' << fmt(v.y) << " 0\n";
      }
    }
  }
  if (!snapshot.cell_scalars.empty()) {
    out << "CELL_DATA " << n_cells << '\n';
    for (const auto& [name, values] : snapshot.cell_scalars) {
      check_size(values.size(), n_cells, name, "cells");
      out << "SCALARS " << name << " double 1\n";
      out << "LOOKUP_TABLE default\n";
      for (double v : values) {
        out << fmt(v) << '\n';
      }
    }
  }
  if (!out) {
    throw VtkError("vtk stream write failed");
  }
}

void write_vtk_file(const Mesh& mesh, const VtkSnapshot& snapshot,
                    const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw VtkError("cannot open \"" + path + "\" for writing");
  }
  write_vtk(mesh, snapshot, out);
}

std::vector<double> vertex_scalar(const Space& space,
                                  const std::vector<double>& coeffs) {
  if (space.components != 1) {
    throw VtkError("vertex_scalar needs a scalar space");
  }
  std::vector<double> out(static_cast<size_t>(space.mesh->num_vertices()), 0.0);
  for (int vtx = 0; vtx < space.mesh->num_vertices(); ++vtx) {
    const int node = space.vertex_node[static_cast<size_t>(vtx)];
    if (node >= 0) {
      out[static_cast<size_t>(vtx)] = coeffs[static_cast<size_t>(node)];
    }
  }
  return out;
}

std::vector<Vec2> vertex_vector(const Space& space,
                                const std::vector<double>& coeffs) {
  if (space.components != 2) {
    throw VtkError("vertex_vector needs a vector space");
  }
  std::vector<Vec2> out(static_cast<size_t>(space.mesh->num_vertices()),
                        Vec2{});
  for (int vtx = 0; vtx < space.mesh->num_vertices(); ++vtx) {
    const int node = space.vertex_node[static_cast<size_t>(vtx)];
    if (node >= 0) {
      out[static_cast<size_t>(vtx)] =
          Vec2{coeffs[static_cast<size_t>(space.dof(node, 0))],
               coeffs[static_cast<size_t>(space.dof(node, 1))]};
    }
  }
  return out;
}

void write_series_csv(const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows,
                      std::ostream& out) {
  for (size_t i = 0; i < header.size(); ++i) {
    out << header[i] << (i + 1 < header.size() ? "," : "");
  }
  out << '\n';
  for (size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) {
      throw VtkError("series row " + std::to_string(r) + " has " +
                     std::to_string(rows[r].size()) + " cells, header has " +
                     std::to_string(header.size()));
    }
    for (size_t i = 0; i < rows[r].size(); ++i) {
      out << fmt(rows[r][i]) << (i + 1 < rows[r].size() ? "," : "");
    }
    out << '\n';
  }
  if (!out) {
    throw VtkError("csv stream write failed");
  }
}

void write_series_csv_file(const std::vector<std::string>& header,
                           const std::vector<std::vector<double>>& rows,
                           const std::string& path) {
  std::ofstream out(path);
  if (!out) {
    throw VtkError("cannot open \"" + path + "\" for writing");
  }
  write_series_csv(header, rows, out);
}

}  // namespace bstok
