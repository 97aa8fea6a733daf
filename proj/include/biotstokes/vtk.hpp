#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "biotstokes/mesh.hpp"
#include "biotstokes/spaces.hpp"

namespace bstok {

struct VtkError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// One snapshot worth of output fields.  Point data holds one value (or Vec2)
// per mesh vertex, cell data one value per cell; insertion order is the file
// order.
struct VtkSnapshot {
  std::vector<std::pair<std::string, std::vector<double>>> point_scalars;
  std::vector<std::pair<std::string, std::vector<Vec2>>> point_vectors;
  std::vector<std::pair<std::string, std::vector<double>>> cell_scalars;
};

// Legacy VTK 2.0 ASCII UNSTRUCTURED_GRID: triangle cells (type 5), planar
// points and vectors padded with a zero third component.
void write_vtk(const Mesh& mesh, const VtkSnapshot& snapshot,
               std::ostream& out);
void write_vtk_file(const Mesh& mesh, const VtkSnapshot& snapshot,
                    const std::string& path);

// Field coefficients restricted to mesh vertices (quadratic edge and bubble
// contributions drop out at vertices); vertices outside the space report 0.
std::vector<double> vertex_scalar(const Space& space,
                                  const std::vector<double>& coeffs);
std::vector<Vec2> vertex_vector(const Space& space,
                                const std::vector<double>& coeffs);

// CSV with one header row; every row must match the header width.
void write_series_csv(const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows,
                      std::ostream& out);
void write_series_csv_file(const std::vector<std::string>& header,
                           const std::vector<std::vector<double>>& rows,
                           const std::string& path);

}  // namespace bstok
