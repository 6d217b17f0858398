#include "elastrec/mesh.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "elastrec/errors.hpp"

namespace elastrec {

Mesh::Mesh(std::size_t nx, std::size_t ny, double width, double height)
    : nx_(nx), ny_(ny), width_(width), height_(height) {
  if (nx == 0 || ny == 0) {
    throw InvalidArgument("mesh cell counts must be positive");
  }
  if (!(width > 0.0) || !(height > 0.0) || !std::isfinite(width) ||
      !std::isfinite(height)) {
    throw InvalidArgument("mesh extent must be positive and finite");
  }

  const double dx = width / static_cast<double>(nx);
  const double dy = height / static_cast<double>(ny);

  nodes_.reserve((nx + 1) * (ny + 1));
  for (std::size_t row = 0; row <= ny; ++row) {
    for (std::size_t col = 0; col <= nx; ++col) {
      nodes_.push_back({static_cast<double>(col) * dx,
                        height - static_cast<double>(row) * dy});
    }
  }

  elements_.reserve(2 * nx * ny);
  for (std::size_t row = 0; row < ny; ++row) {
    for (std::size_t col = 0; col < nx; ++col) {
      const std::size_t upper_left = node_index(row, col);
      const std::size_t upper_right = node_index(row, col + 1);
      const std::size_t lower_left = node_index(row + 1, col);
      const std::size_t lower_right = node_index(row + 1, col + 1);
      if (cell_uses_anti_diagonal(row, col)) {
        elements_.push_back({lower_left, lower_right, upper_left});
        elements_.push_back({lower_right, upper_right, upper_left});
      } else {
        elements_.push_back({lower_left, lower_right, upper_right});
        elements_.push_back({lower_left, upper_right, upper_left});
      }
    }
  }

  for (std::size_t col = 0; col <= nx; ++col) {
    boundary_.top.push_back(node_index(0, col));
    boundary_.bottom.push_back(node_index(ny, col));
  }
  for (std::size_t row = 0; row <= ny; ++row) {
    boundary_.left.push_back(node_index(row, 0));
    boundary_.right.push_back(node_index(row, nx));
  }
}

Mesh build_grid_mesh(std::size_t nx, std::size_t ny, double width, double height) {
  return Mesh(nx, ny, width, height);
}

ElementGeometry triangle_geometry(const Point& p0, const Point& p1, const Point& p2) {
  // Twice the signed area.
  const double det = (p1.x - p0.x) * (p2.y - p0.y) - (p2.x - p0.x) * (p1.y - p0.y);
  ElementGeometry geom;
  geom.area = 0.5 * det;
  if (det == 0.0) {
    geom.shape_gradients.setZero();
    return geom;
  }
  geom.shape_gradients << (p1.y - p2.y) / det, (p2.x - p1.x) / det,
      (p2.y - p0.y) / det, (p0.x - p2.x) / det,
      (p0.y - p1.y) / det, (p1.x - p0.x) / det;
  return geom;
}

ElementGeometry element_geometry(const Mesh& mesh, std::size_t e) {
  if (e >= mesh.element_count()) {
    throw std::out_of_range("element index " + std::to_string(e) + " out of range");
  }
  const Triangle& tri = mesh.element(e);
  return triangle_geometry(mesh.node(tri[0]), mesh.node(tri[1]), mesh.node(tri[2]));
}

std::vector<double> nodal_to_raster(const Mesh& mesh, const Vector& nodal) {
  if (static_cast<std::size_t>(nodal.size()) != mesh.node_count()) {
    throw InvalidArgument("nodal vector length does not match mesh");
  }
  return std::vector<double>(nodal.data(), nodal.data() + nodal.size());
}

Vector raster_to_nodal(const Mesh& mesh, const std::vector<double>& raster) {
  if (raster.size() != mesh.node_count()) {
    throw InvalidArgument("raster size does not match mesh");
  }
  return Eigen::Map<const Vector>(raster.data(), static_cast<Eigen::Index>(raster.size()));
}

}  // namespace elastrec
