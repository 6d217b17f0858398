#ifndef ELASTREC_MESH_HPP
#define ELASTREC_MESH_HPP

#include <array>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace elastrec {

using Vector = Eigen::VectorXd;

/// Nodal Young's modulus, pascals. Length N.
using ElasticityField = Vector;
/// Nodal displacement, two components per node (2i lateral, 2i+1 axial).
using DeformationField = Vector;
using ForceVector = Vector;

struct Point {
  double x = 0.0;
  double y = 0.0;
};

using Triangle = std::array<std::size_t, 3>;

struct BoundarySets {
  std::vector<std::size_t> top;
  std::vector<std::size_t> bottom;
  std::vector<std::size_t> left;
  std::vector<std::size_t> right;
};

/**
 * Regular triangulation of a width x height rectangle.
 *
 * Nodes are numbered row-major with row 0 on the top edge, so node
 * `row * (nx + 1) + col` is raster pixel (row, col) of a (ny+1) x (nx+1)
 * image. Cells are split along the lower-left to upper-right diagonal,
 * except cells with (row + col) % 3 == 0, which use the other diagonal. Both
 * triangles are stored counter-clockwise (y points up).
 *
 * With a single diagonal orientation the triangulation is 3-colourable, and
 * a nodal field whose three colour classes sum to zero has zero mean on every
 * element. The mixed pattern removes that two-dimensional null space of the
 * nodal-to-element averaging.
 */
class Mesh {
 public:
  Mesh(std::size_t nx, std::size_t ny, double width, double height);

  std::size_t nx() const { return nx_; }
  std::size_t ny() const { return ny_; }
  double width() const { return width_; }
  double height() const { return height_; }

  std::size_t node_count() const { return nodes_.size(); }
  std::size_t element_count() const { return elements_.size(); }
  std::size_t dof_count() const { return 2 * nodes_.size(); }

  std::size_t raster_rows() const { return ny_ + 1; }
  std::size_t raster_cols() const { return nx_ + 1; }

  static bool cell_uses_anti_diagonal(std::size_t row, std::size_t col) {
    return (row + col) % 3 == 0;
  }

  std::size_t node_index(std::size_t row, std::size_t col) const {
    return row * (nx_ + 1) + col;
  }

  const std::vector<Point>& nodes() const { return nodes_; }
  const std::vector<Triangle>& elements() const { return elements_; }
  const Point& node(std::size_t i) const { return nodes_[i]; }
  const Triangle& element(std::size_t e) const { return elements_.at(e); }
  const BoundarySets& boundary() const { return boundary_; }

 private:
  std::size_t nx_;
  std::size_t ny_;
  double width_;
  double height_;
  std::vector<Point> nodes_;
  std::vector<Triangle> elements_;
  BoundarySets boundary_;
};

/// Throws InvalidArgument on zero cell counts or non-positive extent.
Mesh build_grid_mesh(std::size_t nx, std::size_t ny, double width, double height);

struct ElementGeometry {
  double area = 0.0;
  /// Row a holds the gradient of the linear shape function of vertex a.
  Eigen::Matrix<double, 3, 2> shape_gradients;
};

/// Signed-area geometry of a single triangle; area is negative for clockwise input.
ElementGeometry triangle_geometry(const Point& p0, const Point& p1, const Point& p2);

/// Throws std::out_of_range for an invalid element index.
ElementGeometry element_geometry(const Mesh& mesh, std::size_t e);

/// Nodal vector -> row-major raster values. A no-op reorder given the numbering.
std::vector<double> nodal_to_raster(const Mesh& mesh, const Vector& nodal);
Vector raster_to_nodal(const Mesh& mesh, const std::vector<double>& raster);

}  // namespace elastrec

#endif  // ELASTREC_MESH_HPP
