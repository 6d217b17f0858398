#ifndef ELASTREC_FEM_HPP
#define ELASTREC_FEM_HPP

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "elastrec/mesh.hpp"

namespace elastrec {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Matrix6 = Eigen::Matrix<double, 6, 6>;
using Vector6 = Eigen::Matrix<double, 6, 1>;

/// Harmonic-motion material constants shared by every element.
struct MaterialParams {
  double rho = 1000.0;  ///< density, kg/m^3
  double omega = 0.0;   ///< angular frequency, rad/s
  double nu = 0.495;    ///< Poisson ratio

  static MaterialParams from_hz(double freq_hz, double rho = 1000.0, double nu = 0.495);

  /// Throws InvalidArgument unless rho > 0, omega > 0 and 0 <= nu < 0.5.
  void validate() const;
};

/// Per-element matrices in interleaved DOF order (x0, y0, x1, y1, x2, y2).
struct LocalMatrices {
  /// Plane-strain CST stiffness at unit Young's modulus; k_e(E) = E * k_hat.
  Matrix6 k_hat;
  /// -rho * omega^2 times the consistent mass matrix.
  Matrix6 k_prime;
};

/// Throws DegenerateGeometryError for slivers or inverted triangles.
LocalMatrices local_matrices(const ElementGeometry& geom, const MaterialParams& params);

/// Elastic part K(E): sum over elements of mean(E on element) * k_hat.
SparseMatrix assemble_K(const Mesh& mesh, const ElasticityField& E, const MaterialParams& params);

/// Dynamic part K' = -rho omega^2 M, independent of E.
SparseMatrix assemble_K_prime(const Mesh& mesh, const MaterialParams& params);

/// K(E) + K'.
SparseMatrix assemble_K_total(const Mesh& mesh, const ElasticityField& E,
                              const MaterialParams& params);

/**
 * 2N x N operator with D(u) * E == K(E) * u for every E.
 *
 * Column j collects one third of k_hat_e * u_e from each element touching
 * node j, which is exactly the derivative of K(E) u with respect to E_j.
 */
SparseMatrix assemble_D(const Mesh& mesh, const DeformationField& u, const MaterialParams& params);

}  // namespace elastrec

#endif  // ELASTREC_FEM_HPP
