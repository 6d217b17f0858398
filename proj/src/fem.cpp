#include "elastrec/fem.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "elastrec/errors.hpp"

namespace elastrec {

namespace {

using Triplet = Eigen::Triplet<double>;

double max_edge_squared(const Mesh& mesh, const Triangle& tri) {
  double longest = 0.0;
  for (int a = 0; a < 3; ++a) {
    const Point& p = mesh.node(tri[a]);
    const Point& q = mesh.node(tri[(a + 1) % 3]);
    longest = std::max(longest, (p.x - q.x) * (p.x - q.x) + (p.y - q.y) * (p.y - q.y));
  }
  return longest;
}

std::vector<LocalMatrices> all_local_matrices(const Mesh& mesh, const MaterialParams& params) {
  params.validate();
  std::vector<LocalMatrices> out;
  out.reserve(mesh.element_count());
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const ElementGeometry geom = element_geometry(mesh, e);
    if (geom.area <= 1e-12 * max_edge_squared(mesh, mesh.element(e))) {
      throw DegenerateGeometryError("element " + std::to_string(e) + " is degenerate");
    }
    out.push_back(local_matrices(geom, params));
  }
  return out;
}

void check_nodal(const Mesh& mesh, const Vector& v, std::size_t per_node, const char* name) {
  if (static_cast<std::size_t>(v.size()) != per_node * mesh.node_count()) {
    throw InvalidArgument(std::string(name) + " has length " + std::to_string(v.size()) +
                          ", expected " + std::to_string(per_node * mesh.node_count()));
  }
}

}  // namespace

MaterialParams MaterialParams::from_hz(double freq_hz, double rho, double nu) {
  MaterialParams p;
  p.rho = rho;
  p.omega = 2.0 * std::numbers::pi * freq_hz;
  p.nu = nu;
  p.validate();
  return p;
}

void MaterialParams::validate() const {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidArgument("rho must be positive");
  if (!(omega > 0.0) || !std::isfinite(omega)) throw InvalidArgument("omega must be positive");
  if (!(nu >= 0.0 && nu < 0.5)) throw InvalidArgument("Poisson ratio must lie in [0, 0.5)");
}

LocalMatrices local_matrices(const ElementGeometry& geom, const MaterialParams& params) {
  if (!(geom.area > 0.0) || !std::isfinite(geom.area)) {
    throw DegenerateGeometryError("element area must be positive");
  }

  Eigen::Matrix<double, 3, 6> B = Eigen::Matrix<double, 3, 6>::Zero();
  for (int a = 0; a < 3; ++a) {
    const double bx = geom.shape_gradients(a, 0);
    const double by = geom.shape_gradients(a, 1);
    B(0, 2 * a) = bx;
    B(1, 2 * a + 1) = by;
    B(2, 2 * a) = by;
    B(2, 2 * a + 1) = bx;
  }

  // Plane strain, unit Young's modulus.
  const double nu = params.nu;
  const double scale = 1.0 / ((1.0 + nu) * (1.0 - 2.0 * nu));
  Eigen::Matrix3d C;
  C << 1.0 - nu, nu, 0.0,
       nu, 1.0 - nu, 0.0,
       0.0, 0.0, 0.5 * (1.0 - 2.0 * nu);
  C *= scale;

  LocalMatrices out;
  out.k_hat = geom.area * (B.transpose() * C * B);
  out.k_hat = 0.5 * (out.k_hat + out.k_hat.transpose()).eval();

  const double dyn = -params.rho * params.omega * params.omega;
  out.k_prime.setZero();
  for (int a = 0; a < 3; ++a) {
    for (int b = 0; b < 3; ++b) {
      const double m = geom.area * (a == b ? 1.0 / 6.0 : 1.0 / 12.0);
      out.k_prime(2 * a, 2 * b) = dyn * m;
      out.k_prime(2 * a + 1, 2 * b + 1) = dyn * m;
    }
  }
  return out;
}

SparseMatrix assemble_K(const Mesh& mesh, const ElasticityField& E, const MaterialParams& params) {
  check_nodal(mesh, E, 1, "elasticity field");
  for (Eigen::Index i = 0; i < E.size(); ++i) {
    if (!(E[i] > 0.0) || !std::isfinite(E[i])) {
      throw InvalidArgument("elasticity must be positive at node " + std::to_string(i));
    }
  }
  const auto locals = all_local_matrices(mesh, params);

  std::vector<Triplet> triplets;
  triplets.reserve(36 * mesh.element_count());
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const Triangle& tri = mesh.element(e);
    const double e_mean = (E[tri[0]] + E[tri[1]] + E[tri[2]]) / 3.0;
    for (int i = 0; i < 6; ++i) {
      for (int j = 0; j < 6; ++j) {
        triplets.emplace_back(2 * tri[i / 2] + i % 2, 2 * tri[j / 2] + j % 2,
                              e_mean * locals[e].k_hat(i, j));
      }
    }
  }
  const auto dofs = static_cast<Eigen::Index>(mesh.dof_count());
  SparseMatrix K(dofs, dofs);
  K.setFromTriplets(triplets.begin(), triplets.end());
  return K;
}

SparseMatrix assemble_K_prime(const Mesh& mesh, const MaterialParams& params) {
  const auto locals = all_local_matrices(mesh, params);
  std::vector<Triplet> triplets;
  triplets.reserve(12 * mesh.element_count());
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const Triangle& tri = mesh.element(e);
    for (int i = 0; i < 6; ++i) {
      for (int j = i % 2; j < 6; j += 2) {
        triplets.emplace_back(2 * tri[i / 2] + i % 2, 2 * tri[j / 2] + j % 2,
                              locals[e].k_prime(i, j));
      }
    }
  }
  const auto dofs = static_cast<Eigen::Index>(mesh.dof_count());
  SparseMatrix Kp(dofs, dofs);
  Kp.setFromTriplets(triplets.begin(), triplets.end());
  return Kp;
}

SparseMatrix assemble_K_total(const Mesh& mesh, const ElasticityField& E,
                              const MaterialParams& params) {
  SparseMatrix K = assemble_K(mesh, E, params);
  K += assemble_K_prime(mesh, params);
  return K;
}

SparseMatrix assemble_D(const Mesh& mesh, const DeformationField& u, const MaterialParams& params) {
  check_nodal(mesh, u, 2, "deformation field");
  const auto locals = all_local_matrices(mesh, params);

  std::vector<Triplet> triplets;
  triplets.reserve(18 * mesh.element_count());
  for (std::size_t e = 0; e < mesh.element_count(); ++e) {
    const Triangle& tri = mesh.element(e);
    Vector6 u_e;
    for (int a = 0; a < 3; ++a) {
      u_e[2 * a] = u[2 * tri[a]];
      u_e[2 * a + 1] = u[2 * tri[a] + 1];
    }
    const Vector6 force = locals[e].k_hat * u_e / 3.0;
    for (int node = 0; node < 3; ++node) {
      for (int i = 0; i < 6; ++i) {
        triplets.emplace_back(2 * tri[i / 2] + i % 2, tri[node], force[i]);
      }
    }
  }
  SparseMatrix D(static_cast<Eigen::Index>(mesh.dof_count()),
                 static_cast<Eigen::Index>(mesh.node_count()));
  D.setFromTriplets(triplets.begin(), triplets.end());
  return D;
}

}  // namespace elastrec
