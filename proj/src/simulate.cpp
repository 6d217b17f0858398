#include "elastrec/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <string>

#include <Eigen/SparseLU>

#include "elastrec/errors.hpp"

namespace elastrec {

void PhantomSpec::validate() const {
  if (lesion_count_min < 0 || lesion_count_max < lesion_count_min) {
    throw InvalidArgument("invalid lesion count range");
  }
  if (!(background_min > 0.0) || background_max < background_min) {
    throw InvalidArgument("invalid background modulus range");
  }
  if (lesion_count_max == 0) return;
  if (!(radius_min > 0.0) || radius_max < radius_min) {
    throw InvalidArgument("invalid lesion radius range");
  }
  if (radius_max > 0.5) {
    throw InvalidArgument("lesion radius exceeds the domain");
  }
  if (lesion_max < lesion_min || lesion_min <= background_max) {
    throw InvalidArgument("lesion moduli must lie strictly above the background range");
  }
  if (lesion_min / background_max < 2.0 || lesion_max / background_min > 8.0) {
    throw InvalidArgument("lesion/background contrast must stay within [2, 8]");
  }
}

Phantom generate_phantom_detailed(const Mesh& mesh, const PhantomSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(spec.seed);
  auto uniform = [&rng](double lo, double hi) {
    return lo + (hi - lo) * std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  };

  Phantom phantom;
  phantom.background = uniform(spec.background_min, spec.background_max);
  phantom.field = ElasticityField::Constant(static_cast<Eigen::Index>(mesh.node_count()),
                                            phantom.background);

  const int count =
      std::uniform_int_distribution<int>(spec.lesion_count_min, spec.lesion_count_max)(rng);
  const double side = std::min(mesh.width(), mesh.height());
  const double dx = mesh.width() / static_cast<double>(mesh.nx());
  const double dy = mesh.height() / static_cast<double>(mesh.ny());

  for (int k = 0; k < count; ++k) {
    Lesion lesion;
    const double r1 = uniform(spec.radius_min, spec.radius_max) * side;
    const double r2 = uniform(spec.radius_min, spec.radius_max) * side;
    lesion.semi_major = std::max(r1, r2);
    lesion.semi_minor = std::min(r1, r2);
    lesion.angle = uniform(0.0, std::numbers::pi);
    const double margin = lesion.semi_minor;
    lesion.center = {uniform(margin, mesh.width() - margin),
                     uniform(margin, mesh.height() - margin)};
    lesion.modulus = uniform(spec.lesion_min, spec.lesion_max);

    const double c = std::cos(lesion.angle);
    const double s = std::sin(lesion.angle);
    for (std::size_t i = 0; i < mesh.node_count(); ++i) {
      const double px = mesh.node(i).x - lesion.center.x;
      const double py = mesh.node(i).y - lesion.center.y;
      const double along = (c * px + s * py) / lesion.semi_major;
      const double across = (-s * px + c * py) / lesion.semi_minor;
      if (along * along + across * across <= 1.0) {
        phantom.field[static_cast<Eigen::Index>(i)] = lesion.modulus;
      }
    }

    // Coarse meshes can miss a small ellipse; its nearest node always carries it.
    const auto col = static_cast<std::size_t>(std::lround(lesion.center.x / dx));
    const auto row = static_cast<std::size_t>(std::lround((mesh.height() - lesion.center.y) / dy));
    lesion.center_node =
        mesh.node_index(std::min(row, mesh.ny()), std::min(col, mesh.nx()));
    phantom.field[static_cast<Eigen::Index>(lesion.center_node)] = lesion.modulus;
    phantom.lesions.push_back(lesion);
  }
  return phantom;
}

ElasticityField generate_phantom(const Mesh& mesh, const PhantomSpec& spec) {
  return generate_phantom_detailed(mesh, spec).field;
}

ForwardSolution forward_solve(const Mesh& mesh, const ElasticityField& E,
                              const MaterialParams& params, double excitation) {
  if (!std::isfinite(excitation)) throw InvalidArgument("excitation must be finite");
  const SparseMatrix K = assemble_K_total(mesh, E, params);
  const auto dofs = static_cast<Eigen::Index>(mesh.dof_count());

  // Driven DOFs: both components of every top-edge node.
  Vector prescribed = Vector::Zero(dofs);
  std::vector<char> is_fixed(static_cast<std::size_t>(dofs), 0);
  for (std::size_t node : mesh.boundary().top) {
    is_fixed[2 * node] = 1;
    is_fixed[2 * node + 1] = 1;
    prescribed[static_cast<Eigen::Index>(2 * node + 1)] = excitation;
  }
  std::vector<Eigen::Index> free_index(static_cast<std::size_t>(dofs), -1);
  std::vector<Eigen::Index> free_dofs;
  for (Eigen::Index i = 0; i < dofs; ++i) {
    if (!is_fixed[static_cast<std::size_t>(i)]) {
      free_index[static_cast<std::size_t>(i)] = static_cast<Eigen::Index>(free_dofs.size());
      free_dofs.push_back(i);
    }
  }

  ForwardSolution sol;
  sol.u = prescribed;
  if (excitation == 0.0) {
    sol.f = Vector::Zero(dofs);
    return sol;
  }

  const auto n_free = static_cast<Eigen::Index>(free_dofs.size());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(K.nonZeros()));
  Vector rhs = Vector::Zero(n_free);
  for (Eigen::Index col = 0; col < K.outerSize(); ++col) {
    for (SparseMatrix::InnerIterator it(K, col); it; ++it) {
      const Eigen::Index r = free_index[static_cast<std::size_t>(it.row())];
      if (r < 0) continue;
      const Eigen::Index c = free_index[static_cast<std::size_t>(col)];
      if (c >= 0) {
        triplets.emplace_back(r, c, it.value());
      } else {
        rhs[r] -= it.value() * prescribed[col];
      }
    }
  }
  SparseMatrix K_ff(n_free, n_free);
  K_ff.setFromTriplets(triplets.begin(), triplets.end());
  K_ff.makeCompressed();

  Eigen::SparseLU<SparseMatrix> lu;
  lu.compute(K_ff);
  if (lu.info() != Eigen::Success) {
    throw ResonanceError("harmonic system is singular at omega = " +
                         std::to_string(params.omega) +
                         " rad/s; choose a different frequency or mesh");
  }
  const Vector u_free = lu.solve(rhs);
  if (lu.info() != Eigen::Success || !u_free.allFinite()) {
    throw ResonanceError("harmonic solve failed; choose a different frequency or mesh");
  }
  for (Eigen::Index k = 0; k < n_free; ++k) sol.u[free_dofs[static_cast<std::size_t>(k)]] = u_free[k];

  sol.f = K * sol.u;
  double free_residual = 0.0;
  for (Eigen::Index i : free_dofs) free_residual += sol.f[i] * sol.f[i];
  sol.relative_residual = std::sqrt(free_residual) / sol.f.norm();
  if (!(sol.relative_residual <= 1e-8)) {
    throw ResonanceError("harmonic solve residual " + std::to_string(sol.relative_residual) +
                         " too large; the system is near resonance");
  }
  return sol;
}

double snr_to_sigma(const Vector& x, double snr_db) {
  if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity()) {
    throw InvalidArgument("SNR must be finite or +inf");
  }
  if (x.size() == 0 || x.squaredNorm() == 0.0) {
    throw InvalidArgument("SNR is undefined for a zero signal");
  }
  if (snr_db == std::numeric_limits<double>::infinity()) return 0.0;
  return std::sqrt(x.squaredNorm() /
                   (static_cast<double>(x.size()) * std::pow(10.0, snr_db / 10.0)));
}

MeasurementSet synthesize_measurements(const DeformationField& u, const ForceVector& f,
                                       double snr_u_db, double snr_f_db, std::uint64_t seed) {
  if (u.size() != f.size()) throw InvalidArgument("u and f lengths differ");
  MeasurementSet m;
  m.seed = seed;
  m.sigma_n = snr_to_sigma(u, snr_u_db);
  m.sigma_w = snr_to_sigma(f, snr_f_db);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  m.u_m = u;
  for (Eigen::Index i = 0; i < u.size(); ++i) m.u_m[i] += m.sigma_n * normal(rng);
  m.f = f;
  for (Eigen::Index i = 0; i < f.size(); ++i) m.f[i] += m.sigma_w * normal(rng);
  return m;
}

}  // namespace elastrec
