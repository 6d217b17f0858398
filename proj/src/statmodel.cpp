#include "elastrec/statmodel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "elastrec/denoise.hpp"
#include "elastrec/errors.hpp"

namespace elastrec {

GammaOperator::GammaOperator(SparseMatrix gamma, ElasticityField anchor,
                             Eigen::Index direct_limit)
    : gamma_(std::move(gamma)), anchor_(std::move(anchor)) {
  if (gamma_.rows() != gamma_.cols() || gamma_.rows() == 0) {
    throw InvalidArgument("covariance must be a nonempty square matrix");
  }
  gamma_.makeCompressed();
  if (gamma_.rows() <= direct_limit) {
    llt_ = std::make_unique<Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower>>();
    llt_->compute(gamma_);
    if (llt_->info() != Eigen::Success) {
      throw NumericalError("covariance factorization failed (matrix not positive definite)");
    }
    const SparseMatrix L = llt_->matrixL();
    log_det_ = 0.0;
    for (Eigen::Index k = 0; k < L.outerSize(); ++k) {
      log_det_ += 2.0 * std::log(L.coeff(k, k));
    }
  } else {
    cg_ = std::make_unique<Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper>>();
    cg_->setTolerance(1e-10);
    cg_->compute(gamma_);
    if (cg_->info() != Eigen::Success) {
      throw NumericalError("covariance preconditioner setup failed");
    }
    log_det_ = std::numeric_limits<double>::quiet_NaN();
  }
}

Vector GammaOperator::solve(const Vector& rhs) const {
  if (rhs.size() != gamma_.rows()) throw InvalidArgument("covariance solve: length mismatch");
  if (llt_) return llt_->solve(rhs);
  Vector x = cg_->solve(rhs);
  if (cg_->info() != Eigen::Success) {
    throw NumericalError("covariance CG solve did not converge");
  }
  return x;
}

GammaOperator build_gamma(const Mesh& mesh, const ElasticityField& E,
                          const MaterialParams& params, double sigma_w, double sigma_n) {
  if (!(sigma_w > 0.0) || !std::isfinite(sigma_w)) {
    throw InvalidArgument("sigma_w must be positive");
  }
  if (!(sigma_n >= 0.0) || !std::isfinite(sigma_n)) {
    throw InvalidArgument("sigma_n must be non-negative");
  }
  const auto dofs = static_cast<Eigen::Index>(mesh.dof_count());
  SparseMatrix identity(dofs, dofs);
  identity.setIdentity();

  SparseMatrix gamma = (sigma_w * sigma_w) * identity;
  if (sigma_n > 0.0) {
    const SparseMatrix K = assemble_K_total(mesh, E, params);
    const SparseMatrix KKt = K * SparseMatrix(K.transpose());
    gamma += (sigma_n * sigma_n) * KKt;
    // Product round-off can leave asymmetry at the ulp level.
    gamma = 0.5 * (gamma + SparseMatrix(gamma.transpose()));
  }
  return GammaOperator(std::move(gamma), E);
}

double floored_sigma_w(double sigma_w, const Vector& b) {
  if (sigma_w > 0.0) return sigma_w;
  const double floor = 1e-12 * b.norm() / std::sqrt(static_cast<double>(std::max<Eigen::Index>(b.size(), 1)));
  return floor > 0.0 ? floor : 1e-300;
}

Vector effective_measurement(const ForceVector& f, const DeformationField& u_m,
                             const SparseMatrix& K_prime) {
  if (f.size() != u_m.size() || K_prime.rows() != f.size() || K_prime.cols() != u_m.size()) {
    throw InvalidArgument("effective measurement: dimension mismatch");
  }
  return f - K_prime * u_m;
}

namespace {

void check_dims(const ElasticityField& E, const Vector& b, const SparseMatrix& D,
                const GammaOperator& gamma) {
  if (D.cols() != E.size() || D.rows() != b.size() || gamma.size() != b.size()) {
    throw InvalidArgument("data fidelity: dimension mismatch");
  }
}

}  // namespace

double data_fidelity(const ElasticityField& E, const Vector& b, const SparseMatrix& D,
                     const GammaOperator& gamma) {
  check_dims(E, b, D, gamma);
  const Vector r = b - D * E;
  return 0.5 * r.dot(gamma.solve(r));
}

Vector data_fidelity_gradient(const ElasticityField& E, const Vector& b, const SparseMatrix& D,
                              const GammaOperator& gamma) {
  check_dims(E, b, D, gamma);
  const Vector r = b - D * E;
  return -(D.transpose() * gamma.solve(r));
}

void data_fidelity_and_gradient(const ElasticityField& E, const Vector& b, const SparseMatrix& D,
                                const GammaOperator& gamma, double& value, Vector& gradient) {
  check_dims(E, b, D, gamma);
  const Vector r = b - D * E;
  const Vector weighted = gamma.solve(r);
  value = 0.5 * r.dot(weighted);
  gradient = -(D.transpose() * weighted);
}

double objective(const ElasticityField& E, const Vector& b, const SparseMatrix& D,
                 const GammaOperator& gamma, double lambda, const Denoiser& denoiser) {
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be non-negative");
  const double n = static_cast<double>(E.size());
  double value = data_fidelity(E, b, D, gamma) + 0.5 * n * gamma.log_det();
  if (lambda > 0.0) value += lambda * red_value(denoiser, E);
  return value;
}

}  // namespace elastrec
