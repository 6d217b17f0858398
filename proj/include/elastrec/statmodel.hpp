#ifndef ELASTREC_STATMODEL_HPP
#define ELASTREC_STATMODEL_HPP

#include <memory>

#include <Eigen/SparseCholesky>
#include <Eigen/IterativeLinearSolvers>

#include "elastrec/fem.hpp"
#include "elastrec/mesh.hpp"

namespace elastrec {

class Denoiser;

/**
 * Covariance of the effective noise sigma_w^2 I + sigma_n^2 K_tot K_tot^T,
 * factorized once and then used for repeated solves.
 *
 * Systems up to `direct_limit` DOFs use a sparse Cholesky factorization;
 * larger ones fall back to conjugate gradients (tolerance 1e-10), in which
 * case log_det() returns NaN.
 */
class GammaOperator {
 public:
  static constexpr Eigen::Index kDefaultDirectLimit = 60000;

  /// `gamma` must be symmetric positive definite.
  explicit GammaOperator(SparseMatrix gamma, ElasticityField anchor = {},
                         Eigen::Index direct_limit = kDefaultDirectLimit);

  GammaOperator(const GammaOperator&) = delete;
  GammaOperator& operator=(const GammaOperator&) = delete;
  GammaOperator(GammaOperator&&) noexcept = default;
  GammaOperator& operator=(GammaOperator&&) noexcept = default;

  Vector solve(const Vector& rhs) const;
  double log_det() const { return log_det_; }
  bool is_direct() const { return static_cast<bool>(llt_); }
  Eigen::Index size() const { return gamma_.rows(); }
  const SparseMatrix& matrix() const { return gamma_; }
  const ElasticityField& anchor() const { return anchor_; }

 private:
  SparseMatrix gamma_;
  ElasticityField anchor_;
  std::unique_ptr<Eigen::SimplicialLLT<SparseMatrix, Eigen::Lower>> llt_;
  std::unique_ptr<Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower | Eigen::Upper>> cg_;
  double log_det_ = 0.0;
};

/// Requires sigma_w > 0 and sigma_n >= 0. Throws NumericalError if the
/// factorization fails.
GammaOperator build_gamma(const Mesh& mesh, const ElasticityField& E,
                          const MaterialParams& params, double sigma_w, double sigma_n);

/// sigma_w, or 1e-12 * |b| / sqrt(len b) when sigma_w is zero.
double floored_sigma_w(double sigma_w, const Vector& b);

/// b = f - K' u_m, the part of the force explained by D(u_m) E.
Vector effective_measurement(const ForceVector& f, const DeformationField& u_m,
                             const SparseMatrix& K_prime);

/// 0.5 r^T Gamma^{-1} r with r = b - D E.
double data_fidelity(const ElasticityField& E, const Vector& b, const SparseMatrix& D,
                     const GammaOperator& gamma);

/// -D^T Gamma^{-1} (b - D E).
Vector data_fidelity_gradient(const ElasticityField& E, const Vector& b, const SparseMatrix& D,
                              const GammaOperator& gamma);

/// Both in one residual solve; `value` and `gradient` are outputs.
void data_fidelity_and_gradient(const ElasticityField& E, const Vector& b, const SparseMatrix& D,
                                const GammaOperator& gamma, double& value, Vector& gradient);

/// g(E) + (N/2) log|Gamma| + lambda R_RED(E), N the node count.
double objective(const ElasticityField& E, const Vector& b, const SparseMatrix& D,
                 const GammaOperator& gamma, double lambda, const Denoiser& denoiser);

}  // namespace elastrec

#endif  // ELASTREC_STATMODEL_HPP
