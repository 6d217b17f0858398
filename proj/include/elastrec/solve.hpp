#ifndef ELASTREC_SOLVE_HPP
#define ELASTREC_SOLVE_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "elastrec/denoise.hpp"
#include "elastrec/fem.hpp"
#include "elastrec/mesh.hpp"
#include "elastrec/simulate.hpp"
#include "elastrec/statmodel.hpp"

namespace elastrec {

struct SolverConfig {
  double lambda = 0.0;
  std::optional<double> step;  ///< fixed GD step; empty selects estimate_step
  int inner_iters = 50;
  int outer_iters = 10;
  double tol = 1e-5;      ///< relative change of E over one outer iteration
  double e_floor = 100.0; ///< positivity floor, Pa
  std::uint64_t seed = 0;
  /// RED and PnP start from the ML estimate; otherwise from `initial_modulus`.
  bool warm_start = true;
  double initial_modulus = kBackgroundMidpoint;

  void validate() const;
};

struct TraceRow {
  int outer = 0;
  int inner = 0;
  double objective = 0.0;  ///< g + (N/2) log|Gamma| + lambda R; NaN for PnP
  double g = 0.0;
  double red = 0.0;        ///< R(E); 0 when lambda is 0, NaN for PnP
  double step = 0.0;
  double grad_norm = 0.0;
  double delta_norm = 0.0; ///< |E_{k+1} - E_k|
};

struct ReconstructionResult {
  ElasticityField E_hat;
  std::vector<TraceRow> trace;
  /// Frobenius norm of Gamma_k - Gamma_{k-1} for every rebuild after the first.
  std::vector<double> outer_trace;
  int iterations_used = 0;
  int outer_iterations_used = 0;
  bool converged = false;
  std::vector<std::string> warnings;
};

/// Everything the iterations need that does not depend on E.
struct ReconstructionProblem {
  const Mesh* mesh = nullptr;
  MaterialParams params;
  SparseMatrix D;        ///< D(u_m)
  SparseMatrix K_prime;
  Vector b;              ///< f - K' u_m
  double sigma_w = 0.0;  ///< floored
  double sigma_n = 0.0;
};

ReconstructionProblem prepare_problem(const MeasurementSet& m, const Mesh& mesh,
                                      const MaterialParams& params);

struct StepEstimate {
  double step = 0.0;
  double lipschitz = 0.0;  ///< largest eigenvalue of D^T Gamma^{-1} D
  int iterations = 0;
  bool converged = false;
};

/// 1 / (L_g + lambda), L_g by power iteration (30 to 100 sweeps, 1e-4 relative).
StepEstimate estimate_step(const SparseMatrix& D, const GammaOperator& gamma, double lambda,
                           std::uint64_t seed = 0);

ReconstructionResult reconstruct_ml(const MeasurementSet& m, const Mesh& mesh,
                                    const MaterialParams& params, const SolverConfig& config);

ReconstructionResult reconstruct_red(const MeasurementSet& m, const Mesh& mesh,
                                     const MaterialParams& params, const Denoiser& denoiser,
                                     const SolverConfig& config);

ReconstructionResult reconstruct_postprocess(const MeasurementSet& m, const Mesh& mesh,
                                             const MaterialParams& params,
                                             const Denoiser& denoiser, const SolverConfig& config);

ReconstructionResult reconstruct_pnp(const MeasurementSet& m, const Mesh& mesh,
                                     const MaterialParams& params, const Denoiser& denoiser,
                                     const SolverConfig& config);

/// Iterations from an explicit starting field, used by the entry points above.
ReconstructionResult run_red_iterations(const ReconstructionProblem& problem,
                                        const Denoiser& denoiser, const SolverConfig& config,
                                        ElasticityField initial);
ReconstructionResult run_pnp_iterations(const ReconstructionProblem& problem,
                                        const Denoiser& denoiser, const SolverConfig& config,
                                        ElasticityField initial);

}  // namespace elastrec

#endif  // ELASTREC_SOLVE_HPP
