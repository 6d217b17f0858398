#include "elastrec/solve.hpp"

#include <cmath>
#include <limits>
#include <random>

#include "elastrec/errors.hpp"

namespace elastrec {

void SolverConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw InvalidArgument("lambda must be >= 0");
  if (step && (!(*step > 0.0) || !std::isfinite(*step))) {
    throw InvalidArgument("step must be positive");
  }
  if (inner_iters < 1 || outer_iters < 1) throw InvalidArgument("iteration counts must be >= 1");
  if (!(tol >= 0.0)) throw InvalidArgument("tol must be >= 0");
  if (!(e_floor > 0.0) || !std::isfinite(e_floor)) throw InvalidArgument("e_floor must be > 0");
  if (!(initial_modulus > 0.0)) throw InvalidArgument("initial modulus must be > 0");
}

ReconstructionProblem prepare_problem(const MeasurementSet& m, const Mesh& mesh,
                                      const MaterialParams& params) {
  params.validate();
  if (static_cast<std::size_t>(m.u_m.size()) != mesh.dof_count() ||
      static_cast<std::size_t>(m.f.size()) != mesh.dof_count()) {
    throw InvalidArgument("measurement vectors do not match the mesh");
  }
  if (!m.u_m.allFinite() || !m.f.allFinite()) throw InvalidArgument("measurements are not finite");
  if (!(m.sigma_n >= 0.0) || !(m.sigma_w >= 0.0)) throw InvalidArgument("negative noise level");

  ReconstructionProblem p;
  p.mesh = &mesh;
  p.params = params;
  p.D = assemble_D(mesh, m.u_m, params);
  p.K_prime = assemble_K_prime(mesh, params);
  p.b = effective_measurement(m.f, m.u_m, p.K_prime);
  p.sigma_w = floored_sigma_w(m.sigma_w, p.b);
  p.sigma_n = m.sigma_n;
  return p;
}

StepEstimate estimate_step(const SparseMatrix& D, const GammaOperator& gamma, double lambda,
                           std::uint64_t seed) {
  if (!(lambda >= 0.0)) throw InvalidArgument("lambda must be >= 0");
  if (D.rows() != gamma.size()) throw InvalidArgument("estimate_step: dimension mismatch");
  constexpr int kMinIterations = 30;
  constexpr int kMaxIterations = 100;

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(D.cols());
  for (Eigen::Index i = 0; i < v.size(); ++i) v[i] = normal(rng);
  v.normalize();

  StepEstimate est;
  double previous = 0.0;
  for (int it = 1; it <= kMaxIterations; ++it) {
    const Vector w = D.transpose() * gamma.solve(D * v);
    const double rayleigh = v.dot(w);
    est.iterations = it;
    est.lipschitz = rayleigh;
    const double wn = w.norm();
    if (wn == 0.0) {
      est.converged = true;
      break;
    }
    v = w / wn;
    if (it >= kMinIterations && std::abs(rayleigh - previous) <= 1e-4 * std::abs(rayleigh)) {
      est.converged = true;
      break;
    }
    previous = rayleigh;
  }
  const double L = est.lipschitz + lambda;
  if (!(L > 0.0) || !std::isfinite(L)) {
    throw NumericalError("cannot estimate a step size: Lipschitz bound is " + std::to_string(L));
  }
  est.step = 1.0 / L;
  return est;
}

namespace {

void check_denoiser_shape(const Denoiser& denoiser, const Mesh& mesh) {
  if (denoiser.rows() != mesh.raster_rows() || denoiser.cols() != mesh.raster_cols()) {
    throw InvalidArgument("denoiser raster shape does not match the mesh");
  }
}

ElasticityField starting_field(const ReconstructionProblem& problem, const SolverConfig& config) {
  return ElasticityField::Constant(static_cast<Eigen::Index>(problem.mesh->node_count()),
                                   std::max(config.initial_modulus, config.e_floor));
}

struct OuterState {
  std::optional<GammaOperator> gamma;
  double step = 0.0;
};

// Rebuild Gamma at the current E (the fixed-point update) and pick the step.
void refresh_outer(const ReconstructionProblem& p, const SolverConfig& config, double lambda,
                   const ElasticityField& E, int outer, OuterState& state,
                   ReconstructionResult& result) {
  GammaOperator next = build_gamma(*p.mesh, E, p.params, p.sigma_w, p.sigma_n);
  if (state.gamma) {
    result.outer_trace.push_back(SparseMatrix(next.matrix() - state.gamma->matrix()).norm());
  }
  state.gamma.emplace(std::move(next));
  if (config.step) {
    state.step = *config.step;
  } else {
    const StepEstimate est =
        estimate_step(p.D, *state.gamma, lambda, config.seed + static_cast<std::uint64_t>(outer));
    if (!est.converged) {
      result.warnings.push_back("power iteration did not converge in outer iteration " +
                                std::to_string(outer) + "; using its last estimate");
    }
    state.step = est.step;
  }
}

}  // namespace

ReconstructionResult run_red_iterations(const ReconstructionProblem& p, const Denoiser& denoiser,
                                        const SolverConfig& config, ElasticityField initial) {
  config.validate();
  check_denoiser_shape(denoiser, *p.mesh);
  if (static_cast<std::size_t>(initial.size()) != p.mesh->node_count()) {
    throw InvalidArgument("initial field does not match the mesh");
  }

  // An identity denoiser makes the prior vanish, so it adds nothing to the step bound.
  const double lambda = denoiser.is_identity() ? 0.0 : config.lambda;
  const double half_n = 0.5 * static_cast<double>(p.mesh->node_count());
  ReconstructionResult result;
  ElasticityField E = initial.cwiseMax(config.e_floor);
  OuterState state;
  Vector grad;

  for (int outer = 0; outer < config.outer_iters; ++outer) {
    refresh_outer(p, config, lambda, E, outer, state, result);
    const GammaOperator& gamma = *state.gamma;
    const ElasticityField E_start = E;

    for (int inner = 0; inner < config.inner_iters; ++inner) {
      TraceRow row;
      row.outer = outer;
      row.inner = inner;
      data_fidelity_and_gradient(E, p.b, p.D, gamma, row.g, grad);
      if (lambda > 0.0) {
        const Vector red_grad = red_gradient(denoiser, E);
        row.red = 0.5 * E.dot(red_grad);
        grad += lambda * red_grad;
      }
      const double explicit_value = row.g + lambda * row.red;
      if (!std::isfinite(explicit_value) || !grad.allFinite()) {
        result.trace.push_back(row);
        throw DivergenceError("reconstruction diverged (non-finite objective)",
                              result.trace.size());
      }
      row.objective = explicit_value + half_n * gamma.log_det();
      row.step = state.step;
      row.grad_norm = grad.norm();

      ElasticityField E_next = (E - state.step * grad).cwiseMax(config.e_floor);
      row.delta_norm = (E_next - E).norm();
      result.trace.push_back(row);
      E = std::move(E_next);
      ++result.iterations_used;
    }
    ++result.outer_iterations_used;
    if ((E - E_start).norm() <= config.tol * E_start.norm()) {
      result.converged = true;
      break;
    }
  }
  result.E_hat = std::move(E);
  return result;
}

ReconstructionResult run_pnp_iterations(const ReconstructionProblem& p, const Denoiser& denoiser,
                                        const SolverConfig& config, ElasticityField initial) {
  config.validate();
  check_denoiser_shape(denoiser, *p.mesh);
  if (static_cast<std::size_t>(initial.size()) != p.mesh->node_count()) {
    throw InvalidArgument("initial field does not match the mesh");
  }

  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  ReconstructionResult result;
  ElasticityField E = initial.cwiseMax(config.e_floor);
  OuterState state;
  Vector grad;

  for (int outer = 0; outer < config.outer_iters; ++outer) {
    refresh_outer(p, config, 0.0, E, outer, state, result);
    const ElasticityField E_start = E;

    for (int inner = 0; inner < config.inner_iters; ++inner) {
      TraceRow row;
      row.outer = outer;
      row.inner = inner;
      row.objective = nan;
      row.red = nan;
      data_fidelity_and_gradient(E, p.b, p.D, *state.gamma, row.g, grad);
      if (!std::isfinite(row.g) || !grad.allFinite()) {
        result.trace.push_back(row);
        throw DivergenceError("PnP iterations diverged", result.trace.size());
      }
      row.step = state.step;
      row.grad_norm = grad.norm();
      const Vector z = E - state.step * grad;
      ElasticityField E_next = denoiser.denoise_field(z).cwiseMax(config.e_floor);
      row.delta_norm = (E_next - E).norm();
      result.trace.push_back(row);
      E = std::move(E_next);
      ++result.iterations_used;
    }
    ++result.outer_iterations_used;
    if ((E - E_start).norm() <= config.tol * E_start.norm()) {
      result.converged = true;
      break;
    }
  }
  result.E_hat = std::move(E);
  return result;
}

ReconstructionResult reconstruct_ml(const MeasurementSet& m, const Mesh& mesh,
                                    const MaterialParams& params, const SolverConfig& config) {
  const ReconstructionProblem p = prepare_problem(m, mesh, params);
  SolverConfig ml = config;
  ml.lambda = 0.0;
  const Denoiser none = Denoiser::identity(mesh.raster_rows(), mesh.raster_cols());
  return run_red_iterations(p, none, ml, starting_field(p, ml));
}

ReconstructionResult reconstruct_red(const MeasurementSet& m, const Mesh& mesh,
                                     const MaterialParams& params, const Denoiser& denoiser,
                                     const SolverConfig& config) {
  check_denoiser_shape(denoiser, mesh);
  const ReconstructionProblem p = prepare_problem(m, mesh, params);
  ElasticityField initial = starting_field(p, config);
  if (config.warm_start) {
    SolverConfig ml = config;
    ml.lambda = 0.0;
    const Denoiser none = Denoiser::identity(mesh.raster_rows(), mesh.raster_cols());
    initial = run_red_iterations(p, none, ml, initial).E_hat;
  }
  return run_red_iterations(p, denoiser, config, std::move(initial));
}

ReconstructionResult reconstruct_postprocess(const MeasurementSet& m, const Mesh& mesh,
                                             const MaterialParams& params,
                                             const Denoiser& denoiser, const SolverConfig& config) {
  check_denoiser_shape(denoiser, mesh);
  ReconstructionResult result = reconstruct_ml(m, mesh, params, config);
  result.E_hat = denoiser.denoise_field(result.E_hat).cwiseMax(config.e_floor);
  return result;
}

ReconstructionResult reconstruct_pnp(const MeasurementSet& m, const Mesh& mesh,
                                     const MaterialParams& params, const Denoiser& denoiser,
                                     const SolverConfig& config) {
  check_denoiser_shape(denoiser, mesh);
  const ReconstructionProblem p = prepare_problem(m, mesh, params);
  ElasticityField initial = starting_field(p, config);
  if (config.warm_start) {
    SolverConfig ml = config;
    ml.lambda = 0.0;
    const Denoiser none = Denoiser::identity(mesh.raster_rows(), mesh.raster_cols());
    initial = run_red_iterations(p, none, ml, initial).E_hat;
  }
  return run_pnp_iterations(p, denoiser, config, std::move(initial));
}

}  // namespace elastrec
